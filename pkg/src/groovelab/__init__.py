"""groovelab: train a small VAE on your own drum MIDI and play its latent space."""

__version__ = "0.1.0"
