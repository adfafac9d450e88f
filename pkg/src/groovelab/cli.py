"""Command-line workbench: train, generate, sweep, inspect, serve."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import click
import numpy as np

from . import vae
from .encoding import Pattern, RhythmTensor, encode_pattern, quantize_notes, window_patterns
from .midi import DrumClass, DrumMap, MidiError, extract_drum_notes, parse_smf, write_smf


def _load_drum_map(path: str | None) -> DrumMap:
    if path is None:
        return DrumMap.default()
    return DrumMap.from_text(Path(path).read_text(encoding="utf-8"))


def load_corpus_dir(
    directory: Path, drum_map: DrumMap
) -> tuple[list[RhythmTensor], list[tuple[str, int | str]]]:
    """Parse every .mid/.midi under a directory into rhythm tensors.

    Returns (tensors, per-file report); a report entry is (name, count) or
    (name, error message). Bad files do not abort the batch.
    """
    tensors: list[RhythmTensor] = []
    reports: list[tuple[str, int | str]] = []
    paths = sorted(p for p in directory.rglob("*") if p.suffix.lower() in (".mid", ".midi"))
    for path in paths:
        try:
            midi = parse_smf(path.read_bytes())
            notes = extract_drum_notes(midi)
            onsets = quantize_notes(notes, midi.ppq, drum_map)
            patterns = window_patterns(onsets)
            file_tensors = [encode_pattern(p) for p in patterns]
            tensors.extend(file_tensors)
            reports.append((path.name, len(file_tensors)))
        except (MidiError, ValueError) as exc:
            reports.append((path.name, f"error: {exc}"))
    return tensors, reports


def _parse_z(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise click.BadParameter(f"expected Z1,Z2 but got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise click.BadParameter(f"non-numeric latent coordinate in {text!r}")


@click.group()
def main() -> None:
    """Rhythm-generation workbench: train a small VAE on drum MIDI and explore it."""


@main.command()
@click.argument("midi_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--kl-beta", default=1.0, show_default=True, help="KL weight after warm-up.")
@click.option("--val-fraction", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", default="model.rvae", show_default=True,
              type=click.Path(dir_okay=False, path_type=Path))
@click.option("--report-dir", type=click.Path(file_okay=False, path_type=Path),
              help="Also write loss_history.csv and loss_curves.png here.")
@click.option("--drum-map", "drum_map_path", type=click.Path(exists=True, dir_okay=False),
              help="Override the GM note-to-class mapping file.")
def train(midi_dir: Path, epochs: int, batch_size: int, lr: float, kl_beta: float,
          val_fraction: float, seed: int, out_path: Path, report_dir: Path | None,
          drum_map_path: str | None) -> None:
    """Train on every MIDI file under MIDI_DIR and save the weights."""
    drum_map = _load_drum_map(drum_map_path)
    tensors, reports = load_corpus_dir(midi_dir, drum_map)
    for name, result in reports:
        click.echo(f"  {name}: {result if isinstance(result, str) else f'{result} patterns'}")
    if len(tensors) < 2:
        raise click.ClickException(f"need at least 2 patterns to train, extracted {len(tensors)}")
    click.echo(f"training on {len(tensors)} patterns for {epochs} epochs")

    cfg = vae.TrainConfig(
        epochs=epochs, batch_size=batch_size, lr=lr, kl_weight_beta=kl_beta,
        val_fraction=val_fraction, seed=seed,
    )

    def on_epoch(entry: vae.EpochLosses) -> None:
        if entry.epoch % 10 == 0 or entry.epoch == epochs - 1:
            click.echo(
                f"  epoch {entry.epoch:4d}  train {entry.train.total:10.4f}  "
                f"val {entry.val.total:10.4f}"
            )

    model, history = vae.train(tensors, cfg, on_epoch=on_epoch)
    out_path.write_bytes(vae.save_weights(model))
    click.echo(f"saved weights to {out_path}")

    if report_dir is not None:
        from .report import write_loss_report

        csv_path, png_path = write_loss_report(history, report_dir)
        click.echo(f"wrote {csv_path} and {png_path}")


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--z", "z_text", default="0,0", show_default=True, help="Latent point Z1,Z2.")
@click.option("--out", "out_path", default="pattern.mid", show_default=True,
              type=click.Path(dir_okay=False, path_type=Path))
@click.option("--tempo", default=120.0, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--ppq", default=480, show_default=True)
def generate(model_path: Path, z_text: str, out_path: Path, tempo: float,
             threshold: float, ppq: int) -> None:
    """Decode one latent point into a 2-bar MIDI pattern."""
    from .encoding import decode_tensor

    model = vae.load_weights(model_path.read_bytes())
    z = _parse_z(z_text)
    pattern = decode_tensor(vae.decode_latent(model, z), threshold)
    out_path.write_bytes(write_smf(pattern, ppq=ppq, tempo_bpm=tempo))
    click.echo(f"z=({z[0]:g}, {z[1]:g}) -> {len(pattern.onsets)} onsets -> {out_path}")


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--grid", default="8x8", show_default=True, help="ROWSxCOLS latent grid.")
@click.option("--out-dir", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--extent", default=3.0, show_default=True,
              help="Grid spans [-extent, extent] on both latent axes.")
@click.option("--tempo", default=120.0, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
def sweep(model_path: Path, grid: str, out_dir: Path, extent: float,
          tempo: float, threshold: float) -> None:
    """Render a latent grid to MIDI files plus a density report."""
    from .encoding import decode_tensor
    from .report import write_sweep_report

    try:
        rows_s, cols_s = grid.lower().split("x")
        n_rows, n_cols = int(rows_s), int(cols_s)
    except ValueError:
        raise click.BadParameter(f"--grid expects ROWSxCOLS, got {grid!r}")
    if n_rows < 1 or n_cols < 1:
        raise click.BadParameter("grid dimensions must be >= 1")

    model = vae.load_weights(model_path.read_bytes())
    out_dir.mkdir(parents=True, exist_ok=True)
    z1s = np.linspace(-extent, extent, n_cols) if n_cols > 1 else np.array([0.0])
    z2s = np.linspace(-extent, extent, n_rows) if n_rows > 1 else np.array([0.0])

    rows = []
    for i, z2 in enumerate(z2s):
        for j, z1 in enumerate(z1s):
            pattern = decode_tensor(vae.decode_latent(model, (z1, z2)), threshold)
            name = f"sweep_r{i}_c{j}.mid"
            (out_dir / name).write_bytes(write_smf(pattern, ppq=480, tempo_bpm=tempo))
            rows.append({"file": name, "row": i, "col": j,
                         "z1": float(z1), "z2": float(z2), "onsets": len(pattern.onsets)})
    csv_path, png_path = write_sweep_report(rows, (n_rows, n_cols), out_dir)
    click.echo(f"wrote {len(rows)} MIDI files, {csv_path.name}, {png_path.name} to {out_dir}")


@main.command()
@click.argument("midi_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--report-dir", type=click.Path(file_okay=False, path_type=Path),
              help="Also write onset_histogram.csv and onset_histogram.png here.")
@click.option("--drum-map", "drum_map_path", type=click.Path(exists=True, dir_okay=False))
def inspect(midi_file: Path, report_dir: Path | None, drum_map_path: str | None) -> None:
    """Report pattern count and per-class onset histogram for one file."""
    drum_map = _load_drum_map(drum_map_path)
    midi = parse_smf(midi_file.read_bytes())
    notes = extract_drum_notes(midi)
    onsets = quantize_notes(notes, midi.ppq, drum_map)
    patterns = window_patterns(onsets)

    counts = Counter(o.drum for o in onsets)
    click.echo(f"{midi_file.name}: format {midi.format}, ppq {midi.ppq}, "
               f"{len(midi.tracks)} tracks")
    click.echo(f"  drum notes: {len(notes)}, mapped onsets: {len(onsets)}, "
               f"patterns: {len(patterns)}")
    for drum in DrumClass:
        if counts.get(drum):
            click.echo(f"  {drum.label:13s} {counts[drum]}")

    if report_dir is not None:
        from .report import write_histogram_report

        csv_path, png_path = write_histogram_report(dict(counts), len(patterns), report_dir)
        click.echo(f"wrote {csv_path} and {png_path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True)
@click.option("--frontend", "frontend_dir", type=click.Path(file_okay=False),
              help="Serve a built browser UI from this directory.")
def serve(host: str, port: int, frontend_dir: str | None) -> None:
    """Run the control service (HTTP + WebSocket stream)."""
    from .service import run

    run(host=host, port=port, frontend_dir=frontend_dir)


if __name__ == "__main__":
    main()
