"""Variational autoencoder over 9x32 rhythm tensors with a 2-D latent space.

Both the encoder and decoder are two fully-connected stages of 512 units
with batch normalization and LeakyReLU. The encoder ends in mu/logvar
heads of width 2; the decoder fans out into three 288-wide heads: onset
probabilities (sigmoid), velocities (sigmoid), and timing offsets (tanh).

Input layout is the flattened [onsets | velocities | offsets] vector of
864 features; see encoding.RhythmTensor.flatten.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .encoding import NUM_DRUM_CLASSES, NUM_STEPS, DecoderOutput, RhythmTensor
from .nn import Adam, BatchNorm, Dense, LeakyRelu, ShapeError, Sigmoid, Tanh, sigmoid

INPUT_DIM = NUM_DRUM_CLASSES * NUM_STEPS * 3  # 864
HIDDEN_DIM = 512
LATENT_DIM = 2
HEAD_DIM = NUM_DRUM_CLASSES * NUM_STEPS  # 288

PROB_CLAMP = 1e-7

WEIGHTS_MAGIC = b"RVAE"
WEIGHTS_VERSION = 1


class TrainingError(ValueError):
    """Invalid training configuration or dataset."""


class PersistenceError(ValueError):
    """Weight payload is corrupt or belongs to a different model shape."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    kl_weight_beta: float = 1.0
    kl_warmup_fraction: float = 0.1
    val_fraction: float = 0.1
    seed: int = 0
    onset_threshold: float = 0.5

    def validate(self) -> None:
        if self.epochs < 0:
            raise TrainingError("epochs must be >= 0")
        if self.batch_size < 2:
            raise TrainingError("batch_size must be >= 2 (batch norm)")
        if not 0.0 < self.val_fraction < 1.0:
            raise TrainingError("val_fraction must be in (0, 1)")
        if self.kl_weight_beta < 0:
            raise TrainingError("kl_weight_beta must be >= 0")
        if not 0.0 <= self.kl_warmup_fraction <= 1.0:
            raise TrainingError("kl_warmup_fraction must be in [0, 1]")
        if not 0.0 <= self.onset_threshold <= 1.0:
            raise TrainingError("onset_threshold must be in [0, 1]")


@dataclass
class LossBreakdown:
    """Composite loss; total = onset_bce + velocity_mse + offset_mse + beta * kl."""

    total: float
    onset_bce: float
    velocity_mse: float
    offset_mse: float
    kl: float
    beta: float


@dataclass
class EpochLosses:
    epoch: int
    train: LossBreakdown
    val: LossBreakdown


class VaeModel:
    """Parameter container plus forward passes for both halves."""

    def __init__(self, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        # Trunk layers feed batch norm, so they carry no bias (BN beta covers it).
        self.enc1 = Dense(INPUT_DIM, HIDDEN_DIM, rng, "enc1", use_bias=False)
        self.enc1_bn = BatchNorm(HIDDEN_DIM, "enc1_bn")
        self.enc1_act = LeakyRelu()
        self.enc2 = Dense(HIDDEN_DIM, HIDDEN_DIM, rng, "enc2", use_bias=False)
        self.enc2_bn = BatchNorm(HIDDEN_DIM, "enc2_bn")
        self.enc2_act = LeakyRelu()
        self.mu_head = Dense(HIDDEN_DIM, LATENT_DIM, rng, "mu")
        self.logvar_head = Dense(HIDDEN_DIM, LATENT_DIM, rng, "logvar")

        self.dec1 = Dense(LATENT_DIM, HIDDEN_DIM, rng, "dec1", use_bias=False)
        self.dec1_bn = BatchNorm(HIDDEN_DIM, "dec1_bn")
        self.dec1_act = LeakyRelu()
        self.dec2 = Dense(HIDDEN_DIM, HIDDEN_DIM, rng, "dec2", use_bias=False)
        self.dec2_bn = BatchNorm(HIDDEN_DIM, "dec2_bn")
        self.dec2_act = LeakyRelu()
        self.onset_head = Dense(HIDDEN_DIM, HEAD_DIM, rng, "onset")
        self.velocity_head = Dense(HIDDEN_DIM, HEAD_DIM, rng, "velocity")
        self.offset_head = Dense(HIDDEN_DIM, HEAD_DIM, rng, "offset")

    # -- forward ------------------------------------------------------------

    def encode(self, x: np.ndarray, train: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """x (batch, 864) -> (mu, logvar), each (batch, 2)."""
        h = self.enc1_act.forward(self.enc1_bn.forward(self.enc1.forward(x, train), train), train)
        h = self.enc2_act.forward(self.enc2_bn.forward(self.enc2.forward(h, train), train), train)
        return self.mu_head.forward(h, train), self.logvar_head.forward(h, train)

    def decode(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Inference-mode z (batch, 2) -> (onset_probs, velocities, offsets), each (batch, 288).

        Train-mode decoding lives in loss_and_grads, which needs the head
        activations on the tape.
        """
        if not np.isfinite(z).all():
            raise ShapeError("latent vector must be finite")
        h = self.dec1_act.forward(self.dec1_bn.forward(self.dec1.forward(z)))
        h = self.dec2_act.forward(self.dec2_bn.forward(self.dec2.forward(h)))
        probs = sigmoid(self.onset_head.forward(h))
        vel = sigmoid(self.velocity_head.forward(h))
        off = np.tanh(self.offset_head.forward(h))
        return probs, vel, off

    # -- parameter access ---------------------------------------------------

    def _layers(self):
        return (
            self.enc1, self.enc1_bn, self.enc2, self.enc2_bn,
            self.mu_head, self.logvar_head,
            self.dec1, self.dec1_bn, self.dec2, self.dec2_bn,
            self.onset_head, self.velocity_head, self.offset_head,
        )

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self._layers():
            if hasattr(layer, "params"):
                out.update(layer.params())
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for layer in self._layers():
            if hasattr(layer, "grads"):
                out.update(layer.grads())
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Everything persistence must capture: parameters plus BN running stats."""
        out = self.params()
        for bn in (self.enc1_bn, self.enc2_bn, self.dec1_bn, self.dec2_bn):
            out[f"{bn.name}.running_mean"] = bn.running_mean
            out[f"{bn.name}.running_var"] = bn.running_var
        return out

    def snapshot(self) -> "VaeModel":
        """Deep copy for lock-free concurrent inference."""
        clone = VaeModel(np.random.default_rng(0))
        src, dst = self.state_arrays(), clone.state_arrays()
        for name, arr in src.items():
            dst[name][...] = arr
        return clone


# ---------------------------------------------------------------------------
# Latent sampling and loss
# ---------------------------------------------------------------------------


def reparameterize(mu: np.ndarray, logvar: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """z = mu + exp(logvar / 2) * eps, eps ~ N(0, I)."""
    eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * eps


def kl_divergence(mu: np.ndarray, logvar: np.ndarray) -> float:
    """Mean over the batch of KL(q(z|x) || N(0, I))."""
    per_sample = -0.5 * np.sum(1.0 + logvar - mu**2 - np.exp(logvar), axis=1)
    return float(per_sample.mean())


def _split_targets(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return x[:, :HEAD_DIM], x[:, HEAD_DIM : 2 * HEAD_DIM], x[:, 2 * HEAD_DIM :]


def compute_loss(
    x: np.ndarray,
    probs: np.ndarray,
    velocities: np.ndarray,
    offsets: np.ndarray,
    mu: np.ndarray,
    logvar: np.ndarray,
    beta: float,
) -> LossBreakdown:
    """Composite loss: summed-per-sample terms averaged over the batch.

    Velocity and offset squared errors only count cells where the target
    onset is 1; their values are undefined at silent cells.
    """
    if x.shape[0] != probs.shape[0]:
        raise ShapeError("batch size mismatch between targets and reconstruction")
    t_on, t_vel, t_off = _split_targets(x)
    n = x.shape[0]

    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    bce = float(-(t_on * np.log(p) + (1.0 - t_on) * np.log(1.0 - p)).sum() / n)
    vel_mse = float((t_on * (velocities - t_vel) ** 2).sum() / n)
    off_mse = float((t_on * (offsets - t_off) ** 2).sum() / n)
    kl = kl_divergence(mu, logvar)
    total = bce + vel_mse + off_mse + beta * kl
    return LossBreakdown(total=total, onset_bce=bce, velocity_mse=vel_mse,
                         offset_mse=off_mse, kl=kl, beta=beta)


def loss_and_grads(
    model: VaeModel,
    x: np.ndarray,
    eps: np.ndarray,
    beta: float,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """One train-mode forward/backward pass with a frozen noise draw.

    Taking eps as an argument keeps the loss a deterministic function of
    the parameters, which is what makes finite-difference checks valid.
    """
    n = x.shape[0]
    t_on, t_vel, t_off = _split_targets(x)

    mu, logvar = model.encode(x, train=True)
    z = mu + np.exp(0.5 * logvar) * eps

    h = model.dec1_act.forward(model.dec1_bn.forward(model.dec1.forward(z, True), True), True)
    h = model.dec2_act.forward(model.dec2_bn.forward(model.dec2.forward(h, True), True), True)
    onset_act, vel_act, off_act = Sigmoid(), Sigmoid(), Tanh()
    probs = onset_act.forward(model.onset_head.forward(h, True), True)
    vel = vel_act.forward(model.velocity_head.forward(h, True), True)
    off = off_act.forward(model.offset_head.forward(h, True), True)

    breakdown = compute_loss(x, probs, vel, off, mu, logvar, beta)

    # Backward: reconstruction heads.
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    dp = (-(t_on / p) + (1.0 - t_on) / (1.0 - p)) / n
    dp *= (probs >= PROB_CLAMP) & (probs <= 1.0 - PROB_CLAMP)  # clamp gate
    dvel = 2.0 * t_on * (vel - t_vel) / n
    doff = 2.0 * t_on * (off - t_off) / n

    dh = model.onset_head.backward(onset_act.backward(dp))
    dh += model.velocity_head.backward(vel_act.backward(dvel))
    dh += model.offset_head.backward(off_act.backward(doff))

    dh = model.dec2.backward(model.dec2_bn.backward(model.dec2_act.backward(dh)))
    dz = model.dec1.backward(model.dec1_bn.backward(model.dec1_act.backward(dh)))

    # Through the sampling and the KL term.
    dmu = dz + beta * mu / n
    dlogvar = dz * eps * 0.5 * np.exp(0.5 * logvar) + beta * (np.exp(logvar) - 1.0) / (2.0 * n)

    dtrunk = model.mu_head.backward(dmu) + model.logvar_head.backward(dlogvar)
    dtrunk = model.enc2.backward(model.enc2_bn.backward(model.enc2_act.backward(dtrunk)))
    model.enc1.backward(model.enc1_bn.backward(model.enc1_act.backward(dtrunk)))

    return breakdown, model.grads()


# ---------------------------------------------------------------------------
# Convenience wrappers used by the sequencer/service
# ---------------------------------------------------------------------------


def flatten_batch(tensors: list[RhythmTensor]) -> np.ndarray:
    if not tensors:
        raise TrainingError("empty dataset")
    return np.stack([t.flatten() for t in tensors])


def encode_batch(model: VaeModel, tensors: list[RhythmTensor]) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode encode of whole tensors."""
    return model.encode(flatten_batch(tensors), train=False)


def decode_latent(model: VaeModel, z: tuple[float, float] | np.ndarray) -> DecoderOutput:
    """Decode a single latent point into 9x32 output matrices."""
    z_arr = np.asarray(z, dtype=np.float64).reshape(1, LATENT_DIM)
    probs, vel, off = model.decode(z_arr)
    shape = (NUM_DRUM_CLASSES, NUM_STEPS)
    return DecoderOutput(
        onset_probs=probs[0].reshape(shape),
        velocities=vel[0].reshape(shape),
        offsets=off[0].reshape(shape),
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def effective_beta(epoch: int, cfg: TrainConfig) -> float:
    """Linear KL warm-up from 0 over the first kl_warmup_fraction of epochs."""
    warm = cfg.kl_warmup_fraction * cfg.epochs
    if warm <= 0:
        return cfg.kl_weight_beta
    return cfg.kl_weight_beta * min(1.0, epoch / warm)


def split_dataset(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle split. Keeps >= 2 training samples and aims for >= 1
    validation sample; with exactly 2 samples validation falls back to the
    training set (returned as an empty index array)."""
    perm = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    if n - n_val < 2:
        n_val = max(0, n - 2)
    return perm[n_val:], perm[:n_val]


def evaluate(model: VaeModel, x: np.ndarray, beta: float) -> LossBreakdown:
    """Deterministic validation pass: inference-mode stats, z = mu."""
    mu, logvar = model.encode(x, train=False)
    probs, vel, off = model.decode(mu)
    return compute_loss(x, probs, vel, off, mu, logvar, beta)


def train(
    dataset: list[RhythmTensor],
    cfg: TrainConfig,
    on_epoch=None,
    should_stop=None,
) -> tuple[VaeModel, list[EpochLosses]]:
    """Train a fresh model; fully deterministic for a fixed cfg.seed.

    ``on_epoch(EpochLosses)`` fires after every completed epoch;
    ``should_stop()`` is polled between batches and a stop abandons the
    partial epoch, returning the most recent completed state.
    """
    cfg.validate()
    x_all = flatten_batch(dataset)
    n = x_all.shape[0]
    if n < 2:
        raise TrainingError(f"need at least 2 patterns to train, got {n}")

    rng = np.random.default_rng(cfg.seed)
    model = VaeModel(rng)
    train_idx, val_idx = split_dataset(n, cfg.val_fraction, rng)
    x_train = x_all[train_idx]
    x_val = x_all[val_idx] if val_idx.size else x_train

    n_train = x_train.shape[0]
    batch_size = min(cfg.batch_size, n_train)
    adam = Adam(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    history: list[EpochLosses] = []

    for epoch in range(cfg.epochs):
        beta = effective_beta(epoch, cfg)
        order = rng.permutation(n_train)
        sums = np.zeros(4)  # bce, vel, off, kl weighted by batch size
        seen = 0
        for start in range(0, n_train, batch_size):
            if should_stop is not None and should_stop():
                return model, history
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue  # a 1-sample tail cannot go through batch norm
            batch = x_train[idx]
            eps = rng.standard_normal((idx.size, LATENT_DIM))
            lb, grads = loss_and_grads(model, batch, eps, beta)
            adam.step(model.params(), grads)
            sums += idx.size * np.array([lb.onset_bce, lb.velocity_mse, lb.offset_mse, lb.kl])
            seen += idx.size

        bce, vel_mse, off_mse, kl = (sums / max(seen, 1)).tolist()
        train_lb = LossBreakdown(
            total=bce + vel_mse + off_mse + beta * kl,
            onset_bce=bce, velocity_mse=vel_mse, offset_mse=off_mse, kl=kl, beta=beta,
        )
        val_lb = evaluate(model, x_val, beta)
        entry = EpochLosses(epoch=epoch, train=train_lb, val=val_lb)
        history.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        if should_stop is not None and should_stop():
            break

    return model, history


def history_to_csv(history: list[EpochLosses]) -> str:
    """Loss history as comma-separated text: epoch, totals, then components."""
    lines = [
        "epoch,train_total,val_total,"
        "train_onset_bce,train_velocity_mse,train_offset_mse,train_kl,"
        "val_onset_bce,val_velocity_mse,val_offset_mse,val_kl,beta"
    ]
    for e in history:
        t, v = e.train, e.val
        lines.append(
            f"{e.epoch},{t.total:.9g},{v.total:.9g},"
            f"{t.onset_bce:.9g},{t.velocity_mse:.9g},{t.offset_mse:.9g},{t.kl:.9g},"
            f"{v.onset_bce:.9g},{v.velocity_mse:.9g},{v.offset_mse:.9g},{v.kl:.9g},{t.beta:.9g}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_weights(model: VaeModel) -> bytes:
    """Serialize to the tagged little-endian container (magic RVAE, v1)."""
    arrays = model.state_arrays()
    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<HIIII", WEIGHTS_VERSION, INPUT_DIM, HIDDEN_DIM, LATENT_DIM, HEAD_DIM)
    out += struct.pack("<H", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        name_bytes = name.encode("utf-8")
        out += struct.pack("<H", len(name_bytes)) + name_bytes
        out += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            out += struct.pack("<I", dim)
        out += arr.tobytes()
    return bytes(out)


def load_weights(data: bytes) -> VaeModel:
    """Inverse of save_weights; exact at stored (float64) precision."""
    if len(data) < 4 or data[:4] != WEIGHTS_MAGIC:
        raise PersistenceError("corrupt payload: bad magic")
    pos = 4
    try:
        version, in_dim, hidden, latent, head = struct.unpack_from("<HIIII", data, pos)
        pos += struct.calcsize("<HIIII")
        if version != WEIGHTS_VERSION:
            raise PersistenceError(f"unsupported weights version {version}")
        if (in_dim, hidden, latent, head) != (INPUT_DIM, HIDDEN_DIM, LATENT_DIM, HEAD_DIM):
            raise PersistenceError(
                f"dimension mismatch: file has {(in_dim, hidden, latent, head)}, "
                f"expected {(INPUT_DIM, HIDDEN_DIM, LATENT_DIM, HEAD_DIM)}"
            )
        (n_arrays,) = struct.unpack_from("<H", data, pos)
        pos += 2
        loaded: dict[str, np.ndarray] = {}
        for _ in range(n_arrays):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos) if ndim else ()
            pos += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            nbytes = count * 8
            if pos + nbytes > len(data):
                raise PersistenceError("corrupt payload: truncated array data")
            arr = np.frombuffer(data[pos : pos + nbytes], dtype="<f8").reshape(shape)
            pos += nbytes
            loaded[name] = arr
    except struct.error as exc:
        raise PersistenceError(f"corrupt payload: {exc}") from None

    model = VaeModel(np.random.default_rng(0))
    target = model.state_arrays()
    missing = set(target) - set(loaded)
    if missing:
        raise PersistenceError(f"corrupt payload: missing arrays {sorted(missing)}")
    for name, arr in loaded.items():
        if name not in target:
            raise PersistenceError(f"corrupt payload: unexpected array {name!r}")
        if target[name].shape != arr.shape:
            raise PersistenceError(
                f"dimension mismatch for {name}: {arr.shape} != {target[name].shape}"
            )
        target[name][...] = arr
    return model
