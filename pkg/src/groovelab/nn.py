"""Minimal dense-network building blocks with hand-written backward passes.

Layers operate on 2-D float64 arrays shaped (batch, features). Each layer
keeps its forward cache from the most recent train-mode forward, so the
usual call order is forward(train=True) then backward(). Inference-mode
forwards touch no state at all, which is what lets the sequencer read a
model snapshot while training continues on another thread.
"""

from __future__ import annotations

import numpy as np

LEAKY_ALPHA = 0.2
BN_MOMENTUM = 0.01
BN_EPS = 1e-3


class ShapeError(ValueError):
    """Array shape does not match the layer contract."""


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    scale = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-scale, scale, size=(fan_in, fan_out))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; saturates cleanly without overflow."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Dense:
    """y = x @ W + b.

    Layers that feed straight into batch norm should be built with
    use_bias=False: the mean subtraction cancels any constant shift, so
    such a bias is dead weight with an identically-zero gradient.
    """

    def __init__(
        self,
        fan_in: int,
        fan_out: int,
        rng: np.random.Generator,
        name: str,
        use_bias: bool = True,
    ):
        self.name = name
        self.fan_in = fan_in
        self.fan_out = fan_out
        self.use_bias = use_bias
        self.W = glorot_uniform(fan_in, fan_out, rng)
        self.b = np.zeros(fan_out) if use_bias else None
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros(fan_out) if use_bias else None
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.fan_in:
            raise ShapeError(f"{self.name}: expected (batch, {self.fan_in}), got {x.shape}")
        if train:
            self._x = x
        y = x @ self.W
        if self.use_bias:
            y += self.b
        return y

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError(f"{self.name}: backward before train-mode forward")
        self.dW = self._x.T @ dout
        if self.use_bias:
            self.db = dout.sum(axis=0)
        return dout @ self.W.T

    def params(self) -> dict[str, np.ndarray]:
        out = {f"{self.name}.W": self.W}
        if self.use_bias:
            out[f"{self.name}.b"] = self.b
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {f"{self.name}.W": self.dW}
        if self.use_bias:
            out[f"{self.name}.b"] = self.db
        return out


class BatchNorm:
    """Batch normalization over the batch axis.

    Train mode normalizes by the batch mean and *biased* variance and
    nudges the running statistics by ``momentum`` toward the batch values:
    running <- (1 - momentum) * running + momentum * batch_stat.
    Inference normalizes by the running statistics and mutates nothing.
    """

    def __init__(self, dim: int, name: str, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.name = name
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache: tuple | None = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeError(f"{self.name}: expected (batch, {self.dim}), got {x.shape}")
        if not train:
            x_hat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
            return self.gamma * x_hat + self.beta

        n = x.shape[0]
        if n < 2:
            raise ShapeError(f"{self.name}: train mode needs batch >= 2, got {n}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)  # biased
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_mu = x - mean
        x_hat = x_mu * inv_std
        self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
        self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var
        self._cache = (x_mu, inv_std, x_hat, n)
        return self.gamma * x_hat + self.beta

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward before train-mode forward")
        x_mu, inv_std, x_hat, n = self._cache
        self.dgamma = (dout * x_hat).sum(axis=0)
        self.dbeta = dout.sum(axis=0)

        # Backprop through the batch statistics themselves.
        dx_hat = dout * self.gamma
        dvar = (dx_hat * x_mu).sum(axis=0) * (-0.5) * inv_std**3
        dmean = -(dx_hat.sum(axis=0)) * inv_std + dvar * (-2.0 / n) * x_mu.sum(axis=0)
        return dx_hat * inv_std + dvar * (2.0 / n) * x_mu + dmean / n

    def params(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.gamma": self.dgamma, f"{self.name}.beta": self.dbeta}


class LeakyRelu:
    """Elementwise max(x, alpha * x)."""

    def __init__(self, alpha: float = LEAKY_ALPHA):
        self.alpha = alpha
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if train:
            self._x = x
        return np.maximum(x, self.alpha * x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("LeakyRelu: backward before train-mode forward")
        return dout * np.where(self._x >= 0, 1.0, self.alpha)


class Sigmoid:
    def __init__(self) -> None:
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = sigmoid(x)
        if train:
            self._y = y
        return y

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._y is None:
            raise RuntimeError("Sigmoid: backward before train-mode forward")
        return dout * self._y * (1.0 - self._y)


class Tanh:
    def __init__(self) -> None:
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        y = np.tanh(x)
        if train:
            self._y = y
        return y

    def backward(self, dout: np.ndarray) -> np.ndarray:
        if self._y is None:
            raise RuntimeError("Tanh: backward before train-mode forward")
        return dout * (1.0 - self._y**2)


class Adam:
    """Standard Adam with bias correction, keyed by parameter name."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update every parameter in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, theta in params.items():
            g = grads[name]
            if g.shape != theta.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {theta.shape} for {name}")
            m = self.m.setdefault(name, np.zeros_like(theta))
            v = self.v.setdefault(name, np.zeros_like(theta))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            theta -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
