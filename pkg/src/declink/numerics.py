"""Minimal deterministic dense-network engine.

All math runs in 64-bit NumPy. Forward and backward passes are written by
hand (no autograd) so that every differentiable block can be validated
against central finite differences. Parameters live in plain arrays owned
by the caller; optimizer state is explicit.
"""
from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, InternalError, TrainingError, ValidationError


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by (master_seed, stream_label).

    Streams are backed by counter-based Philox keyed with a hash of the
    address, so distinct labels are statistically independent and the same
    address always replays the same sequence, independent of platform.
    """

    master_seed: int
    stream_label: str

    def generator(self) -> np.random.Generator:
        digest = hashlib.sha256(
            f"{self.master_seed}:{self.stream_label}".encode()
        ).digest()
        key = int.from_bytes(digest[:16], "little")
        return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, label: str) -> int:
    """Stable 63-bit integer seed for a named substream."""
    digest = hashlib.sha256(f"{master_seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise ConfigError(f"expected RngStream or Generator, got {type(rng).__name__}")


# ---------------------------------------------------------------------------
# Dense layers
# ---------------------------------------------------------------------------


@dataclass
class DenseLayer:
    weights: np.ndarray  # [out_dim, in_dim]
    bias: np.ndarray  # [out_dim]
    activation: Activation = Activation.RELU

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def init_dense(in_dim: int, out_dim: int, activation: Activation, rng) -> DenseLayer:
    """He-uniform init for ReLU layers, Xavier-uniform otherwise; zero bias."""
    gen = _as_generator(rng)
    if activation is Activation.RELU:
        bound = math.sqrt(6.0 / in_dim)
    else:
        bound = math.sqrt(6.0 / (in_dim + out_dim))
    weights = gen.uniform(-bound, bound, size=(out_dim, in_dim))
    return DenseLayer(weights, np.zeros(out_dim), activation)


def dense_forward(x: np.ndarray, layer: DenseLayer):
    """Return (activation(x @ W.T + b), cache) for a [batch, in_dim] input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ConfigError(
            f"dense_forward: input shape {x.shape} incompatible with "
            f"layer in_dim {layer.in_dim}"
        )
    pre = x @ layer.weights.T + layer.bias
    if layer.activation is Activation.RELU:
        out = np.maximum(pre, 0.0)
    else:
        out = pre
    return out, (x, pre)


def dense_backward(grad_output: np.ndarray, cache, layer: DenseLayer):
    """Exact gradients of dense_forward: (grad_input, grad_weights, grad_bias)."""
    x, pre = cache
    grad_output = np.asarray(grad_output, dtype=np.float64)
    if grad_output.shape != pre.shape or x.shape[1] != layer.in_dim:
        raise InternalError("dense_backward: cache does not match layer/grad shapes")
    if layer.activation is Activation.RELU:
        grad_pre = grad_output * (pre > 0.0)
    else:
        grad_pre = grad_output
    grad_input = grad_pre @ layer.weights
    grad_weights = grad_pre.T @ x
    grad_bias = grad_pre.sum(axis=0)
    return grad_input, grad_weights, grad_bias


@dataclass
class LayerStack:
    """An ordered pile of dense layers sharing one flat parameter list."""

    layers: list[DenseLayer]

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
        return params

    def set_parameters(self, values: list[np.ndarray]) -> None:
        """Copy `values` into the live parameter arrays (for restores)."""
        own = self.parameters()
        if len(own) != len(values):
            raise InternalError("set_parameters: parameter count mismatch")
        for dst, src in zip(own, values):
            if dst.shape != src.shape:
                raise InternalError("set_parameters: parameter shape mismatch")
            dst[...] = src

    def copy(self) -> "LayerStack":
        return copy.deepcopy(self)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def stack_forward(x: np.ndarray, stack: LayerStack):
    """Forward through every layer; returns (output, list of caches)."""
    caches = []
    out = np.asarray(x, dtype=np.float64)
    for layer in stack.layers:
        out, cache = dense_forward(out, layer)
        caches.append(cache)
    return out, caches


def stack_backward(grad_output: np.ndarray, caches, stack: LayerStack):
    """Backward through every layer; returns (grad_input, flat grads).

    The flat gradient list is ordered like LayerStack.parameters().
    """
    if len(caches) != len(stack.layers):
        raise InternalError("stack_backward: cache count mismatch")
    grads: list[np.ndarray] = [None] * (2 * len(stack.layers))
    grad = grad_output
    for i in range(len(stack.layers) - 1, -1, -1):
        grad, gw, gb = dense_backward(grad, caches[i], stack.layers[i])
        grads[2 * i] = gw
        grads[2 * i + 1] = gb
    return grad, grads


# ---------------------------------------------------------------------------
# Losses and elementwise ops
# ---------------------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient wrt pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ConfigError(f"mse_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


def sigmoid(x):
    """Numerically stable logistic function; never overflows."""
    x = np.asarray(x, dtype=np.float64)
    t = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    if out.ndim == 0:
        return float(out)
    return out


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy on logits, in the overflow-safe form
    max(x, 0) - x*y + log(1 + exp(-|x|)). Returns (loss, grad wrt logits).
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigError(f"bce_with_logits: shape mismatch {x.shape} vs {y.shape}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("bce_with_logits: labels must be 0 or 1")
    if not np.all(np.isfinite(x)):
        raise ValidationError("bce_with_logits: non-finite logit")
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    n = max(per.size, 1)
    loss = float(np.sum(per) / n)
    grad = (sigmoid(x) - y) / n
    return loss, grad


def dropout(x, rate: float, rng, training: bool):
    """Inverted dropout. Returns (output, mask); identity at inference."""
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, np.ones_like(x)
    gen = _as_generator(rng)
    mask = (gen.random(x.shape) >= rate).astype(np.float64)
    return x * mask / (1.0 - rate), mask


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moments plus hyperparameters.

    weight_decay is decoupled: applied directly to the parameters
    (p -= lr * wd * p) before the Adam update.
    """

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8,
                   weight_decay=0.0) -> "AdamState":
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if not (0.0 < beta1 < 1.0 and 0.0 < beta2 < 1.0):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
            weight_decay=weight_decay,
        )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One Adam step with bias correction; updates params in place.

    Raises TrainingError on non-finite gradients so callers can attach
    epoch context.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigError("adam_step: parameter/gradient/state count mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ConfigError("adam_step: gradient shape mismatch")
        if state.weight_decay > 0.0:
            p -= state.lr * state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


# ---------------------------------------------------------------------------
# Training helpers
# ---------------------------------------------------------------------------


@dataclass
class EarlyStopper:
    """Stop after `patience` consecutive epochs without improvement.

    An epoch improves when the metric beats the best seen by more than
    min_delta (mode "min" for losses, "max" for scores).
    """

    patience: int = 10
    min_delta: float = 1e-6
    mode: str = "min"
    best: float = field(init=False)
    best_index: int = field(init=False, default=-1)
    bad_epochs: int = field(init=False, default=0)
    count: int = field(init=False, default=0)

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.mode not in ("min", "max"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        self.best = math.inf if self.mode == "min" else -math.inf

    def update(self, value: float) -> bool:
        """Record one epoch's metric; returns True when training should stop."""
        if self.mode == "min":
            improved = self.best - value > self.min_delta
        else:
            improved = value - self.best > self.min_delta
        if improved:
            self.best = value
            self.best_index = self.count
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        self.count += 1
        return self.bad_epochs >= self.patience


def grad_check(fn, params: list[np.ndarray], step: float = 1e-5) -> float:
    """Compare analytic gradients with central finite differences.

    `fn(params) -> (loss, grads)` must be deterministic. Every element of
    every parameter is perturbed by +-step; the result is the maximum
    relative error max|fd - g| / max(|fd|, |g|, 1e-8).
    """
    _, analytic = fn(params)
    max_err = 0.0
    for p, g in zip(params, analytic):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            loss_plus, _ = fn(params)
            flat_p[i] = orig - step
            loss_minus, _ = fn(params)
            flat_p[i] = orig
            fd = (loss_plus - loss_minus) / (2.0 * step)
            denom = max(abs(fd), abs(flat_g[i]), 1e-8)
            max_err = max(max_err, abs(fd - flat_g[i]) / denom)
    return max_err
