"""Minimal dense network kernel: GELU layers, reverse-mode gradients,
sigmoid focal loss, Adam, and the warmup + cosine learning-rate schedule.

Everything runs in double precision; the networks are tiny, so the cost is
negligible and gradient checks against finite differences stay clean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, expit

from .errors import DimensionMismatch

GELU = "gelu"
SIGMOID = "sigmoid"
LINEAR = "none"

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

PROB_EPS = 1e-7  # focal-loss clamp: probabilities live in [eps, 1 - eps]


def gelu(x):
    """Exact GELU, x * Phi(x) with the Gaussian CDF (no tanh approximation)."""
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    """d/dx of gelu: Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return cdf + x * pdf


def _apply_activation(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == GELU:
        return gelu(z)
    if kind == SIGMOID:
        return expit(z)
    return z


def _activation_grad(z: np.ndarray, y: np.ndarray, kind: str) -> np.ndarray:
    if kind == GELU:
        return gelu_grad(z)
    if kind == SIGMOID:
        return y * (1.0 - y)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    """Fully connected layer y = act(x @ W.T + b)."""

    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = GELU

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionMismatch(
                f"layer shapes inconsistent: W {self.weight.shape}, b {self.bias.shape}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise DimensionMismatch("non-finite layer parameters")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


class Mlp:
    """A chain of dense layers with cached forward passes for backprop."""

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise DimensionMismatch("an Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionMismatch(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")
        self.layers = layers

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Run the network on a batch (n, in_dim); returns (y, cache).

        The cache keeps per-layer inputs and pre-activations for backward.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise DimensionMismatch(
                f"input width {x.shape[1]} != first layer input {self.in_dim}")
        cache = []
        for layer in self.layers:
            z = x @ layer.weight.T + layer.bias
            y = _apply_activation(z, layer.activation)
            cache.append((x, z, y))
            x = y
        return x, cache

    def backward(self, cache: list, grad_y: np.ndarray):
        """Reverse-mode pass; returns (grad_x, [(dW, db) per layer])."""
        grads: list = [None] * len(self.layers)
        g = np.asarray(grad_y, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            x, z, y = cache[i]
            gz = g * _activation_grad(z, y, layer.activation)
            grads[i] = (gz.T @ x, gz.sum(axis=0))
            g = gz @ layer.weight
        return g, grads


def xavier_mlp(dims: list[int], activations: list[str], rng: np.random.Generator) -> Mlp:
    """Build an Mlp with uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero bias."""
    if len(activations) != len(dims) - 1:
        raise DimensionMismatch("need one activation per layer")
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Mlp(layers)


def sigmoid_focal_loss(p, y, alpha: float = 0.25, gamma: float = 2.0):
    """Focal loss on predicted probabilities against binary labels.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before evaluation.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    pos = -alpha * (1.0 - p) ** gamma * np.log(p)
    neg = -(1.0 - alpha) * p ** gamma * np.log(1.0 - p)
    return np.where(y >= 0.5, pos, neg)


def sigmoid_focal_loss_grad(p, y, alpha: float = 0.25, gamma: float = 2.0):
    """d(loss)/d(p); zero where the clamp is active."""
    p_raw = np.asarray(p, dtype=np.float64)
    inside = (p_raw > PROB_EPS) & (p_raw < 1.0 - PROB_EPS)
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    one_m = 1.0 - p
    gpos = alpha * (gamma * one_m ** (gamma - 1.0) * np.log(p) - one_m ** gamma / p)
    gneg = (1.0 - alpha) * (p ** gamma / one_m - gamma * p ** (gamma - 1.0) * np.log(one_m))
    return np.where(y >= 0.5, gpos, gneg) * inside


@dataclass
class AdamState:
    """First/second moment accumulators mirroring a parameter dict."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place, no weight decay."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise DimensionMismatch(f"gradient shape mismatch for {key}")
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from base_lr/10, then cosine annealing to min_lr."""

    base_lr: float = 0.01
    min_lr: float = 0.001
    warmup_epochs: int = 10
    total_epochs: int = 30

    def __post_init__(self):
        if not (0 < self.min_lr <= self.base_lr):
            raise ValueError(f"need 0 < min_lr <= base_lr, got {self}")
        if not (0 < self.warmup_epochs < self.total_epochs):
            raise ValueError(f"need 0 < warmup_epochs < total_epochs, got {self}")


def lr_at(epoch: int, s: LrSchedule = LrSchedule()) -> float:
    """Learning rate at an epoch index in [0, total_epochs]."""
    if epoch < 0 or epoch > s.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {s.total_epochs}]")
    if epoch <= s.warmup_epochs:
        start = s.base_lr / 10.0
        return start + (s.base_lr - start) * epoch / s.warmup_epochs
    span = s.total_epochs - s.warmup_epochs
    progress = (epoch - s.warmup_epochs) / span
    return s.min_lr + (s.base_lr - s.min_lr) * (1.0 + math.cos(math.pi * progress)) / 2.0
