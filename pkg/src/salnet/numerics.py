"""Deterministic dense linear algebra, initialization, and loss primitives.

Every numeric container in this package is a 2-D float64 numpy array; this
module provides the handful of operations the layer and network code builds
on, with explicit seeding so any run can be replayed bit-for-bit.
"""

from __future__ import annotations

import enum
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Prng",
    "Activation",
    "matmul",
    "count_multiplies",
    "kaiming_init",
    "softmax_rows",
    "softmax_ce_loss",
    "softmax_ce_grad",
    "apply_activation",
    "activation_derivative",
]


class Prng:
    """Seedable deterministic random stream (PCG64, explicit 64-bit seed).

    ``child(*key)`` derives an independent stream addressed by integer keys,
    so e.g. learnable and frozen parameters can come from separate streams
    that never interfere with each other's draw counts. Identical
    (seed, key path) always reproduces the identical sequence.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        seq = np.random.SeedSequence(self.seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, *key: int) -> "Prng":
        """Independent stream derived from this stream's seed and `key`."""
        return Prng(self.seed, self._spawn_key + tuple(int(k) for k in key))

    def normal(self, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
        """Zero-mean normal matrix of shape (rows, cols)."""
        return self._gen.standard_normal((rows, cols)) * std

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)


class Activation(enum.Enum):
    RELU = "relu"
    TANH = "tanh"
    LINEAR = "linear"


# Multiply counting is opt-in instrumentation used by the cost-parity
# checks; with no active counter the overhead is one falsy test per matmul.
_active_counters: list["_MultiplyCounter"] = []


class _MultiplyCounter:
    def __init__(self):
        self.multiplies = 0


@contextmanager
def count_multiplies():
    """Count scalar multiplies of every `matmul` executed in the block.

    Yields a counter object whose ``multiplies`` attribute accumulates
    ``a.rows * a.cols * b.cols`` for each product. Not thread-safe while
    active.
    """
    counter = _MultiplyCounter()
    _active_counters.append(counter)
    try:
        yield counter
    finally:
        _active_counters.remove(counter)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit dimension checking.

    All matrix products in the package go through here so that the
    multiply instrumentation sees every one of them.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D arrays, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    if _active_counters:
        n = a.shape[0] * a.shape[1] * b.shape[1]
        for counter in _active_counters:
            counter.multiplies += n
    return a @ b


def kaiming_init(rows: int, cols: int, rng: Prng) -> np.ndarray:
    """He-normal init for a (rows, cols) weight used as ``x @ W``: fan-in = rows."""
    if rows < 1 or cols < 1:
        raise ValueError(f"invalid weight shape ({rows}, {cols})")
    return rng.normal(rows, cols, std=np.sqrt(2.0 / rows))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by per-row max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def _check_labels(logits: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ValueError(f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"label out of range [0, {logits.shape[1]})")
    return labels


def softmax_ce_loss(logits: np.ndarray, labels) -> float:
    """Mean cross-entropy of row-wise softmax against integer class labels."""
    labels = _check_labels(logits, labels)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(logits.shape[0]), labels]
    return float(np.mean(log_norm - picked))


def softmax_ce_grad(logits: np.ndarray, labels) -> np.ndarray:
    """Gradient of `softmax_ce_loss` w.r.t. the logits: (softmax - onehot) / batch."""
    labels = _check_labels(logits, labels)
    grad = softmax_rows(logits)
    grad[np.arange(logits.shape[0]), labels] -= 1.0
    return grad / logits.shape[0]


def apply_activation(kind: Activation, u: np.ndarray) -> np.ndarray:
    if kind is Activation.RELU:
        return np.maximum(u, 0.0)
    if kind is Activation.TANH:
        return np.tanh(u)
    return u


def activation_derivative(kind: Activation, u: np.ndarray) -> np.ndarray:
    """Exact elementwise derivative; at the ReLU kink (u == 0) it is 0."""
    if kind is Activation.RELU:
        return np.where(u > 0.0, 1.0, 0.0)
    if kind is Activation.TANH:
        return 1.0 - np.tanh(u) ** 2
    return np.ones_like(u)
