"""Dense-array numerics: activations, weight initializers, seeded RNG streams.

Everything operates on plain numpy arrays in row-major layout. Default
element precision is float64 ("double"); float32 ("single") is selectable
per run. The PRNG is numpy's PCG64 (documented 128-bit state, 64-bit
seeded), and independent per-purpose streams are derived by hashing a
stream name together with the run seed, so the order in which layers are
initialized never perturbs another layer's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ShapeError

DOUBLE = np.float64
SINGLE = np.float32

_PRECISIONS = {"double": DOUBLE, "single": SINGLE}


def resolve_dtype(precision: str) -> np.dtype:
    """Map a precision name ('double' or 'single') to a numpy dtype."""
    try:
        return _PRECISIONS[precision]
    except KeyError:
        raise ValueError(f"unknown precision {precision!r}; expected 'double' or 'single'") from None


def make_rng(seed: int) -> np.random.Generator:
    """A PCG64 generator seeded with `seed`; same seed, same draw sequence."""
    return np.random.Generator(np.random.PCG64(seed))


def substream(seed: int, name: str) -> np.random.Generator:
    """An independent generator for (seed, name).

    The child seed is the first 8 bytes of SHA-256(f"{seed}:{name}"),
    which is platform-independent (unlike Python's built-in hash).
    """
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return make_rng(int.from_bytes(digest[:8], "little"))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of a (m, k) and b (k, n)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply matrices of shapes {a.shape} and {b.shape}")
    return a @ b


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise 1 / (1 + exp(-x)), overflow-safe, output in (0, 1)."""
    x = np.asarray(x)
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def d_sigmoid(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh(x: np.ndarray) -> np.ndarray:
    """Elementwise hyperbolic tangent, output in (-1, 1)."""
    return np.tanh(x)


def d_tanh(x: np.ndarray) -> np.ndarray:
    t = np.tanh(x)
    return 1.0 - t * t


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def d_relu(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    return (x > 0).astype(x.dtype)


def softmax(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability.

    Works on a single vector or on the last axis of a batch; each output
    row is positive and sums to 1.
    """
    x = np.asarray(x)
    if x.shape[-1] < 1:
        raise ShapeError(f"softmax needs at least one element, got shape {x.shape}")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def init_truncated_normal(shape, stddev: float, rng: np.random.Generator,
                          dtype=DOUBLE) -> np.ndarray:
    """N(0, stddev^2) samples with anything beyond +/- 2*stddev redrawn."""
    if stddev <= 0:
        raise ValueError(f"stddev must be positive, got {stddev}")
    out = rng.normal(0.0, stddev, size=shape)
    bad = np.abs(out) > 2.0 * stddev
    while bad.any():
        out[bad] = rng.normal(0.0, stddev, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * stddev
    return np.ascontiguousarray(out, dtype=dtype)


def init_he_uniform(shape, fan_in: int, rng: np.random.Generator,
                    dtype=DOUBLE) -> np.ndarray:
    """Uniform on [-L, L] with L = sqrt(6 / fan_in)."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    limit = np.sqrt(6.0 / fan_in)
    return np.ascontiguousarray(rng.uniform(-limit, limit, size=shape), dtype=dtype)
