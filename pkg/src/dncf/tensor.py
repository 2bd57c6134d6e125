"""Minimal dense float64 kernel: seeded RNG, Gaussian init, small linear algebra.

Matrices are 2-D row-major (C-order) numpy float64 arrays, vectors are 1-D.
All ops are pure: inputs are never mutated. The RNG is pinned to one
documented algorithm (PCG64 bit generator, normal variates via numpy's
ziggurat sampler) so that a seed reproduces the same stream on every
platform.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

# Type aliases: the kernel is backed directly by numpy arrays.
DenseMatrix = np.ndarray
DenseVector = np.ndarray

_SEED_MASK = (1 << 63) - 1


class SeededRng:
    """Deterministic random stream with derivable child streams.

    ``SeededRng(seed)`` always produces the same stream for the same seed.
    ``spawn(*keys)`` derives an independent child stream from
    ``(seed, *keys)``; children with distinct keys never overlap, which lets
    epoch sampling, validation sampling and parameter init each own a
    reproducible stream without sharing state.
    """

    def __init__(self, seed: int, *keys: int):
        self.seed = int(seed) & _SEED_MASK
        self.keys = tuple(int(k) & _SEED_MASK for k in keys)
        seq = np.random.SeedSequence([self.seed, *self.keys])
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, *keys: int) -> "SeededRng":
        return SeededRng(self.seed, *self.keys, *keys)

    def normal(self, shape, mean: float = 0.0, stddev: float = 0.01) -> np.ndarray:
        if stddev < 0:
            raise ValueError(f"stddev must be >= 0, got {stddev}")
        return self.generator.normal(mean, stddev, size=shape)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, a, size=None, replace=True) -> np.ndarray:
        return self.generator.choice(a, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, keys={self.keys})"


def gaussian_init(rows: int, cols: int, mean: float, stddev: float,
                  rng: SeededRng) -> DenseMatrix:
    """(rows x cols) matrix of i.i.d. Normal(mean, stddev^2) entries."""
    return rng.normal((rows, cols), mean=mean, stddev=stddev)


def gaussian_vector(n: int, mean: float, stddev: float, rng: SeededRng) -> DenseVector:
    return rng.normal((n,), mean=mean, stddev=stddev)


def _check_same_length(a: DenseVector, b: DenseVector) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")


def elementwise(op: str, a: DenseVector, b: DenseVector) -> DenseVector:
    """Componentwise add / sub / mul of two equal-length vectors."""
    _check_same_length(np.asarray(a), np.asarray(b))
    if op == "add":
        return np.add(a, b)
    if op == "sub":
        return np.subtract(a, b)
    if op == "mul":
        return np.multiply(a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


def matvec(w: DenseMatrix, x: DenseVector) -> DenseVector:
    w = np.asarray(w)
    x = np.asarray(x)
    if w.ndim != 2 or x.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec shape mismatch: {w.shape} x {x.shape}")
    return w @ x


def dot(a: DenseVector, b: DenseVector) -> float:
    _check_same_length(np.asarray(a), np.asarray(b))
    return float(np.dot(a, b))


def concat(a: DenseVector, b: DenseVector) -> DenseVector:
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel(),
                           np.asarray(b, dtype=np.float64).ravel()])


def scale(a: DenseVector, s: float) -> DenseVector:
    return np.asarray(a) * float(s)


def check_finite(x: np.ndarray, name: str = "tensor") -> None:
    """Raise if any entry is NaN/inf; used in tests and the optimizer."""
    if not np.isfinite(x).all():
        raise FloatingPointError(f"non-finite values in {name}")
