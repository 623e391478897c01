"""Kashin representation over a Hadamard-based tight frame.

The frame for a length-``c`` input with ``N`` coefficients is the first ``c``
rows of an orthogonal ``N x N`` transform. That transform alternates random
signs, a random permutation and blockwise normalized Hadamard transforms, so
it is fast for any ``N`` that is a multiple of a power of two. Because the
transform is orthogonal, the frame is tight (``U U^T = I``) and synthesis is
plain matrix-vector multiplication, which keeps quantize-then-sum equal to
sum-then-reconstruct.

Decomposition repeatedly clips the frame coefficients of the residual to a
level proportional to its norm over ``sqrt(N)``; a final unclipped step
absorbs what is left so reconstruction is exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from secquant.hadamard import fwht, next_power_of_two
from secquant.ring import InputError, ParameterError

DEFAULT_LAMBDA = 1.15
DEFAULT_GRANULE = 512
DEFAULT_ITERATIONS = 3
DEFAULT_LEVEL = 1.0


def kashin_dim(c: int, lam: float = DEFAULT_LAMBDA, granule: int = DEFAULT_GRANULE) -> int:
    """Coefficient count for a length-``c`` input: ``lam*c`` rounded up to the granule.

    Inputs shorter than the granule round to the next power of two instead.
    """
    if c < 1:
        raise ParameterError("length must be positive")
    if lam < 1:
        raise ParameterError("redundancy factor must be at least 1")
    g = min(granule, next_power_of_two(c))
    return max(g, math.ceil(lam * c / g) * g)


class KashinFrame:
    """Tight frame with ``dim`` rows and ``size`` columns."""

    def __init__(self, dim: int, size: int, seed: int) -> None:
        if size < dim:
            raise ParameterError("a frame needs at least as many columns as rows")
        self.dim = dim
        self.size = size
        self.block = size & -size
        if self.block < 2 and size > 1:
            raise ParameterError("coefficient count must be even")
        if self.block == size:
            rounds = 1
        else:
            rounds = max(2, math.ceil(math.log(size) / math.log(self.block)))
        rng = np.random.default_rng([seed & (2**64 - 1), dim, size, 0x4B53])
        self._signs = [rng.choice(np.array([-1.0, 1.0]), size=size) for _ in range(rounds)]
        self._perms = [rng.permutation(size) for _ in range(rounds)]
        self._inverse = [np.argsort(p) for p in self._perms]
        self._norm = math.sqrt(self.block)

    def _blocks(self, y: np.ndarray) -> np.ndarray:
        lead = y.shape[:-1]
        blocks = y.reshape(*lead, self.size // self.block, self.block)
        return fwht(blocks).reshape(*lead, self.size) / self._norm

    def forward(self, y: np.ndarray) -> np.ndarray:
        """The orthogonal ``N x N`` transform."""
        for signs, perm in zip(self._signs, self._perms):
            y = self._blocks((y * signs)[..., perm])
        return y

    def backward(self, y: np.ndarray) -> np.ndarray:
        for signs, inverse in zip(reversed(self._signs), reversed(self._inverse)):
            y = self._blocks(y)[..., inverse] * signs
        return y

    def analysis(self, x: np.ndarray) -> np.ndarray:
        """``U^T x``: embed in ``R^N`` and transform."""
        padded = np.zeros(x.shape[:-1] + (self.size,))
        padded[..., : self.dim] = x
        return self.forward(padded)

    def synthesis(self, a: np.ndarray) -> np.ndarray:
        """``U a``."""
        return self.backward(np.asarray(a, dtype=np.float64))[..., : self.dim]


@lru_cache(maxsize=64)
def frame(dim: int, size: int, seed: int) -> KashinFrame:
    return KashinFrame(dim, size, seed)


@dataclass(frozen=True)
class KashinParams:
    lam: float = DEFAULT_LAMBDA
    iterations: int = DEFAULT_ITERATIONS
    level: float = DEFAULT_LEVEL
    granule: int = DEFAULT_GRANULE


def kashin_decompose(
    x,
    lam: float = DEFAULT_LAMBDA,
    iterations: int = DEFAULT_ITERATIONS,
    *,
    seed: int = 0,
    level: float = DEFAULT_LEVEL,
    granule: int = DEFAULT_GRANULE,
    size: int | None = None,
) -> np.ndarray:
    """Kashin coefficients of ``x`` (batched along leading axes)."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError("input contains NaN or Inf")
    if iterations < 0:
        raise ParameterError("iterations must be non-negative")
    dim = arr.shape[-1]
    n = kashin_dim(dim, lam, granule) if size is None else size
    fr = frame(dim, n, seed)
    coeffs = np.zeros(arr.shape[:-1] + (n,))
    residual = arr.copy()
    for _ in range(iterations):
        b = fr.analysis(residual)
        bound = level * np.linalg.norm(residual, axis=-1, keepdims=True) / math.sqrt(n)
        clipped = np.clip(b, -bound, bound)
        coeffs += clipped
        residual = residual - fr.synthesis(clipped)
    coeffs += fr.analysis(residual)
    return coeffs


def kashin_reconstruct(a, dim: int, *, seed: int = 0) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    return frame(dim, arr.shape[-1], seed).synthesis(arr)
