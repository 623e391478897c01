"""Fast Walsh-Hadamard transform and the randomized rotation built on it."""

from __future__ import annotations

import numpy as np

from secquant.ring import InputError, ParameterError


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    if n < 1:
        raise ParameterError("length must be positive")
    return 1 << (n - 1).bit_length()


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis."""
    out = np.array(x, dtype=np.float64, copy=True)
    n = out.shape[-1]
    if not is_power_of_two(n):
        raise ParameterError(f"Hadamard length must be a power of two, got {n}")
    lead = out.shape[:-1]
    h = 1
    while h < n:
        view = out.reshape(*lead, n // (2 * h), 2, h)
        top = view[..., 0, :].copy()
        bottom = view[..., 1, :]
        view[..., 0, :] = top + bottom
        view[..., 1, :] = top - bottom
        h *= 2
    return out


def random_signs(seed: int, n: int, salt: int = 0) -> np.ndarray:
    rng = np.random.default_rng([seed & (2**64 - 1), n, salt, 0x4844])
    return rng.choice(np.array([-1.0, 1.0]), size=n)


def _signs(n: int, seed: int | None, signs: np.ndarray | None, salt: int) -> np.ndarray:
    if signs is not None:
        signs = np.asarray(signs, dtype=np.float64)
        if signs.shape != (n,):
            raise ParameterError("sign vector length must match the input")
        return signs
    if seed is None:
        raise ParameterError("pass either a seed or an explicit sign vector")
    return random_signs(seed, n, salt)


def hadamard_rotate(
    x, seed: int | None = None, *, signs: np.ndarray | None = None, salt: int = 0
) -> np.ndarray:
    """``H D x / sqrt(n)`` with ``D`` a seed-derived random sign diagonal."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError("input contains NaN or Inf")
    n = arr.shape[-1]
    if not is_power_of_two(n):
        raise ParameterError(f"Hadamard length must be a power of two, got {n}")
    d = _signs(n, seed, signs, salt)
    return fwht(arr * d) / np.sqrt(n)


def inverse_hadamard_rotate(
    y, seed: int | None = None, *, signs: np.ndarray | None = None, salt: int = 0
) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    n = arr.shape[-1]
    if not is_power_of_two(n):
        raise ParameterError(f"Hadamard length must be a power of two, got {n}")
    d = _signs(n, seed, signs, salt)
    return fwht(arr) / np.sqrt(n) * d
