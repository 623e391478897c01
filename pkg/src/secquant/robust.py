"""Poisoning defense on quantized updates and the Min-Max attack.

All defense quantities are computed in the coefficient domain of the
quantized vectors, from bit counts and per-chunk scales only. For plain SQ
that domain is the update itself; for rotated schemes norms and inner
products are those of the coefficients, which is what servers holding only
bits and scales can compute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from secquant.quantize import QuantizedVector, dequantize_coefficients, from_coefficients
from secquant.ring import DEFAULT_RING, ParameterError, Ring

Perturbation = Literal["inverse-unit", "inverse-std", "inverse-sign"]


@dataclass(frozen=True)
class DefenseConfig:
    """``psi`` is an exclusion count; ``None`` means ``ceil(exclude_fraction * n)``."""

    mu_th: float = 3.0
    psi: int | None = None
    exclude_fraction: float = 0.2
    momentum: float = 0.9

    def __post_init__(self) -> None:
        if self.mu_th <= 0:
            raise ParameterError("mu_th must be positive")
        if self.psi is not None and self.psi < 0:
            raise ParameterError("psi must be non-negative")
        if not 0 <= self.exclude_fraction < 1:
            raise ParameterError("exclude_fraction must lie in [0, 1)")
        if not 0 <= self.momentum < 1:
            raise ParameterError("momentum must lie in [0, 1)")

    def exclusions(self, n: int) -> int:
        psi = math.ceil(self.exclude_fraction * n) if self.psi is None else self.psi
        if psi >= n:
            raise ParameterError(f"cannot exclude {psi} of {n} updates")
        return psi


@dataclass(frozen=True)
class AttackConfig:
    perturbation: Perturbation = "inverse-unit"
    malicious_fraction: float = 0.2
    tol: float = 1e-9
    max_steps: int = 64
    gamma_init: float = 1.0

    def __post_init__(self) -> None:
        if self.perturbation not in ("inverse-unit", "inverse-std", "inverse-sign"):
            raise ParameterError(f"unknown perturbation {self.perturbation!r}")
        if not 0 <= self.malicious_fraction < 0.5:
            raise ParameterError("malicious fraction must lie in [0, 0.5)")
        if self.tol <= 0 or self.max_steps < 1 or self.gamma_init <= 0:
            raise ParameterError("search parameters must be positive")


# -- quantized-domain primitives ---------------------------------------------


def _check_layouts(updates: Sequence[QuantizedVector]) -> None:
    if not updates:
        raise ParameterError("need at least one update")
    layout = updates[0].layout
    if any(u.layout != layout for u in updates[1:]):
        raise ParameterError("updates use different chunk layouts")


def aggregate_coefficients(updates: Sequence[QuantizedVector]) -> np.ndarray:
    """Mean of the dequantized coefficient vectors."""
    _check_layouts(updates)
    total = np.zeros(updates[0].layout.size)
    for qv in updates:
        lo, hi = qv.scale_vectors()
        total += lo + qv.bits * (hi - lo)
    return total / len(updates)


def aggregate_quantized(updates: Sequence[QuantizedVector]) -> np.ndarray:
    """Mean of the dequantized updates, in the original domain."""
    return from_coefficients(aggregate_coefficients(updates), updates[0].layout)


def l2_norm_q(qv: QuantizedVector) -> float:
    """Norm from bit counts: each chunk adds ``zeros * s_min^2 + ones * s_max^2``."""
    total = 0.0
    for chunk in qv.chunks:
        ones = int(qv.bits[chunk.offset : chunk.offset + chunk.length].sum())
        zeros = chunk.length - ones
        total += zeros * chunk.s_min**2 + ones * chunk.s_max**2
    return math.sqrt(total)


def scale_by_norm(qv: QuantizedVector, mu_th: float, avg_norm: float) -> QuantizedVector:
    """Shrink the scales so the norm is at most ``mu_th * avg_norm``; bits stay."""
    if avg_norm <= 0:
        raise ParameterError("average norm must be positive")
    norm = l2_norm_q(qv)
    limit = mu_th * avg_norm
    if norm <= limit:
        return qv
    return qv.with_scales(limit / norm)


def inner_product_q(qv: QuantizedVector, reference) -> float:
    """``<dequantized qv, reference>`` as ``s_min * sum(ref) + (s_max - s_min) * <bits, ref>``."""
    ref = np.asarray(reference, dtype=np.float64)
    if ref.shape != qv.bits.shape:
        raise ParameterError("reference length does not match the coefficient count")
    total = 0.0
    for chunk in qv.chunks:
        piece = ref[chunk.offset : chunk.offset + chunk.length]
        bits = qv.bits[chunk.offset : chunk.offset + chunk.length]
        total += chunk.s_min * float(piece.sum()) + (chunk.s_max - chunk.s_min) * float(bits @ piece)
    return total


def cosine_similarity_q(qv: QuantizedVector, reference, *, divide_by_reference: bool = True) -> float:
    """Cosine similarity in the coefficient domain.

    With ``divide_by_reference=False`` the common factor ``1 / ||reference||``
    is skipped; rankings across updates are unchanged.
    """
    norm = l2_norm_q(qv)
    ref = np.asarray(reference, dtype=np.float64)
    ref_norm = float(np.linalg.norm(ref))
    if norm == 0 or ref_norm == 0:
        raise ParameterError("cosine similarity is undefined for zero vectors")
    score = inner_product_q(qv, ref) / norm
    return score / ref_norm if divide_by_reference else score


def cosine_distance_q(qv: QuantizedVector, reference) -> float:
    return 1.0 - cosine_similarity_q(qv, reference)


def lowest_scores(scores, count: int) -> tuple[int, ...]:
    """Indices of the ``count`` smallest scores; ties go to the lower index."""
    order = np.argsort(np.asarray(scores, dtype=np.float64), kind="stable")
    return tuple(sorted(int(i) for i in order[:count]))


# -- defense ----------------------------------------------------------------


@dataclass(frozen=True)
class AuraResult:
    aggregate: np.ndarray
    reference: np.ndarray
    excluded: tuple[int, ...]
    similarities: np.ndarray
    norms: np.ndarray
    avg_norm: float
    scaled: tuple[QuantizedVector, ...]


def aura_defend(
    updates: Sequence[QuantizedVector],
    config: DefenseConfig = DefenseConfig(),
    *,
    divide_by_reference: bool = True,
) -> AuraResult:
    """Norm-based scaling followed by exclusion of the least aligned updates."""
    _check_layouts(updates)
    n = len(updates)
    if n < 2:
        raise ParameterError("the defense needs at least two updates")
    psi = config.exclusions(n)
    reference = aggregate_coefficients(updates)
    norms = np.array([l2_norm_q(u) for u in updates])
    avg = float(norms.mean())
    scaled = tuple(scale_by_norm(u, config.mu_th, avg) for u in updates) if avg > 0 else tuple(updates)
    sims = np.array(
        [
            cosine_similarity_q(u, reference, divide_by_reference=divide_by_reference)
            if l2_norm_q(u) > 0 and np.any(reference)
            else 0.0
            for u in scaled
        ]
    )
    excluded = lowest_scores(sims, psi)
    kept = [u for i, u in enumerate(scaled) if i not in excluded]
    return AuraResult(aggregate_quantized(kept), reference, excluded, sims, norms, avg, scaled)


def verify_client_norm(
    claimed: float, reciprocal: float, qv: QuantizedVector, ring: Ring = DEFAULT_RING
) -> bool:
    """Check a client's claimed norm and its reciprocal after fixed-point rounding.

    Accepts iff ``|c^2 - N^2| <= ulp * (2|c| + 1)`` and
    ``|c * r - 1| <= ulp * (|c| + |r|)``, where ``N^2`` is the bit-count norm
    squared and ``ulp = 2^-frac``. Both bounds cover round-to-nearest encoding
    of the two claimed values.
    """
    ulp = 2.0**-ring.frac
    try:
        c = float(ring.decode(ring.encode(claimed)))
        r = float(ring.decode(ring.encode(reciprocal)))
    except ValueError:
        return False
    norm_sq = l2_norm_q(qv) ** 2
    if abs(c * c - norm_sq) > ulp * (2 * abs(c) + 1):
        return False
    return abs(c * r - 1.0) <= ulp * (abs(c) + abs(r))


# -- attack -------------------------------------------------------------------


def perturbation_vector(benign, kind: Perturbation = "inverse-unit") -> np.ndarray:
    grads = np.asarray(benign, dtype=np.float64)
    mean = grads.mean(axis=0)
    if kind == "inverse-unit":
        norm = np.linalg.norm(mean)
        return -mean / norm if norm > 0 else np.zeros_like(mean)
    if kind == "inverse-std":
        return -grads.std(axis=0)
    if kind == "inverse-sign":
        return -np.sign(mean)
    raise ParameterError(f"unknown perturbation {kind!r}")


def max_pairwise_distance(grads: np.ndarray) -> float:
    sq = np.sum(grads**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2 * grads @ grads.T
    return float(np.sqrt(max(float(d2.max()), 0.0)))


@dataclass(frozen=True)
class MinMaxResult:
    gradient: np.ndarray
    gamma: float
    bound: float
    perturbation: np.ndarray

    def max_distance(self, benign) -> float:
        return float(np.linalg.norm(np.asarray(benign) - self.gradient, axis=1).max())


def minmax_attack(
    benign, config: AttackConfig = AttackConfig(), *, perturbation=None
) -> MinMaxResult:
    """Largest ``gamma`` keeping ``mean + gamma * p`` within the benign spread.

    The feasible set is an interval starting at zero (the constraint is a
    maximum of convex functions of ``gamma``), so doubling brackets it and
    bisection finds its end.
    """
    grads = np.asarray(benign, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] < 2:
        raise ParameterError("need at least two benign gradients")
    mean = grads.mean(axis=0)
    p = (
        perturbation_vector(grads, config.perturbation)
        if perturbation is None
        else np.asarray(perturbation, dtype=np.float64)
    )
    if p.shape != mean.shape:
        raise ParameterError("perturbation length does not match the gradients")
    if not np.any(p):
        raise ParameterError("perturbation vector is zero")
    bound = max_pairwise_distance(grads)

    def feasible(gamma: float) -> bool:
        return float(np.linalg.norm(grads - (mean + gamma * p), axis=1).max()) <= bound

    lo, hi = 0.0, config.gamma_init
    while feasible(hi):
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise ParameterError("constraint does not bound gamma")
    for _ in range(config.max_steps):
        if hi - lo <= config.tol * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return MinMaxResult(mean + lo * p, lo, bound, p)
