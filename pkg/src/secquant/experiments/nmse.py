"""Monte-Carlo NMSE of quantized aggregation pipelines.

The secure pipelines are simulated at the arithmetic level: bits are masked
with XOR-shared random masks exactly as servers would hold them, converted
with the exact or approximate rule, and combined per client (approaches I and
II, which compute the same value) or with SepAgg (approach III). The global
approach is the per-client pipeline with one shared scale pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from secquant.bitconv import approx_bit_to_arith_float
from secquant.experiments.config import ExperimentConfig
from secquant.quantize import from_coefficients, make_layout, nmse, sample_bits, to_coefficients


def convert_bits(bits: np.ndarray, q: int, rng: np.random.Generator, mode: str) -> np.ndarray:
    """Arithmetic values the servers would obtain for ``bits`` under masked evaluation."""
    if mode == "exact":
        return bits.astype(np.float64)
    shares = rng.integers(0, 2, size=bits.shape + (q,), dtype=np.uint8)
    lam = np.bitwise_xor.reduce(shares, axis=-1)
    public = bits.astype(np.uint8) ^ lam
    converted = approx_bit_to_arith_float(shares)
    return public + (1.0 - 2.0 * public) * converted


def simulate_aggregate(x: np.ndarray, config: ExperimentConfig, rng: np.random.Generator, seed: int) -> np.ndarray:
    """Estimated mean of the rows of ``x`` through the configured pipeline."""
    if config.scheme == "none":
        return x.mean(axis=0)
    layout = make_layout(x.shape[1], config.scheme, seed)
    coeffs = to_coefficients(x, layout)
    if config.scales == "global":
        lo = np.full_like(coeffs, coeffs.min())
        hi = np.full_like(coeffs, coeffs.max())
    else:
        lo = np.empty_like(coeffs)
        hi = np.empty_like(coeffs)
        for offset, length in zip(layout.offsets, layout.lengths):
            piece = coeffs[:, offset : offset + length]
            lo[:, offset : offset + length] = piece.min(axis=1, keepdims=True)
            hi[:, offset : offset + length] = piece.max(axis=1, keepdims=True)
    bits = sample_bits(coeffs, lo, hi, rng)
    values = convert_bits(bits, config.q, rng, config.conversion)
    if config.sepagg:
        mean = lo.mean(axis=0) + values.mean(axis=0) * (hi - lo).mean(axis=0)
    else:
        mean = (lo + values * (hi - lo)).mean(axis=0)
    return from_coefficients(mean, layout)


@dataclass(frozen=True)
class NmseCell:
    scheme: str
    scales: str
    mode: str
    d: int
    n: int
    trials: int
    nmse_mean: float
    nmse_stderr: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


def _cell_rng(seed: int, d: int, n: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, d, n, trial])


def run_cell(config: ExperimentConfig, d: int, n: int) -> NmseCell:
    values = []
    for trial in range(config.trials):
        rng = _cell_rng(config.seed, d, n, trial)
        x = rng.lognormal(config.lognormal_mean, config.lognormal_sigma, size=(n, d))
        agg = simulate_aggregate(x, config, rng, seed=config.seed * 7919 + trial)
        values.append(nmse(agg, x))
    arr = np.array(values)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return NmseCell(config.scheme, config.scales, config.mode, d, n, config.trials, float(arr.mean()), stderr)


def run_nmse_sweep(config: ExperimentConfig) -> list[NmseCell]:
    cells = [run_cell(config, d, n) for d in config.dims for n in config.clients]
    return sorted(cells, key=lambda c: (c.scheme, c.scales, c.mode, c.d, c.n))
