"""Secure aggregation of quantized client updates.

Every client ``i`` contributes bits ``B[i]`` and scales ``U[i] <= V[i]``;
the target is ``sum_i U[i] + B[i] * (V[i] - U[i])`` per coordinate. Scales
are either one pair per client (shape ``(n,)``) or one pair per coordinate
(shape ``(n, m)``, for chunked layouts expanded to coordinates).

No approach truncates: bits stay integers (or halves, in approximate mode),
so products with fixed-point scales never need rescaling and the exact
approaches reproduce the plaintext aggregate bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from secquant.mpc.engine import PartySet
from secquant.mpc.ledger import CostLedger
from secquant.mpc.protocols import (
    Mode,
    add_public,
    bit_scale,
    masked_to_shares,
    pi_bit_inj,
    pi_bita,
    pi_bita_pre,
    pi_bita_sum,
    pi_dotp,
    pi_mult,
)
from secquant.ring import (
    DEFAULT_RING,
    AdditiveShares,
    InputError,
    MaskedShare,
    ParameterError,
    Ring,
    SharedRandomness,
    client_share_input,
)


@dataclass(frozen=True)
class AggregationInputs:
    """Masked client inputs as held by the servers."""

    bits: MaskedShare  # Boolean, (n, m)
    low: MaskedShare  # arithmetic fixed point, (n,) or (n, m)
    high: MaskedShare

    def __post_init__(self) -> None:
        if not self.bits.boolean or self.low.boolean or self.high.boolean:
            raise ParameterError("expected Boolean bits and arithmetic scales")
        if len(self.bits.shape) != 2:
            raise ParameterError("bits must form an n x m matrix")
        n, m = self.bits.shape
        for scale in (self.low, self.high):
            if scale.shape not in ((n,), (n, m)):
                raise ParameterError(f"scales must have shape ({n},) or ({n}, {m}), got {scale.shape}")
        if self.low.shape != self.high.shape:
            raise ParameterError("low and high scales differ in shape")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def m(self) -> int:
        return self.bits.shape[1]


def client_name(index: int) -> str:
    return f"C{index + 1}"


def share_inputs(
    bits,
    low,
    high,
    q: int = 3,
    *,
    seed: int = 0,
    ring: Ring = DEFAULT_RING,
    ledger: CostLedger | None = None,
) -> AggregationInputs:
    """Each client masks its row and uploads it once to the first server."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 2:
        raise ParameterError("bits must form an n x m matrix")
    if bits.size and (bits.min() < 0 or bits.max() > 1):
        raise InputError("bits must be 0/1")
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if low.shape != high.shape:
        raise ParameterError("low and high scales differ in shape")
    if np.any(low > high):
        raise InputError("every low scale must not exceed its high scale")
    shared = SharedRandomness(seed)
    rows_b, rows_u, rows_v = [], [], []
    for i in range(bits.shape[0]):
        client = client_name(i)
        kw = dict(client=client, ring=ring, ledger=ledger)
        rows_b.append(client_share_input(bits[i], q, shared, tag="bits", boolean=True, **kw))
        rows_u.append(client_share_input(ring.encode(low[i]), q, shared, tag="low", **kw))
        rows_v.append(client_share_input(ring.encode(high[i]), q, shared, tag="high", **kw))

    def stack(rows: list[MaskedShare]) -> MaskedShare:
        masks = np.stack([r.mask.shares for r in rows], axis=1)
        mask = type(rows[0].mask)(masks) if rows[0].boolean else AdditiveShares(masks, ring)
        return MaskedShare(np.stack([r.masked for r in rows]), mask)

    return AggregationInputs(stack(rows_b), stack(rows_u), stack(rows_v))


@dataclass(frozen=True)
class SecAggResult:
    """Opened aggregate as raw ring elements plus how to read them.

    ``raw`` encodes ``divisor * aggregate`` with ``frac_bits`` fractional bits.
    """

    raw: np.ndarray
    frac_bits: int
    divisor: int
    ring: Ring
    ledger: CostLedger

    def reveal(self) -> np.ndarray:
        return self.ring.decode(self.raw, self.frac_bits) / self.divisor


def plaintext_aggregate(bits, low, high) -> np.ndarray:
    """Reference value ``sum_i low_i + bits_i * (high_i - low_i)``."""
    bits = np.asarray(bits, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if low.ndim == 1:
        low, high = low[:, None], high[:, None]
    return np.sum(low + bits * (high - low), axis=0)


def sepagg_aggregate(bits, low, high) -> np.ndarray:
    """Plaintext SepAgg value: the bit-scale products replaced by products of sums."""
    bits = np.asarray(bits, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if low.ndim == 1:
        low, high = low[:, None], high[:, None]
    n = bits.shape[0]
    spread = np.broadcast_to(high - low, bits.shape)
    return np.sum(np.broadcast_to(low, bits.shape), axis=0) + bits.sum(axis=0) * spread.sum(axis=0) / n


def _spread(inputs: AggregationInputs) -> MaskedShare:
    """``V - U`` broadcast to ``(n, m)``; local because masking is linear."""
    ring = inputs.low.mask.ring
    shape = inputs.bits.shape
    masked = ring.sub(inputs.high.masked, inputs.low.masked)
    mask = inputs.high.mask - inputs.low.mask
    if masked.shape != shape:
        masked = np.broadcast_to(masked[:, None], shape)
        mask = AdditiveShares(np.broadcast_to(mask.shares[:, :, None], (mask.q, *shape)), ring)
    return MaskedShare(masked, mask)


def _low_total(inputs: AggregationInputs) -> AdditiveShares:
    """Shares of ``sum_i U[i]`` per coordinate."""
    low = masked_to_shares(inputs.low)
    if low.shape != inputs.bits.shape:
        total = low.sum(axis=0)
        return AdditiveShares(np.repeat(total.shares[:, None], inputs.m, axis=1), low.ring)
    return low.sum(axis=0)


def _finish(parties: PartySet, shares: AdditiveShares, sb: int, divisor: int) -> SecAggResult:
    with parties.in_phase("output"):
        raw = parties.open(shares, tag="result")
    frac = parties.ring.frac + int(sb).bit_length() - 1
    return SecAggResult(raw, frac, divisor, parties.ring, parties.ledger)


def _check(parties: PartySet, inputs: AggregationInputs) -> None:
    if inputs.bits.mask.q != parties.q:
        raise ParameterError(f"inputs are shared among {inputs.bits.mask.q} servers, not {parties.q}")
    if inputs.low.mask.ring != parties.ring:
        raise ParameterError("inputs and servers use different rings")


def secagg_approach1(parties: PartySet, inputs: AggregationInputs, mode: Mode = "exact") -> SecAggResult:
    """Convert every bit, then one inner product per coordinate against the spreads."""
    _check(parties, inputs)
    sb = bit_scale(mode)
    spread = _spread(inputs)
    shape = inputs.bits.shape
    with parties.in_phase("preprocessing"):
        converted = pi_bita_pre(parties, inputs.bits.mask, mode)
        bit_masks = parties.random_shares(shape)
        cross = parties.product(bit_masks, spread.mask)
        out = parties.random_shares((inputs.m,))
    with parties.in_phase("online"):
        arith_bits = pi_bita(parties, inputs.bits, converted, bit_masks, mode)
        weighted = pi_dotp(parties, arith_bits, spread, cross, out)
    total = _low_total(inputs).scale(sb) + masked_to_shares(weighted)
    return _finish(parties, total, sb, 1)


def secagg_approach2(parties: PartySet, inputs: AggregationInputs, mode: Mode = "exact") -> SecAggResult:
    """Inject the bits into the spreads directly; one opening per coordinate."""
    _check(parties, inputs)
    sb = bit_scale(mode)
    spread = _spread(inputs)
    with parties.in_phase("preprocessing"):
        converted = pi_bita_pre(parties, inputs.bits.mask, mode)
        cross = parties.product(converted, spread.mask)
        out = parties.random_shares((inputs.m,))
    with parties.in_phase("online"):
        weighted = pi_bit_inj(parties, inputs.bits, spread, converted, cross, out, mode)
    total = _low_total(inputs).scale(sb) + masked_to_shares(weighted)
    return _finish(parties, total, sb, 1)


def secagg_approach3(parties: PartySet, inputs: AggregationInputs, mode: Mode = "exact") -> SecAggResult:
    """SepAgg: sum bits and spreads separately, then one product per coordinate.

    The opened value is ``n`` times the estimate; the division happens after
    opening (``SecAggResult.divisor``) so no fixed-point reciprocal is needed.
    """
    _check(parties, inputs)
    sb = bit_scale(mode)
    n, m = inputs.bits.shape
    spread = _spread(inputs)
    spread_total_mask = spread.mask.sum(axis=0)
    with parties.in_phase("preprocessing"):
        converted = pi_bita_pre(parties, inputs.bits.mask, mode)
        count_mask = parties.random_shares((m,))
        cross = parties.product(count_mask, spread_total_mask)
        out = parties.random_shares((m,))
    with parties.in_phase("online"):
        counts = pi_bita_sum(parties, inputs.bits, converted, count_mask, mode)
        ring = parties.ring
        spread_total = MaskedShare(ring.sum(spread.masked, axis=0), spread_total_mask)
        weighted = pi_mult(parties, counts, spread_total, cross, out)
    total = _low_total(inputs).scale(n * sb) + masked_to_shares(weighted)
    return _finish(parties, total, sb, n)


def secagg_global(
    parties: PartySet, bits: MaskedShare, low: float, high: float, mode: Mode = "exact"
) -> SecAggResult:
    """Aggregation with public scales shared by all clients: only bits are summed securely."""
    if not bits.boolean or len(bits.shape) != 2:
        raise ParameterError("expected an n x m Boolean masked matrix")
    if low > high:
        raise InputError("low scale exceeds high scale")
    ring = parties.ring
    sb = bit_scale(mode)
    n, m = bits.shape
    with parties.in_phase("preprocessing"):
        converted = pi_bita_pre(parties, bits.mask, mode)
        count_mask = parties.random_shares((m,))
    with parties.in_phase("online"):
        counts = pi_bita_sum(parties, bits, converted, count_mask, mode)
    lo = int(ring.to_signed(ring.encode(low)))
    spread = ring.encode(high - low)
    total = add_public(masked_to_shares(counts).scale(spread), np.full(m, n * sb * lo, dtype=np.int64))
    return _finish(parties, total, sb, 1)


APPROACHES = {
    "approach1": secagg_approach1,
    "approach2": secagg_approach2,
    "approach3": secagg_approach3,
}
