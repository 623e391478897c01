"""Preprocessing and online protocols on masked sharings.

A masked value ``<v>`` is a public ``m_v`` plus additive shares of a random
mask ``lam_v`` with ``v = m_v + lam_v``. Bits arrive XOR-masked. Every
protocol here computes additive shares of its result locally from public
values and preprocessed mask material, then opens ``z - r`` once for a fresh
preprocessed mask ``r`` so the output is again in masked form.

Converted bits carry a scale: ``1`` for the exact conversion and ``2`` for
the approximate one, whose constant term is a multiple of one half.
"""

from __future__ import annotations

from itertools import combinations
from typing import Literal

import numpy as np

from secquant.bitconv import approx_constant
from secquant.mpc.engine import PartySet, TruncationPair
from secquant.ring import AdditiveShares, BooleanShares, MaskedShare, ParameterError

Mode = Literal["exact", "approx"]
OutputMask = AdditiveShares | TruncationPair


def bit_scale(mode: Mode) -> int:
    if mode == "exact":
        return 1
    if mode == "approx":
        return 2
    raise ParameterError(f"unknown conversion mode {mode!r}")


def add_public(shares: AdditiveShares, public) -> AdditiveShares:
    """Add a public value; only the first server touches its share."""
    ring = shares.ring
    out = np.array(shares.shares, copy=True)
    out[0] = ring.add(out[0], ring.reduce(public))
    return AdditiveShares(out, ring)


def masked_to_shares(x: MaskedShare) -> AdditiveShares:
    return add_public(x.mask, x.masked)


def _public_signed(x: MaskedShare) -> np.ndarray:
    """Public masked value as a ring element (Boolean values become 0/1)."""
    return np.asarray(x.masked, dtype=np.uint64)


def _check_same_shape(*items) -> None:
    shapes = {item.shape for item in items}
    if len(shapes) != 1:
        raise ParameterError(f"operand shapes differ: {sorted(shapes)}")


# -- preprocessing ---------------------------------------------------------


def _subsets(q: int, mode: Mode) -> list[tuple[int, ...]]:
    if mode == "exact":
        return [s for k in range(2, q + 1) for s in combinations(range(q), k)]
    return [tuple(range(k)) for k in range(2, q + 1)]


def pi_bita_pre(parties: PartySet, lam: BooleanShares, mode: Mode = "exact") -> AdditiveShares:
    """Arithmetic shares of the converted mask bit, scaled by ``bit_scale(mode)``.

    Server ``j`` holds the XOR share ``lam_j``. Each needed product of shares
    is built as (shared prefix product) times (a bit held by one server): for
    every server holding part of the prefix, one OT lets the bit holder learn
    ``r + bit * prefix_share`` while the sender keeps ``-r``. With three
    servers the exact conversion costs five OTs per bit and the approximate
    one three.
    """
    q, ring = parties.q, parties.ring
    if lam.q != q:
        raise ParameterError(f"expected {q} Boolean shares, got {lam.q}")
    sb = bit_scale(mode)
    shape = lam.shape
    bits = [lam.shares[j].astype(np.uint64) for j in range(q)]
    products: dict[tuple[int, ...], dict[int, np.ndarray]] = {(j,): {j: bits[j]} for j in range(q)}
    for subset in _subsets(q, mode):
        prefix, holder = products[subset[:-1]], subset[-1]
        shares: dict[int, np.ndarray] = {holder: np.zeros(shape, dtype=np.uint64)}
        for sender, share in prefix.items():
            r = ring.random(parties.rng(sender), shape)
            got = parties.dealer.transfer(
                sender, holder, r, ring.add(r, share), bits[holder], purpose=f"bita/{mode}"
            )
            shares[sender] = ring.neg(r)
            shares[holder] = ring.add(shares[holder], got)
        products[subset] = shares

    out = np.zeros((q, *shape), dtype=np.uint64)
    for subset in _subsets(q, mode) + [(j,) for j in range(q)]:
        k = len(subset)
        if mode == "approx" and 1 < k < q:
            continue
        coeff = ring.reduce(sb * (-2) ** (k - 1))
        for j, share in products[subset].items():
            out[j] = ring.add(out[j], ring.mul(share, coeff))
    if mode == "approx":
        out[0] = ring.add(out[0], ring.reduce(int(sb * approx_constant(q))))
    parties.ledger.count_op(f"BitA_pre/{mode}", "preprocessing", int(np.prod(shape, dtype=np.int64)))
    return AdditiveShares(out, ring)


# -- local evaluation ------------------------------------------------------


def local_bita(x: MaskedShare, converted: AdditiveShares, mode: Mode) -> AdditiveShares:
    """Shares of ``sb * b`` from ``b = m + (1 - 2m) * Lam``; no interaction."""
    if not x.boolean:
        raise ParameterError("bit conversion expects a Boolean masked share")
    _check_same_shape(x, converted)
    ring = converted.ring
    m = _public_signed(x)
    sign = ring.reduce(1 - 2 * m.astype(np.int64))
    return add_public(converted.scale(sign), ring.mul(m, bit_scale(mode)))


def _local_product(x: MaskedShare, y: MaskedShare, cross: AdditiveShares) -> AdditiveShares:
    """Shares of ``x * y`` given shares of ``lam_x * lam_y``."""
    ring = cross.ring
    mx, my = _public_signed(x), _public_signed(y)
    z = cross + x.mask.scale(my) + y.mask.scale(mx)
    return add_public(z, ring.mul(mx, my))


def _open_masked(parties: PartySet, z: AdditiveShares, out: OutputMask, *, tag: str) -> MaskedShare:
    if isinstance(out, TruncationPair):
        _check_same_shape(z, out.r)
        opened = parties.open(z - out.r, tag=tag)
        return MaskedShare(parties.ring.shift_signed(opened, out.shift), out.shifted)
    _check_same_shape(z, out)
    return MaskedShare(parties.open(z - out, tag=tag), out)


# -- online protocols --------------------------------------------------------


def pi_bita(
    parties: PartySet, x: MaskedShare, converted: AdditiveShares, out: AdditiveShares, mode: Mode = "exact"
) -> MaskedShare:
    """Boolean-masked bits to arithmetic-masked values scaled by ``bit_scale(mode)``."""
    return _open_masked(parties, local_bita(x, converted, mode), out, tag="bita")


def pi_bita_sum(
    parties: PartySet, x: MaskedShare, converted: AdditiveShares, out: OutputMask, mode: Mode = "exact"
) -> MaskedShare:
    """Column sums (over axis 0) of converted bits with one opening per column."""
    return _open_masked(parties, local_bita(x, converted, mode).sum(axis=0), out, tag="bita_sum")


def pi_mult(
    parties: PartySet, x: MaskedShare, y: MaskedShare, cross: AdditiveShares, out: OutputMask
) -> MaskedShare:
    _check_same_shape(x, y, cross)
    return _open_masked(parties, _local_product(x, y, cross), out, tag="mult")


def pi_dotp(
    parties: PartySet, x: MaskedShare, y: MaskedShare, cross: AdditiveShares, out: OutputMask
) -> MaskedShare:
    """Inner products along axis 0; the products are summed before the single opening.

    Pass a ``TruncationPair`` as ``out`` to rescale fixed-point products.
    """
    _check_same_shape(x, y, cross)
    return _open_masked(parties, _local_product(x, y, cross).sum(axis=0), out, tag="dotp")


def pi_bit_inj(
    parties: PartySet,
    bits: MaskedShare,
    values: MaskedShare,
    converted: AdditiveShares,
    cross: AdditiveShares,
    out: OutputMask,
    mode: Mode = "exact",
) -> MaskedShare:
    """Sums along axis 0 of ``bit * value`` with one opening per column.

    ``converted`` holds the converted bit masks ``Lam`` and ``cross`` holds
    shares of ``Lam * lam_value``, both from preprocessing.
    """
    if not bits.boolean or values.boolean:
        raise ParameterError("bit injection takes Boolean bits and arithmetic values")
    _check_same_shape(bits, values, converted, cross)
    ring = converted.ring
    sb = bit_scale(mode)
    m = _public_signed(bits)
    sign = ring.reduce(1 - 2 * m.astype(np.int64))
    mv = _public_signed(values)
    # b * v = sb*m*v + (1 - 2m) * Lam * v, with v = mv + lam_v
    z = values.mask.scale(ring.mul(m, sb))
    z = z + (converted.scale(mv) + cross).scale(sign)
    z = add_public(z, ring.mul(ring.mul(m, sb), mv))
    return _open_masked(parties, z.sum(axis=0), out, tag="bit_inj")
