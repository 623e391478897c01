"""Simulated servers, the ideal OT dealer and truncation pairs.

Protocols run on a deterministic sequential scheduler: every share a server
holds lives in one row of a stacked array, each server draws randomness from
its own seeded stream, and every message is charged to the ledger before the
receiving row is touched.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from secquant.mpc.ledger import CostLedger
from secquant.ring import (
    DEFAULT_RING,
    AdditiveShares,
    ParameterError,
    Ring,
    SharedRandomness,
    server_name,
    share_additive,
)

# Amortized bits per 1-out-of-2 OT, fitted to published communication totals.
CALIBRATED_OT_BITS = 67.02


class IdealOtDealer:
    """Delivers ``m_c`` to the receiver and charges a fixed cost per OT."""

    def __init__(self, ledger: CostLedger, bits_per_ot: float = CALIBRATED_OT_BITS) -> None:
        self.ledger = ledger
        self.bits_per_ot = bits_per_ot
        self.counts: Counter = Counter()

    def transfer(
        self, sender: int, receiver: int, m0: np.ndarray, m1: np.ndarray, choice, *, purpose: str
    ) -> np.ndarray:
        if sender == receiver:
            raise ParameterError("OT needs two distinct parties")
        choice = np.asarray(choice).astype(bool)
        if not (m0.shape == m1.shape == choice.shape):
            raise ParameterError("OT messages and choices must share a shape")
        count = int(choice.size)
        self.counts[(server_name(sender), server_name(receiver), purpose)] += count
        self.ledger.charge(
            server_name(sender),
            server_name(receiver),
            round(count * self.bits_per_ot),
            phase="preprocessing",
            tag=f"ot/{purpose}",
        )
        self.ledger.count_op(f"OT/{purpose}", "preprocessing", count)
        return np.where(choice, m1, m0)

    def total(self, purpose: str | None = None) -> int:
        return sum(n for (_, _, p), n in self.counts.items() if purpose is None or p == purpose)


@dataclass(frozen=True)
class TruncationPair:
    """Shares of a random ``r`` and of ``r`` arithmetically shifted right."""

    r: AdditiveShares
    shifted: AdditiveShares
    shift: int


class PartySet:
    """``q`` semi-honest servers with per-server PRNG streams and a shared ledger."""

    def __init__(
        self,
        q: int = 3,
        ring: Ring = DEFAULT_RING,
        seed: int = 0,
        *,
        ledger: CostLedger | None = None,
        bits_per_ot: float = CALIBRATED_OT_BITS,
    ) -> None:
        if q < 2:
            raise ParameterError("need at least two servers")
        self.q = q
        self.ring = ring
        self.shared = SharedRandomness(seed)
        self.ledger = ledger if ledger is not None else CostLedger()
        self.dealer = IdealOtDealer(self.ledger, bits_per_ot)
        self._rngs = [self.shared.stream(server_name(j), "local") for j in range(q)]
        self._dealer_rng = self.shared.stream("dealer", "local")
        self.phase = "preprocessing"

    @property
    def names(self) -> list[str]:
        return [server_name(j) for j in range(self.q)]

    def rng(self, party: int) -> np.random.Generator:
        return self._rngs[party]

    @contextmanager
    def in_phase(self, phase: str) -> Iterator[None]:
        previous, self.phase = self.phase, phase
        try:
            yield
        finally:
            self.phase = previous

    # -- local generation -------------------------------------------------

    def random_shares(self, shape) -> AdditiveShares:
        """Each server samples its own share; nobody knows the sum."""
        return AdditiveShares(
            np.stack([self.ring.random(self._rngs[j], shape) for j in range(self.q)]), self.ring
        )

    def zeros(self, shape) -> AdditiveShares:
        return AdditiveShares(np.zeros((self.q, *np.shape(np.empty(shape))), np.uint64), self.ring)

    def truncation_pair(self, shape, shift: int) -> TruncationPair:
        if shift < 0:
            raise ParameterError("shift must be non-negative")
        r = self.ring.random(self._dealer_rng, shape)
        shifted = self.ring.shift_signed(r, shift)
        self.ledger.count_op("Trunc_pre", "preprocessing", int(np.size(r)))
        return TruncationPair(
            share_additive(r, self.q, self._dealer_rng, self.ring),
            share_additive(shifted, self.q, self._dealer_rng, self.ring),
            shift,
        )

    # -- communication ----------------------------------------------------

    def open(self, shares: AdditiveShares, *, tag: str) -> np.ndarray:
        """Every server sends its share to S1, which reconstructs and relays."""
        bits = int(np.prod(shares.shape, dtype=np.int64)) * self.ring.bits
        for j in range(self.q):
            self.ledger.charge(server_name(j), server_name(0), bits, phase=self.phase, tag=tag)
        self.ledger.next_round()
        for j in range(1, self.q):
            self.ledger.charge(server_name(0), server_name(j), bits, phase=self.phase, tag=tag)
        self.ledger.next_round()
        self.ledger.count_op(f"open/{tag}", self.phase, int(np.prod(shares.shape, dtype=np.int64)))
        return shares.reconstruct()

    def reveal(self, shares: AdditiveShares, to: int = 0, *, tag: str = "output") -> np.ndarray:
        """Reconstruct towards one server only."""
        bits = int(np.prod(shares.shape, dtype=np.int64)) * self.ring.bits
        for j in range(self.q):
            if j != to:
                self.ledger.charge(server_name(j), server_name(to), bits, phase="output", tag=tag)
        self.ledger.next_round()
        return shares.reconstruct()

    # -- preprocessing products -------------------------------------------

    def product(self, x: AdditiveShares, y: AdditiveShares, *, purpose: str = "mult") -> AdditiveShares:
        """Shares of ``x * y`` (elementwise) using bitwise OT products for cross terms."""
        if x.shape != y.shape:
            raise ParameterError("operands must share a shape")
        ring = self.ring
        shape = x.shape
        out = [ring.mul(x.shares[j], y.shares[j]) for j in range(self.q)]
        powers = np.arange(ring.bits, dtype=np.uint64)
        for i in range(self.q):
            for j in range(self.q):
                if i == j:
                    continue
                choice = ((y.shares[j][..., None] >> powers) & np.uint64(1)).astype(np.uint8)
                r = ring.random(self._rngs[i], (*shape, ring.bits))
                m1 = ring.add(r, ring.mul(x.shares[i][..., None], np.uint64(1) << powers))
                got = self.dealer.transfer(i, j, r, m1, choice, purpose=purpose)
                out[i] = ring.sub(out[i], ring.sum(r, axis=-1))
                out[j] = ring.add(out[j], ring.sum(got, axis=-1))
        self.ledger.count_op("Mult_pre", "preprocessing", int(np.prod(shape, dtype=np.int64)))
        return AdditiveShares(np.stack(out), ring)
