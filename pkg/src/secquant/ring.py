"""Fixed-point arithmetic over Z_2^l and secret-sharing containers.

Ring elements are stored as ``numpy.uint64`` arrays and reduced modulo
``2**bits`` after every operation, so rings with up to 64 bits share one code
path. Shares are stacked along a leading party axis: an ``AdditiveShares`` of
shape ``(q, *shape)`` holds one share per server.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np

if TYPE_CHECKING:
    from secquant.mpc.ledger import CostLedger


class ParameterError(ValueError):
    """An argument violates a structural precondition."""


class RangeError(ValueError):
    """A value does not fit the fixed-point range of the ring."""


class InputError(ValueError):
    """Input data is malformed (NaN, Inf, wrong shape)."""


class IntegerSource(Protocol):
    """Anything with a ``numpy.random.Generator``-compatible ``integers``."""

    def integers(self, low, high=None, size=None, dtype=np.int64, endpoint=False): ...


@dataclass(frozen=True)
class Ring:
    """The ring Z_2^bits with ``frac`` fractional bits for fixed-point use."""

    bits: int = 32
    frac: int = 16

    def __post_init__(self) -> None:
        if not 2 <= self.bits <= 64:
            raise ParameterError(f"ring width must be in [2, 64], got {self.bits}")
        if not 0 <= self.frac < self.bits - 1:
            raise ParameterError(f"fractional bits must be in [0, {self.bits - 2}]")

    @property
    def modulus(self) -> int:
        return 1 << self.bits

    @property
    def mask(self) -> np.uint64:
        return np.uint64(self.modulus - 1)

    @property
    def max_abs(self) -> float:
        """Exclusive bound on encodable magnitudes."""
        return float(2 ** (self.bits - self.frac - 1))

    # -- conversion -------------------------------------------------------

    def reduce(self, values) -> np.ndarray:
        """Map integers (Python ints, signed or unsigned arrays) into the ring."""
        arr = np.asarray(values)
        if arr.dtype == object:
            flat = [int(v) % self.modulus for v in arr.ravel()]
            return np.array(flat, dtype=np.uint64).reshape(arr.shape)
        if arr.dtype.kind == "i":
            arr = arr.astype(np.int64).view(np.uint64)
        elif arr.dtype.kind == "b":
            arr = arr.astype(np.uint64)
        elif arr.dtype.kind != "u":
            raise InputError(f"cannot reduce dtype {arr.dtype} into the ring")
        return arr.astype(np.uint64) & self.mask

    def to_signed(self, raw) -> np.ndarray:
        """Two's-complement interpretation as ``int64``."""
        arr = self.reduce(raw)
        if self.bits == 64:
            return arr.view(np.int64)
        half = np.uint64(1 << (self.bits - 1))
        signed = arr.astype(np.int64)
        return np.where(arr >= half, signed - np.int64(self.modulus), signed)

    def encode(self, x, frac: int | None = None) -> np.ndarray:
        """Round-to-nearest fixed-point encoding."""
        frac = self.frac if frac is None else frac
        arr = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InputError("cannot encode NaN or infinite values")
        bound = 2.0 ** (self.bits - frac - 1)
        if np.any(np.abs(arr) >= bound):
            raise RangeError(f"|x| must be below 2^{self.bits - frac - 1} = {bound}")
        return self.reduce(np.rint(arr * 2.0**frac).astype(np.int64))

    def decode(self, raw, frac: int | None = None) -> np.ndarray:
        frac = self.frac if frac is None else frac
        return self.to_signed(raw).astype(np.float64) / 2.0**frac

    # -- arithmetic -------------------------------------------------------

    def add(self, a, b) -> np.ndarray:
        with np.errstate(over="ignore"):
            return (self.reduce(a) + self.reduce(b)) & self.mask

    # uint64 arithmetic wraps modulo 2^64, and 2^bits divides 2^64. Scalar
    # operands warn on wraparound, which is the intended behaviour here.

    def sub(self, a, b) -> np.ndarray:
        with np.errstate(over="ignore"):
            return (self.reduce(a) - self.reduce(b)) & self.mask

    def neg(self, a) -> np.ndarray:
        with np.errstate(over="ignore"):
            return (np.uint64(0) - self.reduce(a)) & self.mask

    def mul(self, a, b) -> np.ndarray:
        with np.errstate(over="ignore"):
            return (self.reduce(a) * self.reduce(b)) & self.mask

    def sum(self, a, axis=None) -> np.ndarray:
        return np.sum(self.reduce(a), axis=axis, dtype=np.uint64) & self.mask

    def shift_signed(self, raw, shift: int) -> np.ndarray:
        """Arithmetic right shift of the two's-complement value."""
        return self.reduce(self.to_signed(raw) >> shift)

    def random(self, rng: IntegerSource, shape=()) -> np.ndarray:
        out = rng.integers(0, self.modulus, size=shape, dtype=np.uint64)
        return np.asarray(out, dtype=np.uint64) & self.mask


DEFAULT_RING = Ring()


def fxp_encode(x, ring: Ring = DEFAULT_RING) -> np.ndarray:
    return ring.encode(x)


def fxp_decode(raw, ring: Ring = DEFAULT_RING) -> np.ndarray:
    return ring.decode(raw)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AdditiveShares:
    """Additive sharing over the ring; axis 0 indexes the servers."""

    shares: np.ndarray
    ring: Ring = DEFAULT_RING

    def __post_init__(self) -> None:
        object.__setattr__(self, "shares", _frozen(self.ring.reduce(self.shares)))

    @property
    def q(self) -> int:
        return self.shares.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.shares.shape[1:]

    def reconstruct(self) -> np.ndarray:
        return self.ring.sum(self.shares, axis=0)

    def __add__(self, other: AdditiveShares) -> AdditiveShares:
        return AdditiveShares(self.ring.add(self.shares, other.shares), self.ring)

    def __sub__(self, other: AdditiveShares) -> AdditiveShares:
        return AdditiveShares(self.ring.sub(self.shares, other.shares), self.ring)

    def scale(self, public) -> AdditiveShares:
        """Multiply every share by a public ring element (broadcast)."""
        return AdditiveShares(self.ring.mul(self.shares, self.ring.reduce(public)), self.ring)

    def sum(self, axis: int) -> AdditiveShares:
        return AdditiveShares(self.ring.sum(self.shares, axis=axis + 1), self.ring)


@dataclass(frozen=True, eq=False)
class BooleanShares:
    """XOR sharing of bits; axis 0 indexes the servers."""

    shares: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.shares)
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise InputError("Boolean shares must be 0/1")
        object.__setattr__(self, "shares", _frozen(arr.astype(np.uint8)))

    @property
    def q(self) -> int:
        return self.shares.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.shares.shape[1:]

    def reconstruct(self) -> np.ndarray:
        return np.bitwise_xor.reduce(self.shares, axis=0)


@dataclass(frozen=True, eq=False)
class MaskedShare:
    """A value ``v`` held as a public masked value plus a shared mask.

    Arithmetic domain: ``masked + mask = v``. Boolean domain:
    ``masked XOR mask = v``.
    """

    masked: np.ndarray
    mask: AdditiveShares | BooleanShares

    def __post_init__(self) -> None:
        if self.boolean:
            arr = np.asarray(self.masked).astype(np.uint8)
        else:
            arr = self.mask.ring.reduce(self.masked)
        object.__setattr__(self, "masked", _frozen(arr))
        if self.masked.shape != self.mask.shape:
            raise ParameterError("masked value and mask shares differ in shape")

    @property
    def boolean(self) -> bool:
        return isinstance(self.mask, BooleanShares)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.masked.shape

    def reconstruct(self) -> np.ndarray:
        if self.boolean:
            return self.masked ^ self.mask.reconstruct()
        ring = self.mask.ring
        return ring.add(self.masked, self.mask.reconstruct())


# -- sharing ---------------------------------------------------------------


def _check_q(q: int) -> None:
    if q < 2:
        raise ParameterError(f"need at least two shares, got q={q}")


def share_additive(v, q: int, rng: IntegerSource, ring: Ring = DEFAULT_RING) -> AdditiveShares:
    """Split ``v`` into ``q`` additive shares; the last one is forced."""
    _check_q(q)
    v = ring.reduce(v)
    head = np.stack([ring.random(rng, v.shape) for _ in range(q - 1)])
    last = ring.sub(v, ring.sum(head, axis=0))
    return AdditiveShares(np.concatenate([head, last[None]]), ring)


def share_boolean(b, q: int, rng: IntegerSource) -> BooleanShares:
    """Split bits into ``q`` XOR shares; the last one is forced."""
    _check_q(q)
    b = np.asarray(b, dtype=np.uint8)
    if b.size and b.max() > 1:
        raise InputError("share_boolean expects bits")
    head = np.stack(
        [np.asarray(rng.integers(0, 2, size=b.shape, dtype=np.uint8)) for _ in range(q - 1)]
    )
    last = b ^ np.bitwise_xor.reduce(head, axis=0)
    return BooleanShares(np.concatenate([head, last[None]]))


def share_masked(
    v, q: int, rng: IntegerSource, ring: Ring = DEFAULT_RING, boolean: bool = False
) -> MaskedShare:
    """Sample a fresh mask as ``q`` shares and publish ``v`` minus the mask."""
    _check_q(q)
    if boolean:
        v = np.asarray(v, dtype=np.uint8)
        lam = BooleanShares(
            np.stack([np.asarray(rng.integers(0, 2, size=v.shape, dtype=np.uint8)) for _ in range(q)])
        )
        return MaskedShare(v ^ lam.reconstruct(), lam)
    v = ring.reduce(v)
    lam = AdditiveShares(np.stack([ring.random(rng, v.shape) for _ in range(q)]), ring)
    return MaskedShare(ring.sub(v, lam.reconstruct()), lam)


def _digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


@dataclass(frozen=True)
class SharedRandomness:
    """Seeded source of per-(role, tag) Philox streams.

    Two holders of the same seed derive identical streams for the same role
    and tag, which lets a client and a server agree on a mask share without
    talking to each other.
    """

    seed: int

    def stream(self, role: str, tag: str) -> np.random.Generator:
        seq = np.random.SeedSequence([self.seed & (2**64 - 1), _digest(role), _digest(tag)])
        return np.random.Generator(np.random.Philox(seq))


def server_name(index: int) -> str:
    return f"S{index + 1}"


def client_share_input(
    v,
    q: int,
    shared: SharedRandomness,
    *,
    client: str,
    tag: str,
    ring: Ring = DEFAULT_RING,
    boolean: bool = False,
    ledger: CostLedger | None = None,
) -> MaskedShare:
    """Share a client input in masked form with one upload to the first server.

    Server ``j`` derives its mask share from the stream
    ``(role=S<j>, tag=<client>/<tag>)``. The client derives every mask share
    the same way, sends ``masked`` to S1, and S1 forwards it to the others.
    """
    _check_q(q)
    stream_tag = f"{client}/{tag}"
    if boolean:
        v = np.asarray(v, dtype=np.uint8)
        lam = BooleanShares(
            np.stack(
                [
                    shared.stream(server_name(j), stream_tag).integers(0, 2, size=v.shape, dtype=np.uint8)
                    for j in range(q)
                ]
            )
        )
        masked = v ^ lam.reconstruct()
        element_bits = 1
    else:
        v = ring.reduce(v)
        lam = AdditiveShares(
            np.stack([ring.random(shared.stream(server_name(j), stream_tag), v.shape) for j in range(q)]),
            ring,
        )
        masked = ring.sub(v, lam.reconstruct())
        element_bits = ring.bits
    if ledger is not None:
        bits = int(np.size(masked)) * element_bits
        ledger.charge(client, server_name(0), bits, phase="input", tag=tag)
        for j in range(1, q):
            ledger.charge(server_name(0), server_name(j), bits, phase="input", tag=tag)
        ledger.next_round()
    return MaskedShare(masked, lam)
