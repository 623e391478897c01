"""One-bit stochastic quantization (SQ) with optional Hadamard or Kashin preprocessing.

A vector is split into power-of-two chunks, each chunk is mapped to a
coefficient vector (identity for SQ, a random rotation for HSQ, Kashin
coefficients for KSQ), and each coefficient becomes one Bernoulli bit between
the chunk's ``s_min`` and ``s_max``. All three transforms are linear, so
summing bits across clients that share scales and a rotation seed and then
decoding once gives the sum of the individual decodings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Literal, Sequence

import numpy as np

from secquant.hadamard import hadamard_rotate, inverse_hadamard_rotate, next_power_of_two
from secquant.kashin import KashinParams, kashin_decompose, kashin_dim, kashin_reconstruct
from secquant.ring import DEFAULT_RING, InputError, ParameterError, Ring

Scheme = Literal["sq", "hsq", "ksq"]
SCHEMES: tuple[Scheme, ...] = ("sq", "hsq", "ksq")
DEFAULT_MIN_CHUNK = 512
SCALE_BITS = 64  # two 32-bit fixed-point scales per chunk


def _check_scheme(scheme: str) -> Scheme:
    key = scheme.lower()
    if key not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return key  # type: ignore[return-value]


# -- chunking ----------------------------------------------------------------


@dataclass(frozen=True)
class ChunkPlan:
    m: int
    sizes: tuple[int, ...]
    min_chunk: int

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for size in self.sizes:
            out.append(acc)
            acc += size
        return tuple(out)

    def overhead(self, scale_bits: int = 0) -> float:
        """Relative overhead of padding plus ``scale_bits`` per chunk over ``m``."""
        return (self.total + scale_bits * len(self.sizes) - self.m) / self.m


def chunk_plan(m: int, min_chunk: int = DEFAULT_MIN_CHUNK) -> ChunkPlan:
    """Greedy power-of-two chunks; the tail is padded to a power of two >= ``min_chunk``."""
    if m < 1:
        raise ParameterError("vector length must be positive")
    if min_chunk < 1 or min_chunk & (min_chunk - 1):
        raise ParameterError("min_chunk must be a power of two")
    sizes: list[int] = []
    rem = m
    while rem >= min_chunk:
        size = 1 << (rem.bit_length() - 1)
        sizes.append(size)
        rem -= size
    if rem:
        sizes.append(max(min_chunk, next_power_of_two(rem)))
    return ChunkPlan(m, tuple(sizes), min_chunk)


# -- layouts -----------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    """How a length-``m`` vector maps to coefficient chunks."""

    scheme: Scheme
    m: int
    segments: tuple[int, ...]  # input length of each chunk (after padding)
    lengths: tuple[int, ...]  # coefficient count of each chunk
    seed: int = 0
    min_chunk: int = DEFAULT_MIN_CHUNK
    kashin: KashinParams = KashinParams()

    @property
    def size(self) -> int:
        return sum(self.lengths)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.lengths)[:-1]]))

    def chunk_seed(self, index: int) -> int:
        return (self.seed * 1_000_003 + index) & (2**63 - 1)


def make_layout(
    m: int,
    scheme: str,
    seed: int = 0,
    *,
    min_chunk: int = DEFAULT_MIN_CHUNK,
    kashin: KashinParams = KashinParams(),
) -> Layout:
    scheme = _check_scheme(scheme)
    if scheme == "sq":
        return Layout("sq", m, (m,), (m,), seed, min_chunk, kashin)
    plan = chunk_plan(m, min_chunk)
    if scheme == "hsq":
        lengths = plan.sizes
    else:
        lengths = tuple(kashin_dim(c, kashin.lam, kashin.granule) for c in plan.sizes)
    return Layout(scheme, m, plan.sizes, lengths, seed, min_chunk, kashin)


def bit_count(
    m: int,
    scheme: str,
    *,
    min_chunk: int = DEFAULT_MIN_CHUNK,
    scale_bits: int = SCALE_BITS,
    kashin: KashinParams = KashinParams(),
) -> int:
    """Bits a client uploads: one per coefficient plus a scale pair per chunk.

    Plain SQ sends the coordinates of the unchunked vector and is counted
    without its single scale pair.
    """
    layout = make_layout(m, scheme, min_chunk=min_chunk, kashin=kashin)
    if layout.scheme == "sq":
        return m
    return layout.size + scale_bits * len(layout.lengths)


def to_coefficients(x, layout: Layout) -> np.ndarray:
    """Map vectors (batched on leading axes) to concatenated chunk coefficients."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != layout.m:
        raise ParameterError(f"expected length {layout.m}, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise InputError("input contains NaN or Inf")
    if layout.scheme == "sq":
        return arr.copy()
    padded = np.zeros(arr.shape[:-1] + (sum(layout.segments),))
    padded[..., : layout.m] = arr
    parts = []
    start = 0
    for index, (seg, length) in enumerate(zip(layout.segments, layout.lengths)):
        piece = padded[..., start : start + seg]
        start += seg
        if layout.scheme == "hsq":
            parts.append(hadamard_rotate(piece, layout.chunk_seed(index)))
        else:
            params = layout.kashin
            parts.append(
                kashin_decompose(
                    piece,
                    params.lam,
                    params.iterations,
                    seed=layout.chunk_seed(index),
                    level=params.level,
                    size=length,
                )
            )
    return np.concatenate(parts, axis=-1)


def from_coefficients(coeffs, layout: Layout) -> np.ndarray:
    """Inverse of :func:`to_coefficients`; linear in ``coeffs``."""
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.shape[-1] != layout.size:
        raise ParameterError(f"expected {layout.size} coefficients, got {arr.shape[-1]}")
    if layout.scheme == "sq":
        return arr.copy()
    parts = []
    for index, (seg, offset, length) in enumerate(zip(layout.segments, layout.offsets, layout.lengths)):
        piece = arr[..., offset : offset + length]
        if layout.scheme == "hsq":
            parts.append(inverse_hadamard_rotate(piece, layout.chunk_seed(index)))
        else:
            parts.append(kashin_reconstruct(piece, seg, seed=layout.chunk_seed(index)))
    return np.concatenate(parts, axis=-1)[..., : layout.m]


# -- quantized vectors -------------------------------------------------------


@dataclass(frozen=True)
class Chunk:
    offset: int
    length: int
    s_min: float
    s_max: float


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    bits: np.ndarray
    chunks: tuple[Chunk, ...]
    layout: Layout

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=np.uint8, copy=True)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        if bits.shape != (self.layout.size,):
            raise ParameterError("bit payload does not match the layout")
        for chunk in self.chunks:
            if chunk.s_min > chunk.s_max:
                raise ParameterError("s_min must not exceed s_max")

    @property
    def scheme(self) -> Scheme:
        return self.layout.scheme

    def scale_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coefficient ``s_min`` and ``s_max``."""
        lo = np.empty(self.layout.size)
        hi = np.empty(self.layout.size)
        for chunk in self.chunks:
            lo[chunk.offset : chunk.offset + chunk.length] = chunk.s_min
            hi[chunk.offset : chunk.offset + chunk.length] = chunk.s_max
        return lo, hi

    def with_scales(self, factor: float) -> QuantizedVector:
        if factor < 0:
            raise ParameterError("scale factor must be non-negative")
        chunks = tuple(replace(c, s_min=c.s_min * factor, s_max=c.s_max * factor) for c in self.chunks)
        return QuantizedVector(self.bits, chunks, self.layout)


ScalesArg = Literal["local"] | tuple[float, float] | Sequence[tuple[float, float]]


def _chunk_scales(coeffs: np.ndarray, layout: Layout, scales) -> list[tuple[float, float]]:
    if isinstance(scales, str):
        if scales != "local":
            raise ParameterError(f"unknown scale mode {scales!r}")
        return [
            (float(coeffs[o : o + n].min()), float(coeffs[o : o + n].max()))
            for o, n in zip(layout.offsets, layout.lengths)
        ]
    scales = list(scales)
    if len(scales) == 2 and np.isscalar(scales[0]):
        pairs = [(float(scales[0]), float(scales[1]))] * len(layout.lengths)
    else:
        pairs = [(float(lo), float(hi)) for lo, hi in scales]
    if len(pairs) != len(layout.lengths):
        raise ParameterError("need one scale pair per chunk")
    for (lo, hi), o, n in zip(pairs, layout.offsets, layout.lengths):
        piece = coeffs[o : o + n]
        if lo > hi or piece.min() < lo or piece.max() > hi:
            raise ParameterError("global scales must bracket every coefficient")
    return pairs


def sample_bits(coeffs: np.ndarray, lo, hi, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli bits with ``P[1] = (x - lo) / (hi - lo)``, zero on degenerate ranges."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    width = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = np.where(width > 0, (coeffs - lo) / np.where(width > 0, width, 1.0), 0.0)
    prob = np.clip(prob, 0.0, 1.0)
    return (rng.random(coeffs.shape) < prob).astype(np.uint8)


def quantize_coefficients(
    coeffs, layout: Layout, rng: np.random.Generator, scales: ScalesArg = "local"
) -> QuantizedVector:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    pairs = _chunk_scales(coeffs, layout, scales)
    chunks = tuple(
        Chunk(o, n, lo, hi) for (lo, hi), o, n in zip(pairs, layout.offsets, layout.lengths)
    )
    lo = np.repeat([p[0] for p in pairs], layout.lengths)
    hi = np.repeat([p[1] for p in pairs], layout.lengths)
    return QuantizedVector(sample_bits(coeffs, lo, hi, rng), chunks, layout)


def quantize(
    x,
    scheme: str,
    rng: np.random.Generator,
    *,
    seed: int = 0,
    scales: ScalesArg = "local",
    min_chunk: int = DEFAULT_MIN_CHUNK,
    kashin: KashinParams = KashinParams(),
) -> QuantizedVector:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ParameterError("quantize expects a single vector")
    layout = make_layout(arr.shape[0], scheme, seed, min_chunk=min_chunk, kashin=kashin)
    return quantize_coefficients(to_coefficients(arr, layout), layout, rng, scales)


def sq_quantize(x, scales: ScalesArg = "local", rng: np.random.Generator | None = None) -> QuantizedVector:
    return quantize(x, "sq", rng or np.random.default_rng(), scales=scales)


def hsq_quantize(x, rng: np.random.Generator, *, seed: int = 0, **kwargs) -> QuantizedVector:
    return quantize(x, "hsq", rng, seed=seed, **kwargs)


def ksq_quantize(x, rng: np.random.Generator, *, seed: int = 0, **kwargs) -> QuantizedVector:
    return quantize(x, "ksq", rng, seed=seed, **kwargs)


def dequantize_coefficients(qv: QuantizedVector) -> np.ndarray:
    lo, hi = qv.scale_vectors()
    return lo + qv.bits * (hi - lo)


def dequantize(qv: QuantizedVector) -> np.ndarray:
    return from_coefficients(dequantize_coefficients(qv), qv.layout)


def dequantize_sum(bit_sum, count: int, layout: Layout, s_min: float, s_max: float) -> np.ndarray:
    """Decode the sum of ``count`` vectors from their summed bits under global scales."""
    coeffs = count * s_min + np.asarray(bit_sum, dtype=np.float64) * (s_max - s_min)
    return from_coefficients(coeffs, layout)


def nmse(agg, originals) -> float:
    """Squared error of ``agg`` against the true mean, over the mean squared norm."""
    vs = np.asarray(originals, dtype=np.float64)
    if vs.ndim == 1:
        vs = vs[None]
    agg = np.asarray(agg, dtype=np.float64)
    if agg.shape != vs.shape[1:]:
        raise ParameterError("aggregate and originals differ in dimension")
    denom = float(np.sum(vs**2)) / vs.shape[0]
    if denom == 0:
        raise ZeroDivisionError("all original vectors are zero")
    return float(np.sum((vs.mean(axis=0) - agg) ** 2)) / denom


# -- serialization -----------------------------------------------------------

MAGIC = b"SQV1"
_SCHEME_CODES = {"sq": 0, "hsq": 1, "ksq": 2}
_HEADER = struct.Struct("<4sBBHQQIIQ")
_ENTRY = struct.Struct("<IIii")


def to_bytes(qv: QuantizedVector, ring: Ring = DEFAULT_RING) -> bytes:
    """Binary encoding: header, chunk table, then bits packed LSB-first."""
    layout = qv.layout
    if ring.bits != 32:
        raise ParameterError("the wire format stores 32-bit scales")
    header = _HEADER.pack(
        MAGIC,
        _SCHEME_CODES[layout.scheme],
        ring.frac,
        0,
        layout.m,
        layout.seed & (2**64 - 1),
        layout.min_chunk,
        len(qv.chunks),
        layout.size,
    )
    table = b"".join(
        _ENTRY.pack(
            c.offset,
            c.length,
            int(ring.to_signed(ring.encode(c.s_min))),
            int(ring.to_signed(ring.encode(c.s_max))),
        )
        for c in qv.chunks
    )
    payload = np.packbits(qv.bits, bitorder="little").tobytes()
    return header + table + payload


def from_bytes(data: bytes, kashin: KashinParams = KashinParams()) -> QuantizedVector:
    if len(data) < _HEADER.size:
        raise InputError("truncated header")
    magic, code, frac, _, m, seed, min_chunk, count, size = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise InputError("bad magic")
    scheme = {v: k for k, v in _SCHEME_CODES.items()}.get(code)
    if scheme is None:
        raise InputError(f"unknown scheme code {code}")
    pos = _HEADER.size
    chunks = []
    for _ in range(count):
        offset, length, lo, hi = _ENTRY.unpack_from(data, pos)
        pos += _ENTRY.size
        chunks.append(Chunk(offset, length, lo / 2.0**frac, hi / 2.0**frac))
    layout = make_layout(m, scheme, seed, min_chunk=min_chunk, kashin=kashin)
    if scheme == "ksq":
        layout = replace(layout, lengths=tuple(c.length for c in chunks))
    if layout.size != size or len(layout.lengths) != count:
        raise InputError("chunk table disagrees with the layout")
    payload = np.frombuffer(data, dtype=np.uint8, offset=pos)
    if payload.size * 8 < size:
        raise InputError("truncated payload")
    bits = np.unpackbits(payload, bitorder="little")[:size]
    return QuantizedVector(bits, tuple(chunks), layout)
