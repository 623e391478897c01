"""Arithmetic equivalents of XOR-shared bits.

A bit shared as ``b = b_1 ^ ... ^ b_q`` equals the integer polynomial
``sum_k (-2)^(k-1) e_k(b_1, ..., b_q)``, where ``e_k`` is the k-th elementary
symmetric polynomial. The approximate conversion keeps the linear and the
full-product terms and replaces everything in between by its expectation
under uniform sharings, which keeps the estimate unbiased while removing all
but one cross term.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from math import comb, prod
from typing import Literal, Sequence

import numpy as np

from secquant.ring import ParameterError, Ring

Mode = Literal["exact", "approx"]

# The approximate constant is a multiple of 1/2 for every q.
APPROX_FRAC_BITS = 1


def _as_share_matrix(shares) -> np.ndarray:
    arr = np.asarray(shares, dtype=np.int64)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ParameterError("need at least one share")
    return arr


def elementary_symmetric(values) -> list[np.ndarray]:
    """``[e_0, ..., e_q]`` over the last axis, by the standard recurrence."""
    arr = _as_share_matrix(values)
    q = arr.shape[-1]
    lead = arr.shape[:-1]
    e = [np.ones(lead, dtype=np.int64)] + [np.zeros(lead, dtype=np.int64) for _ in range(q)]
    for i in range(q):
        x = arr[..., i]
        for k in range(i + 1, 0, -1):
            e[k] = e[k] + x * e[k - 1]
    return e


@dataclass(frozen=True)
class TermDecomposition:
    """The exact conversion split into its linear, middle and product parts."""

    term_s: np.ndarray | int
    term_m: np.ndarray | int
    term_p: np.ndarray | int
    q: int

    @property
    def total(self):
        return self.term_s + self.term_m + self.term_p


def term_decomposition(shares) -> TermDecomposition:
    arr = _as_share_matrix(shares)
    q = arr.shape[-1]
    e = elementary_symmetric(arr)
    term_s = e[1]
    if q == 1:
        zero = np.zeros_like(term_s)
        return TermDecomposition(term_s, zero, zero, q)
    term_m = np.zeros_like(term_s)
    for k in range(2, q):
        term_m = term_m + (-2) ** (k - 1) * e[k]
    term_p = (-2) ** (q - 1) * e[q]
    if arr.ndim == 1:
        return TermDecomposition(int(term_s), int(term_m), int(term_p), q)
    return TermDecomposition(term_s, term_m, term_p, q)


def exact_bit_to_arith(shares, ring: Ring | None = None):
    """Integer value of the shared bit, reduced into ``ring`` when given."""
    value = term_decomposition(shares).total
    return value if ring is None else ring.reduce(value)


def approx_constant(q: int) -> Fraction:
    """Expected middle term under uniform sharings."""
    if q < 1:
        raise ParameterError("q must be positive")
    return Fraction((q - 1) % 2) - Fraction(q, 2)


def approx_bit_to_arith(shares, ring: Ring | None = None, frac_bits: int = APPROX_FRAC_BITS):
    """Approximate conversion.

    Without a ring the result is exact rational (scalar input) or float
    (batched input). With a ring it is the fixed-point encoding with
    ``frac_bits`` fractional bits. For ``q == 1`` the exact value is returned.
    """
    arr = _as_share_matrix(shares)
    q = arr.shape[-1]
    terms = term_decomposition(arr)
    if q == 1:
        value_twice = 2 * np.asarray(terms.term_s)
    else:
        const = approx_constant(q)
        value_twice = 2 * (np.asarray(terms.term_s) + np.asarray(terms.term_p)) + int(2 * const)
    if ring is not None:
        if frac_bits < 1:
            raise ParameterError("the approximate constant needs at least one fractional bit")
        return ring.reduce(value_twice * (1 << (frac_bits - 1)))
    if arr.ndim == 1:
        return Fraction(int(value_twice), 2)
    return value_twice.astype(np.float64) / 2.0


def approx_bit_to_arith_float(shares) -> np.ndarray:
    """Vectorized float version for Monte-Carlo pipelines (last axis = shares)."""
    arr = np.asarray(shares)
    q = arr.shape[-1]
    s = arr.sum(axis=-1, dtype=np.int64)
    if q == 1:
        return s.astype(np.float64)
    p = np.bitwise_and.reduce(arr.astype(np.uint8), axis=-1).astype(np.int64)
    return s + float(approx_constant(q)) + float((-2) ** (q - 1)) * p


def exact_bit_to_arith_float(shares) -> np.ndarray:
    arr = np.asarray(shares)
    return np.bitwise_xor.reduce(arr.astype(np.uint8), axis=-1).astype(np.float64)


# -- expectations ------------------------------------------------------------


@dataclass(frozen=True)
class ExpectedTerms:
    q: int
    term_s: Fraction
    term_m: Fraction

    def term_p(self, b: int) -> Fraction:
        return Fraction(b) - Fraction((self.q - 1) % 2)


def expected_terms(q: int) -> ExpectedTerms:
    """Closed-form conditional expectations under uniform sharings (q >= 2)."""
    if q < 2:
        raise ParameterError("the three-term split needs q >= 2")
    return ExpectedTerms(q=q, term_s=Fraction(q, 2), term_m=approx_constant(q))


def sharings(b: int, q: int) -> np.ndarray:
    """All ``2^(q-1)`` XOR sharings of bit ``b`` as rows."""
    if q < 1:
        raise ParameterError("q must be positive")
    head = np.array(list(product((0, 1), repeat=q - 1)), dtype=np.int64).reshape(2 ** (q - 1), q - 1)
    last = (b ^ np.bitwise_xor.reduce(head, axis=1)) if q > 1 else np.full(1, b)
    return np.concatenate([head, np.asarray(last, dtype=np.int64).reshape(-1, 1)], axis=1)


def enumerate_expected_terms(q: int, b: int) -> tuple[Fraction, Fraction, Fraction]:
    """Exact conditional means of the three terms by exhaustive enumeration."""
    rows = sharings(b, q)
    terms = term_decomposition(rows)
    count = rows.shape[0]
    return (
        Fraction(int(np.sum(terms.term_s)), count),
        Fraction(int(np.sum(terms.term_m)), count),
        Fraction(int(np.sum(terms.term_p)), count),
    )


def enumerate_approx_mean(q: int, b: int) -> Fraction:
    rows = sharings(b, q)
    return sum((approx_bit_to_arith(row) for row in rows), Fraction(0)) / rows.shape[0]


# -- counting ----------------------------------------------------------------


def binomial_identity_check(n: int) -> bool:
    """Check the weighted binomial sums and their even/odd halves for ``n``."""
    if not 2 <= n <= 30:
        raise ParameterError("identity checked for 2 <= n <= 30")
    total = sum(p * comb(n, p) for p in range(n + 1))
    even = sum(p * comb(n, p) for p in range(0, n + 1, 2))
    odd = sum(p * comb(n, p) for p in range(1, n + 1, 2))
    half = n * 2 ** (n - 2)
    return total == n * 2 ** (n - 1) and even == half and odd == half


def brute_force_product_sum(shares: Sequence[int], k: int) -> int:
    """Sum over all size-``k`` subsets of the product of their members."""
    return sum(prod(c) for c in combinations(shares, k))


def cross_term_count(q: int, op: Literal["bit_to_arith", "bit_injection"], mode: Mode) -> int:
    """Number of share products that need interaction.

    A bit conversion needs every subset product of size two or more (exact)
    or only the full product (approx). Injecting the converted bit into a
    shared value adds the ``q*(q-1)`` off-diagonal share products.
    """
    if q < 2:
        raise ParameterError("cross terms need q >= 2")
    if mode == "exact":
        conversion = sum(comb(q, k) for k in range(2, q + 1))
    elif mode == "approx":
        conversion = 1
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    if op == "bit_to_arith":
        return conversion
    if op == "bit_injection":
        return conversion + q * (q - 1)
    raise ParameterError(f"unknown operation {op!r}")
