"""Outward-rounded interval arithmetic on mpmath's raw mpf values.

Every operation takes an explicit working precision and touches no global
state, so interval values can be shared freely between concurrent readers.
Endpoints are the raw ``(sign, man, exp, bc)`` tuples used by
``mpmath.libmp``; :func:`as_mpf` converts one to a regular ``mpmath.mpf``.
Directed rounding of the elementary operations comes straight from libmp;
transcendental endpoints are additionally widened by a few ulps so that a
one-ulp slip in the backend cannot break enclosure.
"""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath
from mpmath.libmp import (
    fnone,
    fone,
    from_float,
    from_int,
    from_rational,
    fzero,
    mpf_abs,
    mpf_add,
    mpf_cos,
    mpf_div,
    mpf_eq,
    mpf_ge,
    mpf_gt,
    mpf_le,
    mpf_lt,
    mpf_mul,
    mpf_mul_int,
    mpf_neg,
    mpf_pi,
    mpf_shift,
    mpf_sin,
    mpf_sub,
    to_float,
)

__all__ = [
    "Ival",
    "as_mpf",
    "raw",
    "raw_dn",
    "raw_from_fraction",
    "raw_up",
]


def raw(x) -> tuple:
    """Convert ``x`` (int, float, Fraction with dyadic denominator, mpf, or a
    raw tuple) to a raw mpf value without rounding."""
    if isinstance(x, tuple):
        return x
    if isinstance(x, int):
        return from_int(x)
    if isinstance(x, float):
        return from_float(x)
    if isinstance(x, mpmath.mpf):
        return x._mpf_
    if isinstance(x, Fraction):
        num, den = x.numerator, x.denominator
        if den & (den - 1) == 0:  # power of two: exactly representable
            return mpf_shift(from_int(num), -(den.bit_length() - 1))
        raise ValueError(f"fraction {x} is not dyadic; use raw_from_fraction")
    raise TypeError(f"cannot convert {type(x).__name__} to a raw mpf")


def raw_from_fraction(x: Fraction, prec: int, rnd: str) -> tuple:
    return from_rational(x.numerator, x.denominator, prec, rnd)


def raw_dn(x, prec: int) -> tuple:
    """Raw lower bound for ``x`` (exact unless a non-dyadic Fraction)."""
    if isinstance(x, Fraction) and x.denominator & (x.denominator - 1):
        return from_rational(x.numerator, x.denominator, prec, "d")
    return raw(x)


def raw_up(x, prec: int) -> tuple:
    """Raw upper bound for ``x`` (exact unless a non-dyadic Fraction)."""
    if isinstance(x, Fraction) and x.denominator & (x.denominator - 1):
        return from_rational(x.numerator, x.denominator, prec, "u")
    return raw(x)


def as_mpf(x: tuple) -> mpmath.mpf:
    return mpmath.mp.make_mpf(x)


def _ulps(x: tuple, prec: int, n: int) -> tuple:
    """n units in the last place of ``x`` at precision ``prec`` (positive)."""
    mag = x[2] + x[3]  # x != 0: |x| < 2**mag
    return mpf_shift(from_int(n), mag - prec)


class Ival:
    """Closed interval ``[a, b]`` with raw mpf endpoints."""

    __slots__ = ("a", "b")

    def __init__(self, a: tuple, b: tuple):
        self.a = a
        self.b = b

    # -- constructors ------------------------------------------------------

    @staticmethod
    def point(x) -> "Ival":
        r = raw(x)
        return Ival(r, r)

    @staticmethod
    def hull(*vals) -> "Ival":
        rs = [raw(v) for v in vals]
        lo = hi = rs[0]
        for r in rs[1:]:
            if mpf_lt(r, lo):
                lo = r
            if mpf_gt(r, hi):
                hi = r
        return Ival(lo, hi)

    @staticmethod
    def from_fraction(x: Fraction, prec: int) -> "Ival":
        num, den = x.numerator, x.denominator
        if den & (den - 1) == 0:
            return Ival.point(x)
        return Ival(
            from_rational(num, den, prec, "d"),
            from_rational(num, den, prec, "u"),
        )

    # -- arithmetic --------------------------------------------------------

    def add(self, o: "Ival", prec: int) -> "Ival":
        return Ival(mpf_add(self.a, o.a, prec, "d"), mpf_add(self.b, o.b, prec, "u"))

    def sub(self, o: "Ival", prec: int) -> "Ival":
        return Ival(mpf_sub(self.a, o.b, prec, "d"), mpf_sub(self.b, o.a, prec, "u"))

    def neg(self) -> "Ival":
        return Ival(mpf_neg(self.b), mpf_neg(self.a))

    def mul(self, o: "Ival", prec: int) -> "Ival":
        sa, sb, oa, ob = self.a, self.b, o.a, o.b
        if oa is ob:  # one-point operand: two candidate products suffice
            if sa is sb:
                return Ival(mpf_mul(sa, oa, prec, "d"), mpf_mul(sa, oa, prec, "u"))
            c1 = mpf_mul(sa, oa, prec, "d")
            c2 = mpf_mul(sb, oa, prec, "d")
            lo = c1 if mpf_lt(c1, c2) else c2
            c3 = mpf_mul(sa, oa, prec, "u")
            c4 = mpf_mul(sb, oa, prec, "u")
            hi = c3 if mpf_gt(c3, c4) else c4
            return Ival(lo, hi)
        if sa is sb:
            c1 = mpf_mul(sa, oa, prec, "d")
            c2 = mpf_mul(sa, ob, prec, "d")
            lo = c1 if mpf_lt(c1, c2) else c2
            c3 = mpf_mul(sa, oa, prec, "u")
            c4 = mpf_mul(sa, ob, prec, "u")
            hi = c3 if mpf_gt(c3, c4) else c4
            return Ival(lo, hi)
        cands_d = (
            mpf_mul(sa, oa, prec, "d"),
            mpf_mul(sa, ob, prec, "d"),
            mpf_mul(sb, oa, prec, "d"),
            mpf_mul(sb, ob, prec, "d"),
        )
        cands_u = (
            mpf_mul(sa, oa, prec, "u"),
            mpf_mul(sa, ob, prec, "u"),
            mpf_mul(sb, oa, prec, "u"),
            mpf_mul(sb, ob, prec, "u"),
        )
        lo = cands_d[0]
        for c in cands_d[1:]:
            if mpf_lt(c, lo):
                lo = c
        hi = cands_u[0]
        for c in cands_u[1:]:
            if mpf_gt(c, hi):
                hi = c
        return Ival(lo, hi)

    def mul_int(self, k: int, prec: int) -> "Ival":
        if k >= 0:
            return Ival(mpf_mul_int(self.a, k, prec, "d"), mpf_mul_int(self.b, k, prec, "u"))
        return Ival(mpf_mul_int(self.b, k, prec, "d"), mpf_mul_int(self.a, k, prec, "u"))

    def div(self, o: "Ival", prec: int) -> "Ival":
        if o.contains_zero():
            raise ZeroDivisionError("interval division by an interval containing 0")
        cands_d = (
            mpf_div(self.a, o.a, prec, "d"),
            mpf_div(self.a, o.b, prec, "d"),
            mpf_div(self.b, o.a, prec, "d"),
            mpf_div(self.b, o.b, prec, "d"),
        )
        cands_u = (
            mpf_div(self.a, o.a, prec, "u"),
            mpf_div(self.a, o.b, prec, "u"),
            mpf_div(self.b, o.a, prec, "u"),
            mpf_div(self.b, o.b, prec, "u"),
        )
        lo = cands_d[0]
        for c in cands_d[1:]:
            if mpf_lt(c, lo):
                lo = c
        hi = cands_u[0]
        for c in cands_u[1:]:
            if mpf_gt(c, hi):
                hi = c
        return Ival(lo, hi)

    def abs(self) -> "Ival":
        if mpf_ge(self.a, fzero):
            return self
        if mpf_le(self.b, fzero):
            return self.neg()
        hi = mpf_abs(self.a)
        if mpf_gt(self.b, hi):
            hi = self.b
        return Ival(fzero, hi)

    # -- geometry ----------------------------------------------------------

    def width_raw(self) -> tuple:
        return mpf_sub(self.b, self.a, 53, "u")

    def width(self) -> float:
        return to_float(self.width_raw())

    def mid(self, prec: int) -> tuple:
        return mpf_shift(mpf_add(self.a, self.b, prec, "n"), -1)

    def agreement_bits(self, cap: int) -> int:
        """Bits of absolute agreement between the endpoints: the width is
        below ``2**-bits``. Exact (zero-width) intervals report ``cap``."""
        w = self.width_raw()
        if w == fzero:
            return cap
        bits = -(w[2] + w[3])  # width < 2**(exp+bc)
        return min(cap, bits)

    def contains(self, x) -> bool:
        r = raw(x)
        return mpf_le(self.a, r) and mpf_le(r, self.b)

    def contains_zero(self) -> bool:
        return mpf_le(self.a, fzero) and mpf_ge(self.b, fzero)

    def intersects(self, o: "Ival") -> bool:
        return not (mpf_lt(self.b, o.a) or mpf_lt(o.b, self.a))

    def strictly_above(self, x) -> bool:
        return mpf_gt(self.a, raw(x))

    def strictly_below(self, x) -> bool:
        return mpf_lt(self.b, raw(x))

    def clip(self, lo, hi) -> "Ival":
        """Intersect with ``[lo, hi]``; the result must be nonempty."""
        a, b = self.a, self.b
        lo_r, hi_r = raw(lo), raw(hi)
        if mpf_lt(a, lo_r):
            a = lo_r
        if mpf_gt(b, hi_r):
            b = hi_r
        if mpf_gt(a, b):
            raise ValueError("empty intersection while clipping an interval")
        return Ival(a, b)

    def to_floats(self) -> tuple[float, float]:
        return (to_float(self.a), to_float(self.b))

    def __repr__(self):
        lo, hi = self.to_floats()
        return f"Ival({lo!r}, {hi!r})"

    # -- elementary functions ----------------------------------------------

    def cos(self, prec: int) -> "Ival":
        return _cos_ival(self, prec)

    def sin(self, prec: int) -> "Ival":
        # sin(x) = cos(x - pi/2), with the shift rounded outward
        wp = prec + 16
        half_pi_d = mpf_shift(mpf_pi(wp, "d"), -1)
        half_pi_u = mpf_shift(mpf_pi(wp, "u"), -1)
        shifted = Ival(
            mpf_sub(self.a, half_pi_u, wp, "d"),
            mpf_sub(self.b, half_pi_d, wp, "u"),
        )
        return _cos_ival(shifted, prec)


_IV_MINUS_ONE_ONE = Ival(fnone, fone)


def _cos_ival(x: Ival, prec: int) -> Ival:
    wp = prec + 16
    two_pi = mpf_shift(mpf_pi(wp, "d"), 1)
    if mpf_ge(x.width_raw(), two_pi):
        return _IV_MINUS_ONE_ONE

    ca_d = mpf_cos(x.a, wp, "d")
    ca_u = mpf_cos(x.a, wp, "u")
    cb_d = mpf_cos(x.b, wp, "d")
    cb_u = mpf_cos(x.b, wp, "u")
    lo = ca_d if mpf_lt(ca_d, cb_d) else cb_d
    hi = ca_u if mpf_gt(ca_u, cb_u) else cb_u
    # transcendental slack: a few ulps in case the backend's directed
    # rounding is off by one
    if lo != fzero:
        lo = mpf_sub(lo, _ulps(lo, wp, 4), wp, "d")
    if hi != fzero:
        hi = mpf_add(hi, _ulps(hi, wp, 4), wp, "u")

    # interior extrema at integer multiples of pi
    fa, fb = to_float(x.a), to_float(x.b)
    k0 = math.floor(fa / math.pi) - 1
    k1 = math.floor(fb / math.pi) + 2
    pi_d = mpf_pi(wp, "d")
    pi_u = mpf_pi(wp, "u")
    for k in range(k0, k1 + 1):
        if k >= 0:
            kpi = Ival(mpf_mul_int(pi_d, k, wp, "d"), mpf_mul_int(pi_u, k, wp, "u"))
        else:
            kpi = Ival(mpf_mul_int(pi_u, k, wp, "d"), mpf_mul_int(pi_d, k, wp, "u"))
        if x.intersects(kpi):
            if k % 2 == 0:
                hi = fone
            else:
                lo = fnone
    if mpf_lt(lo, fnone):
        lo = fnone
    if mpf_gt(hi, fone):
        hi = fone
    return Ival(lo, hi)
