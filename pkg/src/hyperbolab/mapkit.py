"""Smooth interval maps with exact coefficients and certified evaluation.

Three map families are supported:

* polynomials with rational coefficients (exact-rational evaluation
  available);
* trigonometric polynomials ``const + sum_k a_k cos(k pi x) + b_k sin(k pi x)``
  with rational coefficients;
* smooth coordinate changes of a polynomial map by a monotone polynomial
  ``phi`` (the map ``phi o f o phi^-1``), which is how non-polynomial
  conjugate partners are represented.

Critical points are enclosed in exact rational brackets; all certified
evaluation goes through the outward-rounded interval layer with an explicit
per-call precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import NamedTuple, Union

import mpmath
import numpy as np
from mpmath.libmp import mpf_gt, mpf_lt, mpf_pos

from . import _poly
from ._solve import solve_monotone_batch, solve_monotone_certified, solve_monotone_float
from .errors import (
    ConfigurationError,
    DomainError,
    GeometryError,
    MapInvariantError,
    NotMultimodalError,
    PrecisionError,
)
from .intervals import Ival, as_mpf

__all__ = [
    "Branch",
    "ConjugateFamily",
    "CriticalPoint",
    "MapSpec",
    "NonflatnessProbe",
    "PolynomialFamily",
    "TrigPolynomialFamily",
    "branch_partition",
    "build_map",
    "eval_deriv",
    "eval_map",
    "load_map",
    "map_from_dict",
    "map_to_dict",
    "nonflatness_probe",
    "save_map",
]

_BRACKET_BITS = 80
_BRACKET_WIDTH = Fraction(1, 1 << _BRACKET_BITS)


def to_fraction(x) -> Fraction:
    """Exact conversion of int/float/Fraction/mpf input points."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, mpmath.mpf):
        sign, man, exp, _ = x._mpf_
        man = int(man)
        if sign:
            man = -man
        return Fraction(man) * Fraction(2) ** exp
    raise TypeError(f"unsupported point type {type(x).__name__}")


# ---------------------------------------------------------------------------
# map families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialFamily:
    """Polynomial with rational coefficients, ascending powers."""

    coeffs: tuple[Fraction, ...]

    kind = "polynomial"
    exact_capable = True
    deriv_orders = (1, 2, 3)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _poly.trim(self.coeffs))

    @cached_property
    def _memo(self) -> dict:
        # per-instance cache: derivative coefficient tuples, float images,
        # per-precision interval coefficients
        return {}

    def _deriv_coeffs(self, order: int) -> tuple[Fraction, ...]:
        key = ("d", order)
        out = self._memo.get(key)
        if out is None:
            out = self.coeffs
            for _ in range(order):
                out = _poly.derivative(out)
            self._memo[key] = out
        return out

    def _float_coeffs(self, order: int) -> tuple[float, ...]:
        key = ("f", order)
        out = self._memo.get(key)
        if out is None:
            out = tuple(float(c) for c in reversed(self._deriv_coeffs(order)))
            self._memo[key] = out
        return out

    def _ival_coeffs(self, order: int, prec: int) -> tuple[Ival, ...]:
        key = ("i", order, prec)
        out = self._memo.get(key)
        if out is None:
            out = tuple(
                Ival.from_fraction(c, prec)
                for c in reversed(self._deriv_coeffs(order))
            )
            self._memo[key] = out
        return out

    def eval_fraction(self, x: Fraction, order: int = 0) -> Fraction:
        return _poly.evaluate(self._deriv_coeffs(order), x)

    def eval_float(self, x: float, order: int = 0) -> float:
        acc = 0.0
        for c in self._float_coeffs(order):
            acc = acc * x + c
        return acc

    def eval_batch(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        acc = np.zeros_like(x)
        for c in self._float_coeffs(order):
            acc = acc * x + c
        return acc

    def eval_ival(self, x: Ival, prec: int, order: int = 0) -> Ival:
        acc = Ival.point(0)
        for c in self._ival_coeffs(order, prec):
            acc = acc.mul(x, prec).add(c, prec)
        return acc


@dataclass(frozen=True)
class TrigPolynomialFamily:
    """``pi**pi_power * (const + sum_k a_k cos(k pi x) + b_k sin(k pi x))``."""

    const: Fraction
    terms: tuple[tuple[int, Fraction, Fraction], ...]  # (k, cos coeff, sin coeff)
    pi_power: int = 0

    kind = "trig_polynomial"
    exact_capable = False
    deriv_orders = (1, 2, 3)

    @cached_property
    def _memo(self) -> dict:
        return {}

    def _derived(self, order: int) -> "TrigPolynomialFamily":
        if order == 0:
            return self
        out = self._memo.get(order)
        if out is None:
            fam = self._derived(order - 1)
            out = TrigPolynomialFamily(
                const=Fraction(0),
                terms=tuple((k, b * k, -a * k) for (k, a, b) in fam.terms),
                pi_power=fam.pi_power + 1,
            )
            self._memo[order] = out
        return out

    def eval_float(self, x: float, order: int = 0) -> float:
        fam = self._derived(order)
        acc = float(fam.const)
        for k, a, b in fam.terms:
            acc += float(a) * math.cos(k * math.pi * x) + float(b) * math.sin(k * math.pi * x)
        return acc * math.pi**fam.pi_power

    def eval_batch(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        fam = self._derived(order)
        acc = np.full_like(x, float(fam.const))
        for k, a, b in fam.terms:
            acc = acc + float(a) * np.cos(k * np.pi * x) + float(b) * np.sin(k * np.pi * x)
        return acc * math.pi**fam.pi_power

    def eval_ival(self, x: Ival, prec: int, order: int = 0) -> Ival:
        fam = self._derived(order)
        wp = prec + 16
        pi_iv = Ival(mpmath.libmp.mpf_pi(wp, "d"), mpmath.libmp.mpf_pi(wp, "u"))
        acc = Ival.from_fraction(fam.const, wp)
        for k, a, b in fam.terms:
            arg = x.mul(pi_iv, wp).mul_int(k, wp)
            ca = arg.cos(wp).mul(Ival.from_fraction(a, wp), wp) if a else None
            sb = arg.sin(wp).mul(Ival.from_fraction(b, wp), wp) if b else None
            if ca is not None:
                acc = acc.add(ca, wp)
            if sb is not None:
                acc = acc.add(sb, wp)
        for _ in range(fam.pi_power):
            acc = acc.mul(pi_iv, wp)
        return acc

    def eval_fraction(self, x: Fraction, order: int = 0) -> Fraction:
        raise ConfigurationError("trigonometric families have no exact-rational mode")


@dataclass(frozen=True)
class ConjugateFamily:
    """``change o base o change^-1`` for a monotone polynomial ``change``.

    ``base`` acts on ``base_domain``; the composed map acts on the image of
    that domain under ``change``. Only first derivatives are supported.
    """

    base: PolynomialFamily
    base_domain: tuple[Fraction, Fraction]
    change: PolynomialFamily

    kind = "conjugate"
    exact_capable = False
    deriv_orders = (1,)

    def _inverse_float(self, y: float) -> float:
        lo, hi = float(self.base_domain[0]), float(self.base_domain[1])
        return solve_monotone_float(
            self.change.eval_float, lo, hi, y, df=lambda u: self.change.eval_float(u, 1)
        )

    def inverse_batch(self, y: np.ndarray) -> np.ndarray:
        lo, hi = float(self.base_domain[0]), float(self.base_domain[1])
        return solve_monotone_batch(
            self.change.eval_batch,
            lambda u: self.change.eval_batch(u, 1),
            lo,
            hi,
            y,
            increasing=True,
        )

    def _inverse_ival(self, y: Ival, prec: int) -> Ival:
        lo, hi = self.base_domain
        return solve_monotone_certified(
            lambda t, p: self.change.eval_ival(t, p),
            lo,
            hi,
            y,
            prec,
            deriv_float=lambda u: self.change.eval_float(u, 1),
            eval_float=self.change.eval_float,
        )

    def eval_float(self, x: float, order: int = 0) -> float:
        u = self._inverse_float(x)
        if order == 0:
            return self.change.eval_float(self.base.eval_float(u))
        if order == 1:
            fu = self.base.eval_float(u)
            return (
                self.change.eval_float(fu, 1)
                * self.base.eval_float(u, 1)
                / self.change.eval_float(u, 1)
            )
        raise ConfigurationError("conjugate families support derivative order 1 only")

    def eval_batch(self, x: np.ndarray, order: int = 0) -> np.ndarray:
        u = self.inverse_batch(x)
        if order == 0:
            return self.change.eval_batch(self.base.eval_batch(u))
        if order == 1:
            fu = self.base.eval_batch(u)
            return (
                self.change.eval_batch(fu, 1)
                * self.base.eval_batch(u, 1)
                / self.change.eval_batch(u, 1)
            )
        raise ConfigurationError("conjugate families support derivative order 1 only")

    def eval_ival(self, x: Ival, prec: int, order: int = 0) -> Ival:
        u = self._inverse_ival(x, prec)
        if order == 0:
            return self.change.eval_ival(self.base.eval_ival(u, prec), prec)
        if order == 1:
            fu = self.base.eval_ival(u, prec)
            num = self.change.eval_ival(fu, prec, 1).mul(self.base.eval_ival(u, prec, 1), prec)
            return num.div(self.change.eval_ival(u, prec, 1), prec)
        raise ConfigurationError("conjugate families support derivative order 1 only")

    def eval_fraction(self, x: Fraction, order: int = 0) -> Fraction:
        raise ConfigurationError("conjugate families have no exact-rational mode")


Family = Union[PolynomialFamily, TrigPolynomialFamily, ConjugateFamily]


# ---------------------------------------------------------------------------
# map data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalPoint:
    """Interior zero of the derivative, enclosed in a rational bracket.

    ``order`` is the first non-vanishing derivative order (2 for a generic
    quadratic turning point). ``nonflat_L`` and ``nonflat_radius`` witness
    the local derivative lower bound ``|Df(x)| >= |x - c|**(order-1) / L``
    on the punctured ball of that radius.
    """

    bracket: tuple[Fraction, Fraction]
    order: int
    nonflat_L: float
    nonflat_radius: float

    @property
    def location(self) -> float:
        return float((self.bracket[0] + self.bracket[1]) / 2)

    @property
    def exact(self) -> bool:
        return self.bracket[0] == self.bracket[1]

    def midpoint_fraction(self) -> Fraction:
        return (self.bracket[0] + self.bracket[1]) / 2

    def ival(self) -> Ival:
        return Ival(
            Ival.from_fraction(self.bracket[0], _BRACKET_BITS + 8).a,
            Ival.from_fraction(self.bracket[1], _BRACKET_BITS + 8).b,
        )


@dataclass(frozen=True)
class Branch:
    """Maximal interval on which the map is strictly monotone."""

    index: int
    lo: Fraction
    hi: Fraction
    increasing: bool
    image: tuple[float, float]

    @property
    def lo_float(self) -> float:
        return float(self.lo)

    @property
    def hi_float(self) -> float:
        return float(self.hi)


@dataclass(frozen=True)
class MapSpec:
    """A validated multimodal interval map."""

    label: str
    domain: tuple[Fraction, Fraction]
    family: Family
    critical_points: tuple[CriticalPoint, ...]

    # -- evaluation shorthands (float tier) ---------------------------------

    def f(self, x: float) -> float:
        return self.family.eval_float(x)

    def df(self, x: float, order: int = 1) -> float:
        return self.family.eval_float(x, order)

    def f_batch(self, x: np.ndarray) -> np.ndarray:
        return self.family.eval_batch(x)

    def df_batch(self, x: np.ndarray) -> np.ndarray:
        return self.family.eval_batch(x, 1)

    def f_ival(self, x: Ival, prec: int) -> Ival:
        return self.family.eval_ival(x, prec)

    def df_ival(self, x: Ival, prec: int) -> Ival:
        return self.family.eval_ival(x, prec, 1)

    @property
    def domain_floats(self) -> tuple[float, float]:
        return (float(self.domain[0]), float(self.domain[1]))

    @property
    def domain_length(self) -> float:
        return float(self.domain[1] - self.domain[0])

    def contains(self, x) -> bool:
        xf = to_fraction(x)
        return self.domain[0] <= xf <= self.domain[1]

    def branches(self) -> tuple[Branch, ...]:
        return branch_partition(self)

    def critical_distance(self, x: float) -> float:
        return min(abs(x - c.location) for c in self.critical_points)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def build_map(
    family: Family,
    domain: tuple[Fraction, Fraction],
    label: str,
    *,
    require_multimodal: bool = True,
) -> MapSpec:
    """Validate a family on a domain and assemble a :class:`MapSpec`.

    Locates critical points (bisection on derivative sign changes backed by
    exact Sturm isolation for polynomials), determines their orders, probes
    non-flatness constants, and checks that the map sends the domain into
    itself via branch-extremal values.
    """
    a, b = Fraction(domain[0]), Fraction(domain[1])
    if not a < b:
        raise DomainError(f"empty domain [{a}, {b}]")
    domain = (a, b)

    brackets = _critical_brackets(family, domain)
    if require_multimodal and not brackets:
        raise NotMultimodalError(
            f"map {label!r} has no interior critical point on [{a}, {b}]"
        )

    crits = []
    for lo, hi in brackets:
        order = _critical_order(family, domain, (lo, hi))
        crits.append((lo, hi, order))

    crit_points = []
    for i, (lo, hi, order) in enumerate(crits):
        mid = (lo + hi) / 2
        gaps = [float(mid - a), float(b - mid)]
        for j, (lo2, hi2, _) in enumerate(crits):
            if j != i:
                gaps.append(abs(float((lo2 + hi2) / 2 - mid)))
        radius = max(min(gaps) / 2.0, 1e-12)
        L = _probe_nonflat_L(family, float(mid), order, radius)
        crit_points.append(
            CriticalPoint(
                bracket=(lo, hi),
                order=order,
                nonflat_L=max(L * 1.05, 1.0),
                nonflat_radius=radius,
            )
        )

    spec = MapSpec(
        label=label,
        domain=domain,
        family=family,
        critical_points=tuple(crit_points),
    )
    if crit_points:
        _check_domain_invariance(spec)
    return spec


def _critical_brackets(family: Family, domain) -> list[tuple[Fraction, Fraction]]:
    a, b = domain
    if isinstance(family, PolynomialFamily):
        dcoeffs = family._deriv_coeffs(1)
        if _poly.degree(dcoeffs) < 1:
            return []
        sq = _poly.square_free_part(dcoeffs)
        out = []
        for lo, hi in _poly.isolate_roots(dcoeffs, a, b):
            if lo != hi:
                lo, hi = _poly.refine_bracket(sq, lo, hi, _BRACKET_WIDTH)
            out.append((lo, hi))
        return out
    if isinstance(family, ConjugateFamily):
        base_brackets = _critical_brackets(family.base, family.base_domain)
        out = []
        for lo, hi in base_brackets:
            plo = family.change.eval_fraction(lo)
            phi = family.change.eval_fraction(hi)
            if plo > phi:
                plo, phi = phi, plo
            out.append((plo, phi))
        return out
    # trig family: float sign scan, then certified bisection
    max_k = max((k for k, _, _ in family.terms), default=1)
    n = 64 * (max_k + 1)
    af, bf = float(a), float(b)
    xs = np.linspace(af, bf, n + 1)
    vals = family.eval_batch(xs, 1)
    near_zero = np.abs(vals) <= 1e-10 * (np.max(np.abs(vals)) + 1.0)
    out = []
    span = b - a
    for i in range(1, n):
        if near_zero[i]:
            # grid point lands (numerically) on a zero; bracket around it
            lo = a + span * Fraction(i - 1, n)
            hi = a + span * Fraction(i + 1, n)
            out.append(_refine_sign_change_ival(family, lo, hi))
    for i in range(n):
        if near_zero[i] or near_zero[i + 1]:
            continue
        if vals[i] * vals[i + 1] < 0.0:
            lo = a + span * Fraction(i, n)
            hi = a + span * Fraction(i + 1, n)
            out.append(_refine_sign_change_ival(family, lo, hi))
    out.sort()
    return out


def _refine_sign_change_ival(
    family: Family, lo: Fraction, hi: Fraction
) -> tuple[Fraction, Fraction]:
    """Certified rational bisection on a sign change of the derivative."""
    prec = _BRACKET_BITS + 32

    def sign_at(x: Fraction) -> int:
        v = family.eval_ival(Ival.from_fraction(x, prec), prec, 1)
        if v.strictly_above(0):
            return 1
        if v.strictly_below(0):
            return -1
        return 0

    slo, shi = sign_at(lo), sign_at(hi)
    if slo == 0 or shi == 0 or slo == shi:
        raise PrecisionError(
            f"cannot certify a derivative sign change on [{float(lo)}, {float(hi)}]"
        )
    while hi - lo > _BRACKET_WIDTH:
        mid = (lo + hi) / 2
        sm = sign_at(mid)
        if sm == 0:
            # zero within interval resolution: tighten both sides around mid
            quarter = (hi - lo) / 4
            lo2, hi2 = mid - quarter, mid + quarter
            if sign_at(lo2) == slo and sign_at(hi2) == shi:
                lo, hi = lo2, hi2
                continue
            break
        if sm == slo:
            lo = mid
        else:
            hi = mid
    return (lo, hi)


def _critical_order(family: Family, domain, bracket) -> int:
    lo, hi = bracket
    if isinstance(family, PolynomialFamily):
        dcoeffs = family._deriv_coeffs(1)
        mult = _poly.root_multiplicity(dcoeffs, (lo, hi))
        return mult + 1
    if isinstance(family, ConjugateFamily):
        base_brackets = _critical_brackets(family.base, family.base_domain)
        mid = (lo + hi) / 2
        for blo, bhi in base_brackets:
            plo = family.change.eval_fraction(blo)
            phi = family.change.eval_fraction(bhi)
            if min(plo, phi) <= mid <= max(plo, phi):
                return _critical_order(family.base, family.base_domain, (blo, bhi))
        raise GeometryError("conjugate critical point does not match a base bracket")
    # trig: require a simple zero of the derivative (second derivative
    # bounded away from zero on the bracket)
    prec = _BRACKET_BITS
    x = Ival(
        Ival.from_fraction(lo, prec).a,
        Ival.from_fraction(hi, prec).b,
    )
    d2 = family.eval_ival(x, prec, 2)
    if d2.contains_zero():
        raise PrecisionError(
            "cannot certify the order of a trigonometric critical point"
        )
    return 2


def _probe_nonflat_L(family: Family, c: float, order: int, radius: float) -> float:
    exponent = order - 1
    radii = np.geomspace(radius / 4096.0, radius * 0.5, 16)
    worst = 0.0
    for r in radii:
        for x in (c - r, c + r):
            d = abs(family.eval_float(x, 1))
            if d == 0.0:
                continue
            worst = max(worst, r**exponent / d)
    return worst if worst > 0 else 1.0


def _check_domain_invariance(spec: MapSpec) -> None:
    """Branch-extremal values (endpoint and critical values) must stay in
    the domain. Certified semantics: only a value that certainly escapes
    raises; enclosures that merely touch a boundary pass."""
    a, b = spec.domain
    fam = spec.family
    prec = 128
    a_lo = Ival.from_fraction(a, prec).a
    b_hi = Ival.from_fraction(b, prec).b
    endpoints: list[Fraction | tuple[Fraction, Fraction]] = [a, b]
    for c in spec.critical_points:
        endpoints.append(c.bracket)
    for e in endpoints:
        if isinstance(e, tuple):
            x = Ival(
                Ival.from_fraction(e[0], prec).a,
                Ival.from_fraction(e[1], prec).b,
            )
        else:
            x = Ival.from_fraction(e, prec)
        v = fam.eval_ival(x, prec)
        if mpf_gt(v.a, b_hi) or mpf_lt(v.b, a_lo):
            raise MapInvariantError(
                f"map {spec.label!r} leaves its domain: extremal value "
                f"{v.to_floats()} not inside [{float(a)}, {float(b)}]"
            )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def eval_map(spec: MapSpec, x, precision_bits: int = 53) -> mpmath.mpf:
    """Evaluate the map at ``x`` with absolute rounding error below
    ``2**(-precision_bits + 2)`` (guard ``g = 2``; one extra bit per factor
    of two in ``|f(x)|`` above 1)."""
    return _eval_certified(spec, x, precision_bits, order=0)


def eval_deriv(spec: MapSpec, x, order: int = 1, precision_bits: int = 53) -> mpmath.mpf:
    """Evaluate the ``order``-th derivative under the same rounding contract
    as :func:`eval_map`."""
    if order not in spec.family.deriv_orders:
        raise ConfigurationError(
            f"derivative order {order} unsupported for family {spec.family.kind!r}"
        )
    return _eval_certified(spec, x, precision_bits, order=order)


def _eval_certified(spec: MapSpec, x, precision_bits: int, order: int) -> mpmath.mpf:
    if precision_bits < 53:
        raise ConfigurationError("precision_bits must be at least 53")
    xf = to_fraction(x)
    if not spec.domain[0] <= xf <= spec.domain[1]:
        raise DomainError(f"point {float(xf)} outside domain of {spec.label!r}")
    wp = precision_bits + 16
    for _ in range(8):
        xi = Ival.from_fraction(xf, wp)
        v = spec.family.eval_ival(xi, wp, order)
        if v.agreement_bits(cap=wp) >= precision_bits + 2:
            mid = v.mid(wp)
            return as_mpf(mpf_pos(mid, precision_bits, "n"))
        wp *= 2
    raise PrecisionError(
        f"evaluation of {spec.label!r} did not converge at the requested precision"
    )


def branch_partition(spec: MapSpec, tolerance: float = 2.0**-40) -> tuple[Branch, ...]:
    """Ordered monotone branches covering the domain.

    Adjacent branches share exactly one critical point (represented by its
    bracket midpoint; endpoints are exact whenever the critical point is).
    """
    for c in spec.critical_points:
        if float(c.bracket[1] - c.bracket[0]) > tolerance:
            raise PrecisionError(
                f"critical bracket of {spec.label!r} wider than tolerance {tolerance}"
            )
    if not spec.critical_points:
        raise NotMultimodalError(f"map {spec.label!r} has no interior critical point")
    return _branches_cached(spec)


@lru_cache(maxsize=256)
def _branches_cached(spec: MapSpec) -> tuple[Branch, ...]:
    bounds: list[Fraction] = [spec.domain[0]]
    bounds.extend(c.midpoint_fraction() for c in spec.critical_points)
    bounds.append(spec.domain[1])
    branches = []
    for i in range(len(bounds) - 1):
        lo, hi = bounds[i], bounds[i + 1]
        mid = float((lo + hi) / 2)
        increasing = spec.df(mid) > 0
        flo, fhi = spec.f(float(lo)), spec.f(float(hi))
        image = (min(flo, fhi), max(flo, fhi))
        branches.append(
            Branch(index=i, lo=lo, hi=hi, increasing=increasing, image=image)
        )
    return tuple(branches)


class NonflatnessProbe(NamedTuple):
    """Result of the local-exponent probe at a critical point.

    ``ell``: fitted order (exponent of ``|x-c|`` in ``|Df|`` plus one);
    ``L``: smallest constant with ``|Df(x)| >= |x-c|**(ell-1) / L`` on the
    sampled grid; ``weak_L``: same with the exponent raised to ``ell``,
    the looser convention that also appears in the literature.
    """

    ell: float
    L: float
    weak_L: float


def nonflatness_probe(
    spec: MapSpec, c: CriticalPoint, radius_grid=None
) -> NonflatnessProbe:
    """Fit ``log |Df|`` against ``log r`` at ``c +- r`` over the radius grid."""
    loc = c.location
    if radius_grid is None:
        radius_grid = np.geomspace(c.nonflat_radius / 4096.0, c.nonflat_radius / 2, 24)
    radius_grid = np.asarray(sorted(radius_grid), dtype=float)
    if radius_grid[0] <= 0:
        raise GeometryError("radius grid must be strictly positive")
    r_max = radius_grid[-1]
    a, b = spec.domain_floats
    if loc - r_max < a or loc + r_max > b:
        raise GeometryError("radius grid leaves the domain")
    for other in spec.critical_points:
        if other is c:
            continue
        if abs(other.location - loc) <= r_max:
            raise GeometryError(
                "radius grid overlaps another critical point of the map"
            )

    logs_r = []
    logs_d = []
    samples = []
    for r in radius_grid:
        for x in (loc - r, loc + r):
            d = abs(spec.df(x))
            if d == 0.0:
                continue
            logs_r.append(math.log(r))
            logs_d.append(math.log(d))
            samples.append((r, d))
    if len(samples) < 4:
        raise GeometryError("too few usable probe samples")
    slope, _ = np.polyfit(logs_r, logs_d, 1)
    ell = slope + 1.0
    L = max(r**slope / d for r, d in samples)
    weak_L = max(r ** (slope + 1.0) / d for r, d in samples)
    return NonflatnessProbe(ell=ell, L=L, weak_L=weak_L)


# ---------------------------------------------------------------------------
# map definition files
# ---------------------------------------------------------------------------


def _family_to_dict(fam: Family) -> dict:
    if isinstance(fam, PolynomialFamily):
        return {"kind": fam.kind, "coefficients": [str(c) for c in fam.coeffs]}
    if isinstance(fam, TrigPolynomialFamily):
        return {
            "kind": fam.kind,
            "constant": str(fam.const),
            "pi_power": fam.pi_power,
            "terms": [
                {"k": k, "cos": str(a), "sin": str(b)} for (k, a, b) in fam.terms
            ],
        }
    if isinstance(fam, ConjugateFamily):
        return {
            "kind": fam.kind,
            "base": _family_to_dict(fam.base),
            "base_domain": [str(fam.base_domain[0]), str(fam.base_domain[1])],
            "change": [str(c) for c in fam.change.coeffs],
        }
    raise TypeError(f"unknown family {type(fam).__name__}")


def _family_from_dict(d: dict) -> Family:
    kind = d["kind"]
    if kind == "polynomial":
        return PolynomialFamily(tuple(Fraction(c) for c in d["coefficients"]))
    if kind == "trig_polynomial":
        return TrigPolynomialFamily(
            const=Fraction(d["constant"]),
            terms=tuple(
                (int(t["k"]), Fraction(t["cos"]), Fraction(t["sin"]))
                for t in d["terms"]
            ),
            pi_power=int(d.get("pi_power", 0)),
        )
    if kind == "conjugate":
        return ConjugateFamily(
            base=_family_from_dict(d["base"]),
            base_domain=(Fraction(d["base_domain"][0]), Fraction(d["base_domain"][1])),
            change=PolynomialFamily(tuple(Fraction(c) for c in d["change"])),
        )
    raise ValueError(f"unknown family kind {kind!r}")


def map_to_dict(spec: MapSpec) -> dict:
    return {
        "label": spec.label,
        "domain": [str(spec.domain[0]), str(spec.domain[1])],
        "family": _family_to_dict(spec.family),
    }


def map_from_dict(d: dict) -> MapSpec:
    domain = (Fraction(d["domain"][0]), Fraction(d["domain"][1]))
    return build_map(_family_from_dict(d["family"]), domain, d["label"])


def save_map(spec: MapSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(map_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_map(path) -> MapSpec:
    with open(path) as fh:
        return map_from_dict(json.load(fh))
