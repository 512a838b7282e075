"""Certified forward orbits and periodic-orbit search.

Orbits are computed in outward-rounded interval arithmetic at a working
precision sized from the orbit length and a grid estimate of ``sup |Df|``
(chaotic orbits lose about ``log2`` of the local expansion in bits per
step). Every stored entry carries the number of bits on which it provably
agrees with the infinite-precision orbit; records whose certification falls
below the policy threshold trigger precision escalation and, past the
budget, a :class:`PrecisionError` carrying the certified prefix.

An exact-rational mode is available for polynomial maps (short horizons
only; digit counts double per step for a quadratic map).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial

import mpmath
import numpy as np
from mpmath.libmp import (
    from_float,
    fzero,
    mpf_div,
    mpf_gt,
    mpf_lt,
    mpf_mul,
    mpf_sub,
    to_float,
)

from ._solve import solve_monotone_float
from .errors import ConfigurationError, DomainError, PrecisionError
from .intervals import Ival, as_mpf, raw_dn, raw_up
from .mapkit import CriticalPoint, MapSpec, branch_partition, to_fraction

__all__ = [
    "OrbitRecord",
    "PeriodicOrbit",
    "PrecisionPolicy",
    "RepellingReport",
    "critical_orbit",
    "derivative_sup_estimate",
    "orbit_csv_rows",
    "periodic_points",
    "point_orbit",
    "repelling_check",
    "write_orbit_csv",
]

_REPELLING_TOL = 2.0**-20
_MAX_PERIOD_CAP = 12
_EXACT_CAP = 30
_EXACT_BITS = 1 << 30  # sentinel: exact-rational entries are error-free


@dataclass(frozen=True)
class PrecisionPolicy:
    """Working-precision policy for certified orbits."""

    min_certified: int = 64
    guard_bits: int = 64
    max_bits: int = 1 << 16
    sup_samples: int = 512

    def initial_bits(self, spec: MapSpec, n: int) -> int:
        m_hat = derivative_sup_estimate(spec, self.sup_samples)
        per_step = math.log2(max(m_hat, 2.0))
        return min(self.max_bits, int(math.ceil(n * per_step)) + self.guard_bits)


def derivative_sup_estimate(spec: MapSpec, samples: int = 512) -> float:
    """Grid upper-bound estimate of ``sup |Df|`` over the domain."""
    a, b = spec.domain_floats
    xs = np.linspace(a, b, samples)
    vals = np.abs(spec.df_batch(xs))
    return float(vals.max()) * 1.05


@dataclass(frozen=True)
class OrbitRecord:
    """Forward orbit of ``base_point`` with per-step derivative factors.

    ``points[k]`` is the k-th iterate of the base point (the base point
    itself sits at index 0) and ``deriv_factors[k] = |Df(points[k])|``.
    ``certified_bits[k]`` bounds the absolute disagreement with the true
    orbit by ``2**-certified_bits[k]``.
    """

    map_label: str
    base_point: object
    points: tuple
    deriv_factors: tuple
    precision_bits: int
    certified_bits: tuple[int, ...]
    exact: bool = False

    def __len__(self) -> int:
        return len(self.points)

    @property
    def min_certified(self) -> int:
        return min(self.certified_bits)

    def points_float(self) -> np.ndarray:
        return np.array([float(p) for p in self.points])

    def factors_float(self) -> np.ndarray:
        return np.array([float(d) for d in self.deriv_factors])

    def log_factors(self) -> np.ndarray:
        """Natural logs of the derivative factors (-inf on an exact zero)."""
        out = np.empty(len(self.deriv_factors))
        for i, d in enumerate(self.deriv_factors):
            if d == 0:
                out[i] = -math.inf
            elif isinstance(d, Fraction):
                out[i] = math.log(d.numerator) - math.log(d.denominator)
            else:
                out[i] = float(mpmath.log(d))
        return out


def point_orbit(
    spec: MapSpec,
    x0,
    n: int,
    policy: PrecisionPolicy = PrecisionPolicy(),
    exact: bool = False,
) -> OrbitRecord:
    """Certified orbit of an arbitrary starting point (``n`` entries)."""
    if n < 0:
        raise ConfigurationError("orbit length must be nonnegative")
    n_pts = max(n, 1)
    x0f = to_fraction(x0)
    if not spec.domain[0] <= x0f <= spec.domain[1]:
        raise DomainError(f"orbit start {float(x0f)} outside domain of {spec.label!r}")
    if exact:
        return _exact_orbit(spec, x0f, n_pts)
    return _certified_orbit(spec, x0f, n_pts, policy)


def critical_orbit(
    spec: MapSpec,
    c: CriticalPoint,
    n: int,
    policy: PrecisionPolicy = PrecisionPolicy(),
    exact: bool = False,
) -> OrbitRecord:
    """Orbit of the critical value ``f(c)`` (index 0 holds ``f(c)``)."""
    if exact:
        if not c.exact:
            raise ConfigurationError(
                "exact mode requires an exactly-located critical point"
            )
        v = spec.family.eval_fraction(c.bracket[0])
        return point_orbit(spec, v, n, policy, exact=True)
    prec = policy.initial_bits(spec, max(n, 1)) + 32
    ci = Ival(
        Ival.from_fraction(c.bracket[0], prec).a,
        Ival.from_fraction(c.bracket[1], prec).b,
    )
    # the enclosure midpoint of the critical value can poke past a domain
    # endpoint by a rounding hair; the true value cannot
    v = spec.f_ival(ci, prec).mid(prec)
    lo_r = raw_dn(spec.domain[0], prec)
    hi_r = raw_up(spec.domain[1], prec)
    if mpf_lt(v, lo_r):
        v = lo_r
    elif mpf_gt(v, hi_r):
        v = hi_r
    return point_orbit(spec, as_mpf(v), n, policy)


def _exact_orbit(spec: MapSpec, x0: Fraction, n_pts: int) -> OrbitRecord:
    if not spec.family.exact_capable:
        raise ConfigurationError(
            f"family {spec.family.kind!r} has no exact-rational mode"
        )
    if n_pts > _EXACT_CAP:
        raise ConfigurationError(
            f"exact-rational orbits are capped at {_EXACT_CAP} entries"
        )
    pts = [x0]
    for _ in range(n_pts - 1):
        pts.append(spec.family.eval_fraction(pts[-1]))
    factors = tuple(abs(spec.family.eval_fraction(p, 1)) for p in pts)
    bits = tuple([_EXACT_BITS] * n_pts)
    return OrbitRecord(
        map_label=spec.label,
        base_point=x0,
        points=tuple(pts),
        deriv_factors=factors,
        precision_bits=_EXACT_BITS,
        certified_bits=bits,
        exact=True,
    )


def _certified_orbit(
    spec: MapSpec, x0: Fraction, n_pts: int, policy: PrecisionPolicy
) -> OrbitRecord:
    a, b = spec.domain
    wp = policy.initial_bits(spec, n_pts)
    best: OrbitRecord | None = None
    while True:
        lo = Ival.from_fraction(a, wp).a
        hi = Ival.from_fraction(b, wp).b
        cur = Ival.from_fraction(x0, wp)
        points = []
        factors = []
        bits = []
        ok = True
        for k in range(n_pts):
            # true orbit stays in the domain, so clipping keeps enclosure
            cur = cur.clip(lo, hi)
            points.append(as_mpf(cur.mid(wp)))
            factors.append(as_mpf(spec.df_ival(cur, wp).abs().mid(wp)))
            cb = cur.agreement_bits(cap=wp)
            bits.append(cb)
            if cb < policy.min_certified:
                ok = False
                break
            if k < n_pts - 1:
                cur = spec.f_ival(cur, wp)
        record = OrbitRecord(
            map_label=spec.label,
            base_point=points[0] if points else None,
            points=tuple(points),
            deriv_factors=tuple(factors),
            precision_bits=wp,
            certified_bits=tuple(bits),
        )
        if ok:
            return record
        prefix_len = max(0, len(points) - 1)
        if best is None or prefix_len > len(best):
            best = OrbitRecord(
                map_label=spec.label,
                base_point=points[0] if points else None,
                points=tuple(points[:prefix_len]),
                deriv_factors=tuple(factors[:prefix_len]),
                precision_bits=wp,
                certified_bits=tuple(bits[:prefix_len]),
            )
        if wp >= policy.max_bits:
            raise PrecisionError(
                f"orbit certification exhausted at {wp} bits; "
                f"largest certified prefix has {len(best)} entries",
                partial=best,
            )
        wp = min(policy.max_bits, wp * 2)


# ---------------------------------------------------------------------------
# periodic orbits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicOrbit:
    """A periodic cycle, reported once with its smallest point first."""

    period: int
    point: float
    bracket: tuple[float, float]
    multiplier: float
    derivative: float
    repelling: bool
    cycle: tuple[float, ...] = field(default=())


@dataclass(frozen=True)
class RepellingReport:
    all_repelling: bool
    witnesses: tuple[PeriodicOrbit, ...]
    orbits: tuple[PeriodicOrbit, ...]
    tolerance: float = _REPELLING_TOL


def _iterate_float(spec: MapSpec, x: float, k: int) -> float:
    for _ in range(k):
        x = spec.f(x)
    return x


def _monotone_pieces(spec: MapSpec, p: int, reverse_scan: bool = False):
    """Maximal intervals on which ``f^p`` is monotone, with float endpoints.

    Pieces are produced by refining the branch partition: a piece of
    ``f^k`` splits at the preimages of critical points under ``f^k``.
    ``reverse_scan`` reverses the critical-point enumeration order (the
    output must not depend on it).
    """
    branches = branch_partition(spec)
    crit_locs = [c.location for c in spec.critical_points]
    pieces = [(float(br.lo), float(br.hi)) for br in branches]
    for k in range(1, p):
        fwd = partial(_iterate_float, spec, k=k)
        new_pieces = []
        for lo, hi in pieces:
            u, v = fwd(lo), fwd(hi)
            cuts = []
            img_lo, img_hi = min(u, v), max(u, v)
            locs = reversed(crit_locs) if reverse_scan else crit_locs
            for cl in locs:
                if img_lo < cl < img_hi:
                    cuts.append(solve_monotone_float(fwd, lo, hi, cl))
            for cut in sorted(cuts):
                if cut - lo > 1e-14:
                    new_pieces.append((lo, cut))
                lo = cut
            if hi - lo > 1e-14:
                new_pieces.append((lo, hi))
        pieces = new_pieces
    return pieces


def _f_raw(spec: MapSpec, x: tuple, prec: int) -> tuple:
    return spec.f_ival(Ival(x, x), prec).mid(prec)


def _df_raw(spec: MapSpec, x: tuple, prec: int) -> tuple:
    return spec.df_ival(Ival(x, x), prec).mid(prec)


def _dist(x: tuple, y: tuple) -> float:
    return abs(to_float(mpf_sub(x, y, 53, "n")))


def _polish_root(spec: MapSpec, p: int, x: float, prec: int) -> tuple:
    """Newton-polish a fixed point of ``f^p``; raw mpf arithmetic at an
    explicit precision, clamped to the domain."""
    wp = prec + 16
    z = from_float(x)
    a_r = raw_dn(spec.domain[0], wp)
    b_r = raw_up(spec.domain[1], wp)
    one = from_float(1.0)
    for _ in range(60):
        w = z
        dprod = one
        for _ in range(p):
            dprod = mpf_mul(dprod, _df_raw(spec, w, wp), wp, "n")
            w = _f_raw(spec, w, wp)
        g = mpf_sub(w, z, wp, "n")
        dg = mpf_sub(dprod, one, wp, "n")
        if dg == fzero:
            break
        step = mpf_div(g, dg, wp, "n")
        z2 = mpf_sub(z, step, wp, "n")
        z2 = Ival(z2, z2).clip(a_r, b_r).a
        if _dist(z2, z) < 2.0 ** (-prec + 8):
            z = z2
            break
        z = z2
    return z


def periodic_points(
    spec: MapSpec,
    max_period: int,
    reverse_scan: bool = False,
    max_period_cap: int = _MAX_PERIOD_CAP,
) -> list[PeriodicOrbit]:
    """All periodic cycles of least period up to ``max_period``.

    Roots of ``f^p(x) = x`` are found branchwise on the monotone pieces of
    ``f^p`` (float bisection seeded, mpf Newton polished), then collapsed
    to least period and grouped into cycles.
    """
    if max_period > max_period_cap:
        raise ConfigurationError(
            f"max_period {max_period} above the configured cap {max_period_cap}"
        )
    if max_period < 1:
        return []
    a, b = spec.domain_floats
    found: list[tuple[int, tuple]] = []

    for p in range(1, max_period + 1):
        fp = partial(_iterate_float, spec, k=p)
        g = lambda x: fp(x) - x
        roots: list[float] = []
        for lo, hi in _monotone_pieces(spec, p, reverse_scan=reverse_scan):
            # scan interior sign changes; monotone decreasing pieces of f^p
            # cross the diagonal at most once, increasing ones are subdivided
            n_sub = 8
            xs = np.linspace(lo, hi, n_sub + 1)
            gs = np.array([g(float(x)) for x in xs])
            for i in range(n_sub):
                if gs[i] == 0.0:
                    roots.append(float(xs[i]))
                elif gs[i] * gs[i + 1] < 0.0:
                    roots.append(
                        solve_monotone_float(g, float(xs[i]), float(xs[i + 1]), 0.0)
                    )
            if gs[-1] == 0.0:
                roots.append(float(xs[-1]))
        for x in (a, b):
            if abs(g(x)) < 1e-12:
                roots.append(x)
        prec = 80 + 30 * p
        for x in roots:
            z = _polish_root(spec, p, x, prec)
            least = True
            for q in range(1, p):
                if p % q == 0:
                    w = z
                    for _ in range(q):
                        w = _f_raw(spec, w, prec)
                    if _dist(w, z) < 1e-9:
                        least = False
                        break
            if least:
                found.append((p, z))

    # group least-period points into cycles, one report per cycle
    orbits: dict[tuple, PeriodicOrbit] = {}
    for p, z in found:
        prec = 80 + 30 * p
        wp = prec + 16
        cycle = [z]
        w = z
        deriv = from_float(1.0)
        for _ in range(p):
            deriv = mpf_mul(deriv, _df_raw(spec, w, wp), wp, "n")
            w = _f_raw(spec, w, wp)
        if _dist(w, z) > 1e-9:
            continue  # polishing drifted off a true cycle
        for _ in range(p - 1):
            cycle.append(_f_raw(spec, cycle[-1], wp))
        cycle_f = [to_float(c) for c in cycle]
        rep = min(cycle_f)
        key = (p, round(rep, 10))
        if key in orbits:
            continue
        deriv_f = to_float(deriv)
        mult = abs(deriv_f)
        width = 2.0 ** (-min(prec // 2, 500))
        orbits[key] = PeriodicOrbit(
            period=p,
            point=rep,
            bracket=(rep - width, rep + width),
            multiplier=mult,
            derivative=deriv_f,
            repelling=mult > 1.0 + _REPELLING_TOL,
            cycle=tuple(cycle_f),
        )
    return sorted(orbits.values(), key=lambda o: (o.period, o.point))


def repelling_check(
    spec: MapSpec, max_period: int, reverse_scan: bool = False
) -> RepellingReport:
    """True iff every cycle with period <= ``max_period`` is repelling."""
    orbits = tuple(periodic_points(spec, max_period, reverse_scan=reverse_scan))
    witnesses = tuple(o for o in orbits if not o.repelling)
    return RepellingReport(
        all_repelling=not witnesses,
        witnesses=witnesses,
        orbits=orbits,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def orbit_csv_rows(record: OrbitRecord):
    for k in range(len(record)):
        yield (
            k,
            str(record.points[k]),
            str(record.deriv_factors[k]),
            record.certified_bits[k],
        )


def write_orbit_csv(record: OrbitRecord, path) -> dict:
    """Write index/point/deriv_factor/certified_bits rows; returns the JSON
    header (also written next to the CSV as ``<path>.json``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "point", "deriv_factor", "certified_bits"])
        for row in orbit_csv_rows(record):
            w.writerow(row)
    header = {
        "map_label": record.map_label,
        "base_point": str(record.base_point),
        "entries": len(record),
        "precision_bits": record.precision_bits,
        "min_certified_bits": record.min_certified,
        "exact": record.exact,
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return header
