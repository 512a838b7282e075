"""Backward dynamics: components of preimages, criticality, shrinking rates,
distortion probes, and derivative-growth certificates.

Two arithmetic tiers share one component-walking algorithm:

* a float tier for component trees (shrinking statistics, stability
  probes, distortion sampling), accurate to solver tolerance ~1e-13;
* a certified tier on raw mpf endpoints for backward chains anchored to a
  certified orbit, where diameters reach far below double precision.

A component of ``f^-1(J)`` around a known inhabitant is grown by walking
branchwise away from the inhabitant: while the value at the next branch
boundary stays inside ``J`` the walk crosses the critical point, otherwise
the boundary equation ``f(x) = bdry(J)`` is solved on the current branch.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from mpmath.libmp import from_float, fzero, mpf_add, mpf_gt, mpf_lt, mpf_sub, to_float

from ._solve import solve_monotone_certified, solve_monotone_float
from .errors import CapacityError, DomainError, HypothesisError
from .intervals import Ival, raw_dn, raw_from_fraction, raw_up
from .mapkit import Branch, MapSpec, branch_partition
from .orbit import PrecisionPolicy, derivative_sup_estimate, point_orbit

__all__ = [
    "ChainConstants",
    "Component",
    "ComponentChain",
    "DistortionProbe",
    "PieceBound",
    "QuasiChainCertificate",
    "ShrinkCertificate",
    "ShrinkingFit",
    "criticality_count",
    "esc_fit",
    "estimate_chain_constants",
    "koebe_probe",
    "preimage_components",
    "pull_stable_probe",
    "pullback_chain",
    "quasi_chain",
    "sample_distortion_probes",
    "shrink_to_ce_bound",
    "tce_density",
    "write_chain_csv",
]

_MERGE_TOL = 1e-12
_COMPONENT_CAP = 10**6


# ---------------------------------------------------------------------------
# float-tier component machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Component:
    lo: float
    hi: float
    pruned: bool = False

    @property
    def diameter(self) -> float:
        return self.hi - self.lo


def _branch_values(spec: MapSpec) -> list[float]:
    branches = branch_partition(spec)
    vals = [spec.f(float(branches[0].lo))]
    vals.extend(spec.f(float(b.hi)) for b in branches)
    return vals


def _solve_on_branch(spec: MapSpec, br: Branch, target: float) -> float:
    return solve_monotone_float(
        spec.f, br.lo_float, br.hi_float, target, df=spec.df
    )


def _branch_preimage(spec: MapSpec, br: Branch, bvals: list[float], jlo: float, jhi: float):
    """Preimage of ``[jlo, jhi]`` inside one monotone branch (or None)."""
    m, M = br.image
    lo = max(jlo, m)
    hi = min(jhi, M)
    if lo > hi:
        return None
    v_left = bvals[br.index]       # f at branch.lo
    t_left = lo if br.increasing else hi
    t_right = hi if br.increasing else lo
    if (br.increasing and t_left <= v_left) or (not br.increasing and t_left >= v_left):
        x_lo = br.lo_float
    else:
        x_lo = _solve_on_branch(spec, br, t_left)
    v_right = bvals[br.index + 1]  # f at branch.hi
    if (br.increasing and t_right >= v_right) or (not br.increasing and t_right <= v_right):
        x_hi = br.hi_float
    else:
        x_hi = _solve_on_branch(spec, br, t_right)
    if x_lo > x_hi:
        x_lo, x_hi = x_hi, x_lo
    return (x_lo, x_hi)


def _pull_level(
    spec: MapSpec, branches, bvals, comps, merge_tol: float
) -> list[tuple[float, float]]:
    """One backward level of a component tree: invert on every branch, then
    merge pieces that touch across a critical point."""
    pieces: list[tuple[float, float]] = []
    for clo, chi in comps:
        for br in branches:
            piece = _branch_preimage(spec, br, bvals, clo, chi)
            if piece is not None:
                pieces.append(piece)
    pieces.sort()
    merged: list[list[float]] = []
    for plo, phi in pieces:
        if merged and plo - merged[-1][1] <= merge_tol:
            merged[-1][1] = max(merged[-1][1], phi)
        else:
            merged.append([plo, phi])
    return [(plo, phi) for plo, phi in merged]


def preimage_components(
    spec: MapSpec,
    J: tuple[float, float],
    depth: int,
    cap: int = _COMPONENT_CAP,
    prune_floor: float | None = None,
    merge_tol: float = _MERGE_TOL,
) -> list[Component]:
    """All connected components of the depth-fold preimage of ``J``.

    Components whose diameter falls below the pruning floor are kept and
    flagged (never dropped), so diameter statistics stay exact. Exceeding
    the component cap raises :class:`CapacityError` with the partial tree.
    """
    a, b = spec.domain_floats
    jlo, jhi = float(J[0]), float(J[1])
    if not (a <= jlo <= jhi <= b):
        raise DomainError(f"interval {J} not inside the domain of {spec.label!r}")
    if depth < 1:
        raise DomainError("depth must be >= 1")
    if prune_floor is None:
        prune_floor = 2.0**-26
    branches = branch_partition(spec)
    bvals = _branch_values(spec)
    comps = [(jlo, jhi)]
    for level in range(depth):
        comps = _pull_level(spec, branches, bvals, comps, merge_tol)
        if len(comps) > cap:
            raise CapacityError(
                f"component tree exceeded cap {cap} at depth {level + 1}",
                partial=[Component(lo, hi) for lo, hi in comps],
            )
    return [
        Component(lo, hi, pruned=(hi - lo) < prune_floor) for lo, hi in comps
    ]


def _locate_branch(branches, x: float, side: str) -> int:
    """Index of the branch owning ``x``; boundary points go to the branch on
    the requested side ('left' or 'right') when possible."""
    bounds = [br.lo_float for br in branches] + [branches[-1].hi_float]
    i = bisect_right(bounds, x) - 1
    i = min(max(i, 0), len(branches) - 1)
    if side == "left" and i > 0 and x <= branches[i].lo_float:
        return i - 1
    if side == "right" and i < len(branches) - 1 and x >= branches[i].hi_float:
        return i + 1
    return i


def _component_around_float(
    spec: MapSpec, jlo: float, jhi: float, point: float
) -> tuple[float, float]:
    """Component of ``f^-1([jlo, jhi])`` containing ``point`` (float tier)."""
    branches = branch_partition(spec)
    bvals = _branch_values(spec)
    fp = spec.f(point)
    jlo = min(jlo, fp)
    jhi = max(jhi, fp)

    def walk(direction: int) -> float:
        bi = _locate_branch(branches, point, "left" if direction < 0 else "right")
        frontier = point
        while True:
            br = branches[bi]
            v_end = bvals[br.index] if direction < 0 else bvals[br.index + 1]
            if jlo <= v_end <= jhi:
                frontier = br.lo_float if direction < 0 else br.hi_float
                bi += direction
                if bi < 0 or bi >= len(branches):
                    return frontier  # reached a domain endpoint
                continue
            target = jlo if v_end < jlo else jhi
            lo, hi = (br.lo_float, frontier) if direction < 0 else (frontier, br.hi_float)
            return solve_monotone_float(spec.f, lo, hi, target, df=spec.df)

    return (walk(-1), walk(+1))


# ---------------------------------------------------------------------------
# certified-tier component machinery
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _branch_end_value(spec: MapSpec, frac: Fraction, wp: int) -> Ival:
    x = Ival(
        Ival.from_fraction(frac, wp).a,
        Ival.from_fraction(frac, wp).b,
    )
    return spec.f_ival(x, wp)


def _component_around_raw(
    spec: MapSpec, W: Ival, point: tuple, prec: int
) -> Ival:
    """Component of ``f^-1(W)`` containing ``point`` (raw mpf tier).

    Returns an outer enclosure; the target is widened by the enclosure of
    ``f(point)`` so a certified anchor a hair outside ``W`` stays handled.
    """
    branches = branch_partition(spec)
    wp = prec + 16
    fp = spec.f_ival(Ival(point, point), wp)
    lo_t = W.a if mpf_lt(W.a, fp.a) else fp.a
    hi_t = W.b if mpf_gt(W.b, fp.b) else fp.b
    target = Ival(lo_t, hi_t)
    pf = to_float(point)

    def end_val(frac: Fraction) -> Ival:
        return _branch_end_value(spec, frac, wp)

    def walk(direction: int) -> tuple:
        bi = _locate_branch(branches, pf, "left" if direction < 0 else "right")
        frontier = point
        while True:
            br = branches[bi]
            end_frac = br.lo if direction < 0 else br.hi
            v = end_val(end_frac)
            inside = not (mpf_lt(v.a, target.a) or mpf_gt(v.b, target.b))
            crossing = mpf_lt(v.b, target.a) or mpf_gt(v.a, target.b)
            if inside:
                frontier = raw_dn(end_frac, wp) if direction < 0 else raw_up(end_frac, wp)
                bi += direction
                if bi < 0 or bi >= len(branches):
                    return frontier
                continue
            if not crossing:
                # boundary value within enclosure width of the target edge:
                # stop at the branch end (outer approximation)
                return raw_dn(end_frac, wp) if direction < 0 else raw_up(end_frac, wp)
            bdry = Ival(target.a, target.a) if mpf_lt(v.b, target.a) else Ival(target.b, target.b)
            lo, hi = (end_frac, frontier) if direction < 0 else (frontier, end_frac)
            sol = solve_monotone_certified(
                spec.f_ival,
                lo,
                hi,
                bdry,
                prec,
                deriv_float=spec.df,
                eval_float=spec.f,
            )
            return sol.a if direction < 0 else sol.b

    return Ival(walk(-1), walk(+1))


# ---------------------------------------------------------------------------
# chains and criticality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ComponentChain:
    """Backward chain ``W_n, ..., W_0`` of a ball along an orbit.

    ``chain[i]`` is ``W_(n-i)`` as an :class:`Ival`; ``critical_flags`` and
    ``diameters_log2`` are aligned with ``chain``. ``component(j)`` returns
    ``W_j``.
    """

    map_label: str
    base_point: float
    horizon: int
    radius: float
    chain: tuple[Ival, ...]
    critical_flags: tuple[bool, ...]
    diameters_log2: tuple[float, ...]
    clipped: bool
    precision_bits: int

    def component(self, j: int) -> Ival:
        return self.chain[self.horizon - j]

    def flag(self, j: int) -> bool:
        return self.critical_flags[self.horizon - j]

    def criticality(self) -> int:
        """Number of j in {0..n-1} whose component meets the critical set."""
        return sum(1 for j in range(self.horizon) if self.flag(j))


def _log2_width(iv: Ival) -> float:
    w = iv.width_raw()
    if w == fzero:
        return -math.inf
    return math.log2(int(w[1])) + w[2]


def _crit_ivals(spec: MapSpec) -> list[Ival]:
    return [c.ival() for c in spec.critical_points]


def _chain_policy(policy: PrecisionPolicy | None) -> PrecisionPolicy:
    return policy if policy is not None else PrecisionPolicy()


def pullback_chain(
    spec: MapSpec,
    x,
    n: int,
    r: float,
    policy: PrecisionPolicy | None = None,
) -> ComponentChain:
    """Backward chain of ``B(f^n(x), r)`` along the orbit of ``x``.

    The ball is clipped to the domain (recorded in ``clipped``); each pull
    takes the component containing the certified orbit point.
    """
    if r <= 0:
        raise DomainError("ball radius must be positive")
    policy = _chain_policy(policy)
    orbit = point_orbit(spec, x, n + 1, policy)
    prec = orbit.precision_bits
    a_r = raw_dn(spec.domain[0], prec)
    b_r = raw_up(spec.domain[1], prec)
    center = orbit.points[n]._mpf_
    r_raw = from_float(r)
    ball = Ival(mpf_sub(center, r_raw, prec, "d"), mpf_add(center, r_raw, prec, "u"))
    clipped = mpf_lt(ball.a, a_r) or mpf_gt(ball.b, b_r)
    ball = ball.clip(a_r, b_r)

    # the component at depth d has shrunk by roughly sup|Df|**-d, so the
    # solves only need depth-scaled precision
    per_step = math.log2(max(derivative_sup_estimate(spec), 2.0))
    crit_ivs = _crit_ivals(spec)
    chain = [ball]
    flags = [any(ball.intersects(ci) for ci in crit_ivs)]
    cur = ball
    for j in range(n - 1, -1, -1):
        step_prec = min(prec, int((n - j) * per_step) + 128)
        cur = _component_around_raw(spec, cur, orbit.points[j]._mpf_, step_prec)
        chain.append(cur)
        flags.append(any(cur.intersects(ci) for ci in crit_ivs))
    return ComponentChain(
        map_label=spec.label,
        base_point=float(orbit.points[0]),
        horizon=n,
        radius=r,
        chain=tuple(chain),
        critical_flags=tuple(flags),
        diameters_log2=tuple(_log2_width(iv) for iv in chain),
        clipped=clipped,
        precision_bits=prec,
    )


def criticality_count(
    spec: MapSpec, x, n: int, r: float, policy: PrecisionPolicy | None = None
) -> int:
    """Number of steps of the backward chain that engulf a critical point."""
    return pullback_chain(spec, x, n, r, policy).criticality()


@dataclass(frozen=True)
class TceDensity:
    horizon: int
    radius: float
    threshold: int
    density: float
    liminf_surrogate: float
    counts: tuple[int, ...]


def tce_density(
    spec: MapSpec,
    x,
    N: int,
    r: float,
    D: int,
    policy: PrecisionPolicy | None = None,
) -> TceDensity:
    """Density of times m <= N with criticality at most D.

    The liminf is surrogated by the minimum over suffix windows {m..N} of
    the density of good times inside the window.
    """
    if N < 1:
        raise DomainError("horizon must be >= 1")
    counts = [criticality_count(spec, x, m, r, policy) for m in range(1, N + 1)]
    good = [c <= D for c in counts]
    density = sum(good) / N
    best = math.inf
    for m0 in range(N):
        window = good[m0:]
        best = min(best, sum(window) / len(window))
    return TceDensity(
        horizon=N,
        radius=r,
        threshold=D,
        density=density,
        liminf_surrogate=best,
        counts=tuple(counts),
    )


# ---------------------------------------------------------------------------
# exponential shrinking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShrinkingFit:
    """Per-depth maximum pull-back diameters with a fitted decay rate."""

    delta: float
    depth: int
    max_diameters: tuple[float, ...]
    rate: float
    constant: float
    verdict: bool
    probe_count: int


def esc_fit(
    spec: MapSpec,
    delta: float,
    N: int,
    probe_intervals,
    cap: int = _COMPONENT_CAP,
) -> ShrinkingFit:
    """Fit ``max_diameter(n) <= C * rate**-n`` over full component trees.

    Every probe interval must have length at most ``delta``; the per-depth
    maximum runs over all components of all probes, with the constant made
    tight so the bound binds pointwise.
    """
    probes = [(float(lo), float(hi)) for lo, hi in probe_intervals]
    for lo, hi in probes:
        if hi - lo > delta * (1 + 1e-12):
            raise DomainError(
                f"probe ({lo}, {hi}) longer than the length cap {delta}"
            )
    maxima = np.zeros(N)
    branches = branch_partition(spec)
    bvals = _branch_values(spec)
    for lo, hi in probes:
        comps = [(lo, hi)]
        for depth in range(N):
            comps = _pull_level(spec, branches, bvals, comps, _MERGE_TOL)
            if len(comps) > cap:
                raise CapacityError(f"component tree exceeded cap {cap}")
            maxima[depth] = max(maxima[depth], max(c[1] - c[0] for c in comps))
    ns = np.arange(1, N + 1, dtype=float)
    slope, _ = np.polyfit(ns, np.log(maxima), 1)
    rate = math.exp(-slope)
    log_const = float(np.max(np.log(maxima) + ns * math.log(rate)))
    return ShrinkingFit(
        delta=delta,
        depth=N,
        max_diameters=tuple(float(m) for m in maxima),
        rate=rate,
        constant=math.exp(log_const),
        verdict=rate > 1.0,
        probe_count=len(probes),
    )


def pull_stable_probe(
    spec: MapSpec, kappa: float, delta_grid, N: int
) -> float | None:
    """Largest grid radius whose pull-backs all stay below ``kappa``.

    Balls are centred on a grid of spacing ``delta/2`` covering the domain;
    returns None when no grid value passes.
    """
    if kappa <= 0:
        raise DomainError("size bound kappa must be positive")
    a, b = spec.domain_floats
    branches = branch_partition(spec)
    bvals = _branch_values(spec)
    for delta in sorted(delta_grid, reverse=True):
        centers = np.arange(a + delta / 2, b, delta / 2)
        ok = True
        for x in centers:
            comps = [(max(a, x - delta), min(b, x + delta))]
            for _ in range(N):
                comps = _pull_level(spec, branches, bvals, comps, _MERGE_TOL)
                if max(c[1] - c[0] for c in comps) >= kappa:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return float(delta)
    return None


# ---------------------------------------------------------------------------
# distortion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistortionProbe:
    T: tuple[float, float]
    J: tuple[float, float]
    steps: int
    tau: float
    ratio: float
    length_cap: float
    image_T: tuple[float, float]
    image_J: tuple[float, float]
    margins: tuple[float, float]


def _iterate_interval(spec: MapSpec, lo: float, hi: float, s: int):
    """Forward images of an interval assumed critical-point free along the
    way; raises :class:`HypothesisError` at the first step that is not."""
    crit_locs = [c.location for c in spec.critical_points]
    cur = (lo, hi)
    images = [cur]
    for k in range(s):
        clo, chi = cur
        for cl in crit_locs:
            if clo < cl < chi:
                raise HypothesisError(
                    f"iterate {k} of the interval contains the critical point {cl}"
                )
        u, v = spec.f(clo), spec.f(chi)
        cur = (min(u, v), max(u, v))
        images.append(cur)
    return images


def _log_deriv_sum(spec: MapSpec, x: np.ndarray, s: int) -> np.ndarray:
    total = np.zeros_like(x)
    cur = x.copy()
    for _ in range(s):
        total += np.log(np.abs(spec.df_batch(cur)))
        cur = spec.f_batch(cur)
    return total


def koebe_probe(
    spec: MapSpec,
    T: tuple[float, float],
    J: tuple[float, float],
    s: int,
    tau: float,
    length_cap: float | None = None,
) -> DistortionProbe:
    """Distortion ``sup |Df^s| / inf |Df^s|`` over ``J`` for a diffeomorphic
    iterate on ``T`` whose image of ``J`` sits ``tau``-well inside the image
    of ``T`` (margins measured against the inner image's length).

    The ratio is computed by adaptive grid refinement to about 1%.
    """
    if s < 1:
        raise DomainError("iterate count must be >= 1")
    if tau <= 0:
        raise DomainError("margin factor tau must be positive")
    a, b = spec.domain_floats
    tlo, thi = float(T[0]), float(T[1])
    jlo, jhi = float(J[0]), float(J[1])
    if not (a <= tlo < thi <= b):
        raise DomainError("outer interval not inside the domain")
    if not (tlo <= jlo < jhi <= thi):
        raise DomainError("inner interval not inside the outer interval")
    if length_cap is None:
        length_cap = spec.domain_length / 2
    images_T = _iterate_interval(spec, tlo, thi, s)
    images_J = _iterate_interval(spec, jlo, jhi, s)
    iT, iJ = images_T[-1], images_J[-1]
    if iT[1] - iT[0] > length_cap:
        raise HypothesisError(
            f"image length {iT[1] - iT[0]:.3g} exceeds the cap {length_cap:.3g}"
        )
    inner_len = iJ[1] - iJ[0]
    margins = (iJ[0] - iT[0], iT[1] - iJ[1])
    slack = 1e-9 * max(inner_len, 1e-300)
    if margins[0] < tau * inner_len - slack or margins[1] < tau * inner_len - slack:
        raise HypothesisError(
            f"inner image not {tau}-well inside: margins {margins}, "
            f"inner length {inner_len:.3g}"
        )

    # adaptive refinement of log |Df^s| over J
    xs = np.linspace(jlo, jhi, 33)
    vals = _log_deriv_sum(spec, xs, s)
    budget = 40_000
    while len(xs) < budget:
        i_max = int(np.argmax(vals))
        i_min = int(np.argmin(vals))
        new_pts = []
        for i in (i_max, i_min):
            for k in (i - 1, i):
                if 0 <= k < len(xs) - 1:
                    new_pts.append(0.5 * (xs[k] + xs[k + 1]))
        new = np.array(sorted(set(new_pts)))
        if len(new) == 0:
            break
        nv = _log_deriv_sum(spec, new, s)
        old_range = vals.max() - vals.min()
        xs = np.concatenate([xs, new])
        vals = np.concatenate([vals, nv])
        order = np.argsort(xs)
        xs, vals = xs[order], vals[order]
        if (vals.max() - vals.min()) - old_range < 1e-3:
            break
    ratio = math.exp(float(vals.max() - vals.min()))
    return DistortionProbe(
        T=(tlo, thi),
        J=(jlo, jhi),
        steps=s,
        tau=tau,
        ratio=ratio,
        length_cap=length_cap,
        image_T=iT,
        image_J=iJ,
        margins=margins,
    )


def sample_distortion_probes(
    spec: MapSpec,
    count: int,
    s_max: int,
    tau: float,
    seed: int = 0,
    radius_scale: float = 1 / 64,
) -> list[DistortionProbe]:
    """Sample diffeomorphic pull-backs and probe their distortion.

    Anchors are random backward orbits; pull-backs that engulf a critical
    point are discarded. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    a, b = spec.domain_floats
    length = b - a
    branches = branch_partition(spec)
    probes: list[DistortionProbe] = []
    attempts = 0
    while len(probes) < count and attempts < count * 60:
        attempts += 1
        s = int(rng.integers(1, s_max + 1))
        y = a + length * (0.1 + 0.8 * rng.random())
        rho = length * radius_scale * (0.5 + rng.random())
        # backward anchor path
        path = [y]
        ok = True
        for _ in range(s):
            w = path[-1]
            opts = []
            for br in branches:
                if br.image[0] <= w <= br.image[1]:
                    opts.append(_solve_on_branch(spec, br, w))
            if not opts:
                ok = False
                break
            path.append(opts[int(rng.integers(0, len(opts)))])
        if not ok:
            continue
        path.reverse()  # path[0] is the depth-s anchor, path[-1] = y
        tlo, thi = max(a, y - rho), min(b, y + rho)
        rho_in = rho / (1 + 2 * tau) * 0.999
        jlo, jhi = max(a, y - rho_in), min(b, y + rho_in)
        try:
            T = (tlo, thi)
            Jv = (jlo, jhi)
            for k in range(s, 0, -1):
                T = _component_around_float(spec, T[0], T[1], path[k - 1])
                Jv = _component_around_float(spec, Jv[0], Jv[1], path[k - 1])
            probe = koebe_probe(spec, T, Jv, s, tau)
        except (HypothesisError, DomainError, ValueError):
            continue
        probes.append(probe)
    return probes


# ---------------------------------------------------------------------------
# quasi-chain certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainConstants:
    """Auxiliary constants feeding the block bounds of a chain certificate."""

    rate: float              # certified shrinking rate (> 1)
    shrink_constant: float   # pointwise shrink bound constant (> 2)
    koebe_constant: float    # distortion bound at margin 1/2
    nonflat_L: float
    nonflat_ell: float
    nonflat_radius: float
    stability_radius: float | None  # radius keeping all pull-backs small
    shrink_radius: float     # half the shrink fit's length cap
    distortion_length_cap: float
    combined_radius: float   # min of the three radii above
    reset_penalty_strong: float  # per-reset log penalty, +2*ell variant
    reset_penalty_weak: float    # per-reset log penalty, +1+ell variant
    return_budget_strong: float  # log(rate) / (2 * penalty)
    return_budget_weak: float


@lru_cache(maxsize=64)
def estimate_chain_constants(
    spec: MapSpec,
    depth: int = 9,
    seed: int = 0,
) -> ChainConstants:
    """Estimate the auxiliary constants from shrink, distortion and
    non-flatness probes (deterministic for a fixed seed)."""
    length = spec.domain_length
    a, _ = spec.domain_floats
    delta = min(length / 8, 0.1)
    centers = np.linspace(a + delta, a + length - delta, 8)
    probes = [(x - delta / 2, x + delta / 2) for x in centers]
    shrink = esc_fit(spec, delta, depth, probes)
    rate = shrink.rate
    shrink_constant = max(shrink.constant, 2.0 + 1e-9)
    dist = sample_distortion_probes(spec, 24, min(depth, 10), 0.5, seed=seed)
    koebe_constant = max((p.ratio for p in dist), default=2.0) * 1.05
    ell = max(float(c.order) for c in spec.critical_points)
    L = max(c.nonflat_L for c in spec.critical_points)
    kappa0 = min(c.nonflat_radius for c in spec.critical_points)
    grid = [length / 8, length / 16, length / 32, length / 64]
    stability_radius = pull_stable_probe(spec, kappa0, grid, min(depth, 8))
    shrink_radius = delta / 2
    cap = length / 2
    candidates = [shrink_radius, cap]
    if stability_radius is not None:
        candidates.append(stability_radius)
    combined = min(candidates)
    log_pref = math.log(2.0 / (koebe_constant * shrink_constant))
    penalty_strong = log_pref / math.log(combined) + math.log(rate * L) + 2 * ell
    penalty_weak = log_pref / math.log(combined) + math.log(rate * L) + 1 + ell
    return ChainConstants(
        rate=rate,
        shrink_constant=shrink_constant,
        koebe_constant=koebe_constant,
        nonflat_L=L,
        nonflat_ell=ell,
        nonflat_radius=kappa0,
        stability_radius=stability_radius,
        shrink_radius=shrink_radius,
        distortion_length_cap=cap,
        combined_radius=combined,
        reset_penalty_strong=penalty_strong,
        reset_penalty_weak=penalty_weak,
        return_budget_strong=math.log(rate) / (2 * penalty_strong)
        if penalty_strong > 0
        else math.inf,
        return_budget_weak=math.log(rate) / (2 * penalty_weak)
        if penalty_weak > 0
        else math.inf,
    )


@dataclass(frozen=True)
class PieceBound:
    """One verified piece of the assembled derivative lower bound."""

    kind: str            # "block" or "reset"
    start: int           # first orbit index covered by the piece
    length: int
    model_log: float
    actual_log: float
    verified: bool


@dataclass(frozen=True)
class QuasiChainCertificate:
    """Reset decomposition of a backward chain with a derivative bound.

    The chain follows three rules: start from the ball of radius ``eta``
    around the endpoint; pull back one step to the component around the
    previous orbit point; whenever that component contains a critical
    point, restart from the ball of radius ``eta`` around the orbit point
    (a reset). The assembled bound multiplies per-block diffeomorphism
    bounds with per-reset non-flatness bounds; each piece is verified
    directly against the computed derivative factors, so
    ``hypotheses_verified`` implies ``bound <= actual`` arithmetically.
    """

    map_label: str
    base_point: float
    horizon: int
    radius: float
    reset_times: tuple[int, ...]
    reset_count: int
    start_reset: bool
    pieces: tuple[PieceBound, ...]
    prefactor: float
    log_bound: float
    log_actual: float
    bound: float
    actual: float
    hypotheses_verified: bool
    radius_below_inv_e: bool
    constants: ChainConstants
    diameters_log2: tuple[float, ...]
    clipped_steps: tuple[int, ...]


def quasi_chain(
    spec: MapSpec,
    v,
    n: int,
    eta: float,
    constants: ChainConstants | None = None,
    policy: PrecisionPolicy | None = None,
) -> QuasiChainCertificate:
    """Build the reset chain for the orbit of ``v`` and certify the bound."""
    if eta <= 0:
        raise DomainError("reset radius must be positive")
    if n < 1:
        raise DomainError("horizon must be >= 1")
    policy = _chain_policy(policy)
    if constants is None:
        constants = estimate_chain_constants(spec)
    orbit = point_orbit(spec, v, n + 1, policy)
    prec = orbit.precision_bits
    a_r = raw_dn(spec.domain[0], prec)
    b_r = raw_up(spec.domain[1], prec)
    eta_raw = from_float(eta)
    crit_ivs = _crit_ivals(spec)

    def ball(k: int) -> tuple[Ival, bool]:
        center = orbit.points[k]._mpf_
        iv = Ival(
            mpf_sub(center, eta_raw, prec, "d"),
            mpf_add(center, eta_raw, prec, "u"),
        )
        was_clipped = mpf_lt(iv.a, a_r) or mpf_gt(iv.b, b_r)
        return iv.clip(a_r, b_r), was_clipped

    chain: dict[int, Ival] = {}
    clipped_steps = []
    cur, clipped0 = ball(n)
    if clipped0:
        clipped_steps.append(n)
    chain[n] = cur
    reset_times = []
    start_reset = False
    per_step = math.log2(max(derivative_sup_estimate(spec), 2.0))
    depth_since_reset = 0
    for k in range(n - 1, -1, -1):
        depth_since_reset += 1
        step_prec = min(prec, int(depth_since_reset * per_step) + 128)
        pulled = _component_around_raw(spec, cur, orbit.points[k]._mpf_, step_prec)
        if any(pulled.intersects(ci) for ci in crit_ivs):
            if k >= 1:
                reset_times.append(k)
            else:
                start_reset = True
            cur, was_clipped = ball(k)
            if was_clipped:
                clipped_steps.append(k)
            depth_since_reset = 0
        else:
            cur = pulled
        chain[k] = cur

    m = len(reset_times)
    logf = orbit.log_factors()
    c1 = 2.0 * eta / (constants.koebe_constant * constants.shrink_constant)
    log_c1 = math.log(c1) if c1 > 0 else -math.inf
    log_rate = math.log(constants.rate)
    ell = constants.nonflat_ell
    logL = math.log(constants.nonflat_L)
    crit_locs = [c.midpoint_fraction() for c in spec.critical_points]

    def crit_distance_log(k: int) -> float:
        p = orbit.points[k]._mpf_
        best = math.inf
        for loc in crit_locs:
            d = abs(to_float(mpf_sub(p, raw_dn(loc, prec), prec, "n")))
            best = min(best, d)
        return math.log(best) if best > 0 else -math.inf

    pieces: list[PieceBound] = []
    boundaries = [n] + reset_times  # n_0 = n > n_1 > ... > n_m
    for i in range(1, m + 1):
        hi_b, lo_b = boundaries[i - 1], boundaries[i]
        length = hi_b - lo_b - 1
        actual = float(np.sum(logf[lo_b + 1 : hi_b]))
        model = log_c1 + length * log_rate
        pieces.append(
            PieceBound(
                kind="block",
                start=lo_b + 1,
                length=length,
                model_log=model,
                actual_log=actual,
                verified=model <= actual + 1e-12,
            )
        )
        d_log = crit_distance_log(lo_b)
        r_actual = float(logf[lo_b])
        r_model = ell * d_log - logL
        pieces.append(
            PieceBound(
                kind="reset",
                start=lo_b,
                length=1,
                model_log=r_model,
                actual_log=r_actual,
                verified=r_model <= r_actual + 1e-12,
            )
        )
    n_last = reset_times[-1] if reset_times else n
    final_len = n_last
    actual = float(np.sum(logf[:n_last]))
    model = log_c1 + final_len * log_rate
    pieces.append(
        PieceBound(
            kind="block",
            start=0,
            length=final_len,
            model_log=model,
            actual_log=actual,
            verified=model <= actual + 1e-12,
        )
    )

    log_bound = float(sum(p.model_log for p in pieces))
    log_actual = float(np.sum(logf[:n]))
    radius_ok = eta < math.exp(-1)
    verified = (
        all(p.verified for p in pieces)
        and radius_ok
        and 0.0 < c1 < 1.0
        and not start_reset
    )
    diam_order = [chain[n - i] for i in range(n + 1)]
    return QuasiChainCertificate(
        map_label=spec.label,
        base_point=float(orbit.points[0]),
        horizon=n,
        radius=eta,
        reset_times=tuple(reset_times),
        reset_count=m,
        start_reset=start_reset,
        pieces=tuple(pieces),
        prefactor=c1,
        log_bound=log_bound,
        log_actual=log_actual,
        bound=math.exp(log_bound) if log_bound < 700 else math.inf,
        actual=math.exp(log_actual) if log_actual < 700 else math.inf,
        hypotheses_verified=verified,
        radius_below_inv_e=radius_ok,
        constants=constants,
        diameters_log2=tuple(_log2_width(iv) for iv in diam_order),
        clipped_steps=tuple(sorted(clipped_steps)),
    )


# ---------------------------------------------------------------------------
# shrink-rate to derivative-growth certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShrinkCertificate:
    """Derivative bound from a disjoint-from-critical backward chain."""

    map_label: str
    horizon: int
    extra_depth: int           # m, the padding depth from the recurrence data
    w0_diameter_log2: float
    log_bound: float
    log_actual: float
    bound: float
    actual: float
    diffeo_verified: bool
    failed_indices: tuple[int, ...]
    distortion_used: float
    implied_prefactor: float | None  # bound / (rate**(n+m) * M**-m)


def shrink_to_ce_bound(
    spec: MapSpec,
    v,
    n: int,
    C_alpha: float,
    alpha_rec: float,
    lam: float,
    M: float,
    delta0: float,
    policy: PrecisionPolicy | None = None,
) -> ShrinkCertificate:
    """Certify ``|Df^n(v)|`` from below via the chain of a shrunken ball.

    The ball radius is ``delta0 * M**-m`` with m the smallest integer whose
    shrink bound ``lam**-m`` falls below ``C_alpha * exp(-alpha_rec*(n+1))``;
    when every chain component avoids the critical set, the n-th iterate is
    a diffeomorphism onto the ball and the mean value theorem with a
    distortion allowance yields the bound.
    """
    if not lam > 1:
        raise DomainError("shrink rate must exceed 1")
    if n < 1:
        raise DomainError("horizon must be >= 1")
    if C_alpha <= 0 or alpha_rec <= 0 or delta0 <= 0:
        raise DomainError("recurrence constants must be positive")
    sup_est = derivative_sup_estimate(spec)
    if M < sup_est / 1.05 * 0.999:
        raise DomainError(
            f"M={M} is below the grid estimate {sup_est / 1.05:.6g} of sup |Df|"
        )
    policy = _chain_policy(policy)
    log_target = math.log(C_alpha) - alpha_rec * (n + 1)
    m = max(0, math.ceil(-log_target / math.log(lam)))
    while lam**-m > math.exp(log_target) and m < 10**6:
        m += 1

    extra_bits = int(math.ceil(m * math.log2(M))) + 64
    orbit = point_orbit(spec, v, n + 1, policy)
    prec = orbit.precision_bits + extra_bits
    radius = Fraction(delta0) * Fraction(M) ** (-m)
    a_r = raw_dn(spec.domain[0], prec)
    b_r = raw_up(spec.domain[1], prec)
    center = orbit.points[n]._mpf_
    r_dn = raw_from_fraction(radius, prec, "d")
    ball = Ival(
        mpf_sub(center, r_dn, prec, "d"), mpf_add(center, r_dn, prec, "u")
    )
    ball = ball.clip(a_r, b_r)
    crit_ivs = _crit_ivals(spec)
    chain = [ball]
    cur = ball
    failed = []
    if any(ball.intersects(ci) for ci in crit_ivs):
        failed.append(n)
    for j in range(n - 1, -1, -1):
        cur = _component_around_raw(spec, cur, orbit.points[j]._mpf_, prec)
        chain.append(cur)
        if any(cur.intersects(ci) for ci in crit_ivs):
            failed.append(j)
    w0 = chain[-1]
    w0_log2 = _log2_width(w0)
    log_actual = float(np.sum(orbit.log_factors()[:n]))
    if failed:
        return ShrinkCertificate(
            map_label=spec.label,
            horizon=n,
            extra_depth=m,
            w0_diameter_log2=w0_log2,
            log_bound=-math.inf,
            log_actual=log_actual,
            bound=0.0,
            actual=math.exp(log_actual) if log_actual < 700 else math.inf,
            diffeo_verified=False,
            failed_indices=tuple(sorted(failed)),
            distortion_used=math.nan,
            implied_prefactor=None,
        )
    # distortion allowance over W_0 from sampled |Df^n|
    samples = [w0.a, w0.mid(prec), w0.b]
    logs = []
    for s_raw in samples:
        total = 0.0
        w = s_raw
        for _ in range(n):
            d = spec.df_ival(Ival(w, w), prec).abs().mid(prec)
            total += math.log2(int(d[1])) + d[2] if d != fzero else -math.inf
            w = spec.f_ival(Ival(w, w), prec).mid(prec)
        logs.append(total * math.log(2.0))
    ratio = math.exp(max(logs) - min(logs)) * 1.10
    ball_len_log2 = _log2_width(chain[0])
    log_bound = (
        -math.log(ratio)
        + ball_len_log2 * math.log(2.0)
        - w0_log2 * math.log(2.0)
    )
    implied = math.exp(
        log_bound - ((n + m) * math.log(lam) - m * math.log(M))
    )
    return ShrinkCertificate(
        map_label=spec.label,
        horizon=n,
        extra_depth=m,
        w0_diameter_log2=w0_log2,
        log_bound=log_bound,
        log_actual=log_actual,
        bound=math.exp(log_bound) if log_bound < 700 else math.inf,
        actual=math.exp(log_actual) if log_actual < 700 else math.inf,
        diffeo_verified=True,
        failed_indices=(),
        distortion_used=ratio,
        implied_prefactor=implied,
    )


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def write_chain_csv(chain: ComponentChain, path) -> None:
    """Depth-indexed rows (depth, left, right, flagged) for a chain."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["depth", "left", "right", "flagged"])
        for i, iv in enumerate(chain.chain):
            lo, hi = iv.to_floats()
            w.writerow([i, repr(lo), repr(hi), int(chain.critical_flags[i])])
