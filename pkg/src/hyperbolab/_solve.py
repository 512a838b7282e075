"""Monotone equation solving at three speed tiers.

* float tier: bracketed bisection+Newton for tree bookkeeping at double
  precision;
* batch tier: vectorised bisection+Newton over numpy arrays (preimage
  trees, conjugacy tables);
* certified tier: Newton with interval sign verification on raw mpf
  endpoints, used wherever enclosures feed certificates.

All solvers assume the target function is continuous and strictly monotone
on the given bracket; near-critical targets (derivative approaching zero at
an endpoint) are handled by the bisection fallback.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from mpmath.libmp import (
    from_float,
    mpf_add,
    mpf_div,
    mpf_gt,
    mpf_lt,
    mpf_shift,
    mpf_sub,
    to_float,
)

from .errors import PrecisionError
from .intervals import Ival, raw_dn, raw_up

_FLOAT_TOL = 4e-16


def solve_monotone_float(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    target: float,
    df: Callable[[float], float] | None = None,
    max_iter: int = 200,
) -> float:
    """Solve ``f(x) = target`` for x in ``[lo, hi]`` with f monotone."""
    flo = f(lo)
    fhi = f(hi)
    if flo == target:
        return lo
    if fhi == target:
        return hi
    increasing = fhi > flo
    if not (min(flo, fhi) <= target <= max(flo, fhi)):
        raise ValueError("target not bracketed by f(lo), f(hi)")
    x = lo + (hi - lo) * 0.5
    for _ in range(max_iter):
        if hi - lo <= _FLOAT_TOL * max(1.0, abs(lo), abs(hi)):
            break
        fx = f(x)
        if fx == target:
            return x
        if (fx < target) == increasing:
            lo = x
        else:
            hi = x
        x_new = None
        if df is not None:
            d = df(x)
            if d != 0.0:
                cand = x - (fx - target) / d
                if lo < cand < hi:
                    x_new = cand
        x = x_new if x_new is not None else 0.5 * (lo + hi)
    return 0.5 * (lo + hi)


def solve_monotone_batch(
    f: Callable[[np.ndarray], np.ndarray],
    df: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    targets: np.ndarray,
    increasing: bool,
    n_bisect: int = 30,
    n_newton: int = 12,
) -> np.ndarray:
    """Vectorised solve of ``f(x) = targets`` on a monotone branch.

    Targets must lie in the branch image (clamped silently at the float
    level; callers pre-intersect). Bisection does the heavy lifting so the
    final Newton polish cannot be derailed near critical endpoints.
    """
    targets = np.asarray(targets, dtype=float)
    los = np.full_like(targets, lo)
    his = np.full_like(targets, hi)
    for _ in range(n_bisect):
        mids = 0.5 * (los + his)
        fm = f(mids)
        go_up = (fm < targets) if increasing else (fm > targets)
        los = np.where(go_up, mids, los)
        his = np.where(go_up, his, mids)
    x = 0.5 * (los + his)
    for _ in range(n_newton):
        fx = f(x)
        d = df(x)
        safe = np.abs(d) > 1e-300
        step = np.where(safe, (fx - targets) / np.where(safe, d, 1.0), 0.0)
        x = np.clip(x - step, los, his)
    return x


def solve_monotone_certified(
    eval_ival: Callable[[Ival, int], Ival],
    lo,
    hi,
    target: Ival,
    prec: int,
    deriv_float: Callable[[float], float] | None = None,
    eval_float: Callable[[float], float] | None = None,
) -> Ival:
    """Certified bracket for the solution of ``f(x) in target``.

    ``eval_ival(x, prec)`` must enclose f over the interval x. The returned
    interval is guaranteed to contain every x in ``[lo, hi]`` with
    ``f(x)`` in ``target``; its width is driven down to roughly
    ``2**-prec`` absolute (plus the image of the target's own width), and a
    :class:`PrecisionError` is raised when the bracket stops improving above
    ``2**(-prec//2)``.
    """
    wp = 2 * prec + 64
    lo_r = raw_dn(lo, wp)
    hi_r = raw_up(hi, wp)
    f_lo = eval_ival(Ival(lo_r, lo_r), wp)
    f_hi = eval_ival(Ival(hi_r, hi_r), wp)
    if f_lo.intersects(target) and f_hi.intersects(target):
        # whole bracket maps inside the target's uncertainty
        return Ival(lo_r, hi_r)
    if f_lo.intersects(target):
        increasing = f_hi.strictly_above(target.b)
    elif f_hi.intersects(target):
        increasing = f_lo.strictly_below(target.a)
    else:
        below_lo = f_lo.strictly_below(target.a)
        below_hi = f_hi.strictly_below(target.a)
        if below_lo == below_hi:
            raise ValueError("target not bracketed on the given interval")
        increasing = below_lo

    width_goal = mpf_shift(from_float(1.0), -prec)
    cur_lo, cur_hi = lo_r, hi_r

    def classify_val(fx: Ival) -> int:
        """-1: f(x) certainly on the lo side, +1: hi side, 0: overlaps."""
        if fx.strictly_below(target.a):
            return -1 if increasing else 1
        if fx.strictly_above(target.b):
            return 1 if increasing else -1
        return 0

    def classify(x_raw) -> int:
        return classify_val(eval_ival(Ival(x_raw, x_raw), wp))

    # cheap float seed
    seed = None
    if eval_float is not None:
        flo, fhi = to_float(lo_r), to_float(hi_r)
        tmid = to_float(target.mid(53))
        try:
            seed = solve_monotone_float(eval_float, flo, fhi, tmid, df=deriv_float)
        except ValueError:
            seed = None

    x = from_float(seed) if seed is not None else None
    target_mid = target.mid(wp)
    for _ in range(4 * prec + 64):
        w = mpf_sub(cur_hi, cur_lo, 53, "u")
        if not mpf_gt(w, width_goal):
            break
        if x is None or not (mpf_lt(cur_lo, x) and mpf_lt(x, cur_hi)):
            x = mpf_shift(mpf_add(cur_lo, cur_hi, wp, "n"), -1)
        fx = eval_ival(Ival(x, x), wp)
        side = classify_val(fx)
        if side < 0:
            cur_lo = x
        elif side > 0:
            cur_hi = x
        else:
            # f(x) overlaps the target: x is within solver resolution of a
            # solution; shrink symmetrically around it as far as certainty
            # allows, then stop.
            return _shrink_around(
                classify, cur_lo, cur_hi, x, wp, width_goal, deriv_float
            )
        # Newton proposal for the next iterate, reusing the evaluation
        x_new = None
        if deriv_float is not None:
            d = deriv_float(to_float(x))
            if d != 0.0 and math.isfinite(d):
                resid = mpf_sub(fx.mid(wp), target_mid, wp, "n")
                step = mpf_div(resid, from_float(d), wp, "n")
                cand = mpf_sub(x, step, wp, "n")
                if mpf_lt(cur_lo, cand) and mpf_lt(cand, cur_hi):
                    x_new = cand
        x = x_new
    else:
        half_goal = mpf_shift(from_float(1.0), -(prec // 2))
        if mpf_gt(mpf_sub(cur_hi, cur_lo, 53, "u"), half_goal):
            raise PrecisionError(
                "monotone solve stalled above the requested bracket width",
                partial=Ival(cur_lo, cur_hi),
            )
    return Ival(cur_lo, cur_hi)


def _shrink_around(classify, cur_lo, cur_hi, x, wp, width_goal, deriv_float) -> Ival:
    lo, hi = cur_lo, cur_hi
    # fast path: bracket x by +- a derivative-scaled slack, verified by two
    # certified sign tests per attempt
    d = deriv_float(to_float(x)) if deriv_float is not None else 0.0
    if d != 0.0 and math.isfinite(d):
        slack = mpf_shift(width_goal, -1)
        for _ in range(6):
            c_lo = mpf_sub(x, slack, wp, "d")
            c_hi = mpf_add(x, slack, wp, "u")
            lo_ok = not mpf_gt(c_lo, lo) or classify(c_lo) < 0
            hi_ok = not mpf_lt(c_hi, hi) or classify(c_hi) > 0
            if lo_ok and hi_ok:
                if mpf_gt(c_lo, lo):
                    lo = c_lo
                if mpf_lt(c_hi, hi):
                    hi = c_hi
                return Ival(lo, hi)
            slack = mpf_shift(slack, 2)
    for _ in range(80):
        w = mpf_sub(hi, lo, 53, "u")
        if not mpf_gt(w, width_goal):
            break
        moved = False
        m1 = mpf_shift(mpf_add(lo, x, wp, "n"), -1)
        if mpf_lt(lo, m1) and mpf_lt(m1, x) and classify(m1) < 0:
            lo = m1
            moved = True
        m2 = mpf_shift(mpf_add(x, hi, wp, "n"), -1)
        if mpf_lt(x, m2) and mpf_lt(m2, hi) and classify(m2) > 0:
            hi = m2
            moved = True
        if not moved:
            break
    return Ival(lo, hi)
