"""Growth and recurrence condition estimators plus closed-form transport.

The estimators fit lower-bound models to orbit data:

* derivative growth ``|Df^n(f(c))| >= C * lam**n`` (exponential rate fitted
  on the log cumulative product, constant chosen so the bound binds);
* recurrence models for the distance ``d_n`` from the critical orbit to the
  critical set: stretched-exponential ``C*exp(-n**beta)``, exponential
  ``C*exp(-beta*n)`` and polynomial ``C*n**-beta`` lower bounds, fitted on
  the running minima of the series (the binding subsequence);
* the time-averaged ``-log d`` statistic over close returns.

The transport section evaluates the closed-form formulas that push these
bounds through a bi-Hoelder conjugacy, and the threshold below which an
exponential recurrence exponent forces derivative growth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .errors import DomainError, InsufficientDataError
from .mapkit import MapSpec, CriticalPoint
from .orbit import OrbitRecord, PrecisionPolicy, critical_orbit

__all__ = [
    "CEFit",
    "RecurrenceFit",
    "RecurrenceModel",
    "SlowRecurrenceStat",
    "TransportParams",
    "ce_fit",
    "ce_threshold_beta0",
    "recurrence_fit",
    "recurrence_series",
    "ser_exponent_after_transport",
    "slow_recurrence_stat",
    "transport_recurrence_bound",
    "transport_slow_recurrence_params",
]

_GROWTH_TOL = 1e-3  # relative margin for "rate above 1" verdicts


class RecurrenceModel(str, Enum):
    SER = "ser"  # d_n >= C * exp(-n**beta)
    ER = "er"    # d_n >= C * exp(-beta*n)
    PR = "pr"    # d_n >= C * n**-beta


@dataclass(frozen=True)
class CEFit:
    """Fitted exponential lower bound on ``|Df^n(f(c))|``."""

    rate: float          # lam-hat, clamped to >= 1
    constant: float      # C-hat, tightest constant making the bound bind
    residuals: tuple[float, ...]
    n_range: tuple[int, int]
    verdict: bool
    critical_hit: bool = False


@dataclass(frozen=True)
class RecurrenceFit:
    model: RecurrenceModel
    exponent: float | None
    constant: float | None
    residuals: tuple[float, ...]
    verdict: bool
    record_indices: tuple[int, ...] = field(default=())
    zero_hit: bool = False


@dataclass(frozen=True)
class SlowRecurrenceStat:
    radius: float
    horizon: int
    value: float
    hit_count: int
    violated: bool = False  # a hit at distance exactly zero


@dataclass(frozen=True)
class TransportParams:
    """Hoelder data of a conjugacy, plus the source bound's constants."""

    K: float
    alpha: float
    C: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if not self.K > 0:
            raise DomainError("Hoelder constant K must be positive")
        if not 0 < self.alpha <= 1:
            raise DomainError("Hoelder exponent alpha must lie in (0, 1]")


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------


def ce_fit(orbit: OrbitRecord, tolerance: float = _GROWTH_TOL) -> CEFit:
    """Fit ``|Df^n| >= C * lam**n`` to the cumulative derivative product.

    The rate comes from a least-squares slope of the log product over the
    tail half of the orbit; the constant is the tightest one making the
    bound hold at every sampled n. A zero derivative factor (the orbit hits
    a critical point) yields a failed verdict, not an error.
    """
    n = len(orbit)
    if n < 16:
        raise InsufficientDataError("growth fit needs an orbit of length >= 16")
    logf = orbit.log_factors()
    if np.any(np.isneginf(logf)):
        return CEFit(
            rate=1.0,
            constant=0.0,
            residuals=(),
            n_range=(1, n),
            verdict=False,
            critical_hit=True,
        )
    cum = np.cumsum(logf)  # cum[k] = log |Df^(k+1)(v...)|
    ns = np.arange(1, n + 1, dtype=float)
    tail = slice(n // 2, n)
    slope, intercept = np.polyfit(ns[tail], cum[tail], 1)
    log_rate = max(slope, 0.0)
    log_const = float(np.min(cum - log_rate * ns))
    resid = cum[tail] - (slope * ns[tail] + intercept)
    rate = math.exp(log_rate)
    verdict = rate > 1.0 + tolerance
    return CEFit(
        rate=rate,
        constant=math.exp(log_const),
        residuals=tuple(float(r) for r in resid),
        n_range=(n // 2 + 1, n),
        verdict=verdict,
    )


def recurrence_series(
    spec: MapSpec,
    c: CriticalPoint,
    n: int,
    policy: PrecisionPolicy = PrecisionPolicy(),
    exact: bool = False,
) -> list[float]:
    """Distances ``d_k = min_{c'} |f^k(c) - c'|`` for k = 1..n.

    ``f^k(c)`` is entry k-1 of the critical-value orbit. An exact zero is
    reported as ``0.0`` (the orbit lands on a critical point).
    """
    rec = critical_orbit(spec, c, n, policy, exact=exact)
    crit_locs = [cp.midpoint_fraction() for cp in spec.critical_points]
    out = []
    for k in range(n):
        p = rec.points[k]
        if rec.exact:
            d = min(abs(p - loc) for loc in crit_locs)
            out.append(float(d))
        else:
            pf = float(p)
            out.append(min(abs(pf - float(loc)) for loc in crit_locs))
    return out


def _record_minima(series: np.ndarray) -> np.ndarray:
    """Indices where the series ties or improves its running minimum."""
    run = np.minimum.accumulate(series)
    idx = np.flatnonzero(series <= run)
    return idx


def recurrence_fit(series, model: RecurrenceModel | str) -> RecurrenceFit:
    """Fit one recurrence model's lower bound to a distance series.

    The exponent comes from least squares in the model's linearising
    coordinates, restricted to the running minima (lower bounds are
    constrained only by binding samples); the constant is the tightest one
    valid on the whole series.
    """
    model = RecurrenceModel(model)
    d = np.asarray(series, dtype=float)
    if len(d) < 16:
        raise InsufficientDataError("recurrence fit needs a series of length >= 16")
    if np.any(d == 0.0):
        return RecurrenceFit(
            model=model, exponent=None, constant=None, residuals=(),
            verdict=False, zero_hit=True,
        )
    ns = np.arange(1, len(d) + 1, dtype=float)
    rec_idx = _record_minima(d)
    if model is RecurrenceModel.SER:
        # log(-log d) needs -log d > 0
        rec_idx = rec_idx[d[rec_idx] < 1.0]
    if len(rec_idx) < 4:
        raise InsufficientDataError(
            f"only {len(rec_idx)} record minima; need at least 4"
        )
    nr = ns[rec_idx]
    dr = d[rec_idx]
    neglog = -np.log(dr)
    if model is RecurrenceModel.SER:
        x, y = np.log(nr), np.log(neglog)
    elif model is RecurrenceModel.ER:
        x, y = nr, neglog
    else:
        x, y = np.log(nr), neglog
    slope, intercept = np.polyfit(x, y, 1)
    beta = float(slope)
    resid = y - (slope * x + intercept)
    # tightest constant over the full series, in log space
    logd = np.log(d)
    if model is RecurrenceModel.SER:
        log_const = float(np.min(logd + np.power(ns, beta)))
    elif model is RecurrenceModel.ER:
        log_const = float(np.min(logd + beta * ns))
    else:
        log_const = float(np.min(logd + beta * np.log(ns)))
    return RecurrenceFit(
        model=model,
        exponent=beta,
        constant=math.exp(log_const),
        residuals=tuple(float(r) for r in resid),
        verdict=True,
        record_indices=tuple(int(i) + 1 for i in rec_idx),
    )


def slow_recurrence_stat(series, radius: float, n: int) -> SlowRecurrenceStat:
    """Average of ``-log d_i`` over the first n entries with ``d_i < radius``.

    The radius is restricted to (0, 1] so that every summand is positive
    and the statistic is monotone under shrinking the radius.
    """
    if not 0 < radius <= 1:
        raise DomainError("radius must lie in (0, 1]")
    d = np.asarray(series, dtype=float)[:n]
    if len(d) < n:
        raise DomainError(f"series has {len(d)} entries, horizon is {n}")
    hits = d < radius
    hit_count = int(np.count_nonzero(hits))
    if np.any(d[hits] == 0.0):
        return SlowRecurrenceStat(
            radius=radius, horizon=n, value=math.inf,
            hit_count=hit_count, violated=True,
        )
    value = float(np.sum(-np.log(d[hits])) / n) if hit_count else 0.0
    return SlowRecurrenceStat(radius=radius, horizon=n, value=value, hit_count=hit_count)


# ---------------------------------------------------------------------------
# closed-form transport
# ---------------------------------------------------------------------------


def ce_threshold_beta0(lam: float, M: float) -> float:
    """``(log lam)**2 / (2 (log M - log lam))`` for ``1 < lam < M``."""
    if not lam > 1:
        raise DomainError("growth rate must exceed 1")
    if not M > lam:
        raise DomainError("derivative sup must exceed the growth rate")
    return math.log(lam) ** 2 / (2.0 * (math.log(M) - math.log(lam)))


def transport_recurrence_bound(
    params: TransportParams, n: int, model: RecurrenceModel | str
) -> float:
    """Lower bound on the conjugate map's distance series at time n.

    With source bound ``d_n >= C * shape(n)`` and a conjugacy whose inverse
    is (K, alpha)-Hoelder, the image series obeys
    ``(C/K)**(1/alpha) * shape(n)**(1/alpha)``; identity data (K=1,
    alpha=1) returns the source bound unchanged.
    """
    model = RecurrenceModel(model)
    if n < 1:
        raise DomainError("time index must be >= 1")
    if params.C is None or params.beta is None:
        raise DomainError("transport needs the source constants (C, beta)")
    pref = (params.C / params.K) ** (1.0 / params.alpha)
    if model is RecurrenceModel.SER:
        return pref * math.exp(-(n**params.beta) / params.alpha)
    if model is RecurrenceModel.ER:
        return pref * math.exp(-params.beta * n / params.alpha)
    return pref * float(n) ** (-params.beta / params.alpha)


def transport_slow_recurrence_params(
    eps: float, K: float, alpha: float, delta1: float
) -> tuple[float, float]:
    """Map a target average ``eps`` and radius ``delta1`` through (K, alpha).

    Returns ``(eps_prime, delta0) = (alpha*eps/(1+log K), (delta1/K)**(1/alpha))``:
    if the source statistic stays below ``eps_prime`` at radius ``delta1``,
    the image statistic stays below ``eps`` at radii up to ``delta0``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    if not 0 < delta1 < math.exp(-1):
        raise DomainError("delta1 must lie in (0, 1/e)")
    if not K >= 1:
        raise DomainError("Hoelder constant K must be >= 1")
    if not 0 < alpha <= 1:
        raise DomainError("Hoelder exponent alpha must lie in (0, 1]")
    eps_prime = alpha * eps / (1.0 + math.log(K))
    delta0 = (delta1 / K) ** (1.0 / alpha)
    return eps_prime, delta0


def ser_exponent_after_transport(beta: float, alpha: float) -> float | None:
    """Exponent for the transported stretched-exponential bound.

    The transported bound has shape ``exp(-n**beta / alpha)``; any exponent
    ``beta'`` in ``(beta, 1)`` dominates it for large n. The convention here
    picks the midpoint of ``beta`` and ``min(1, beta/alpha)`` when that lies
    in ``(beta, 1)``, else reports None (keep the raw transported form).
    """
    if not 0 < beta < 1:
        raise DomainError("source exponent must lie in (0, 1)")
    if not 0 < alpha <= 1:
        raise DomainError("Hoelder exponent alpha must lie in (0, 1]")
    cand = 0.5 * (beta + min(1.0, beta / alpha))
    if beta < cand < 1.0:
        return cand
    return None
