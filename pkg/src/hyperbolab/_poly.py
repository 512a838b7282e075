"""Exact polynomial arithmetic over Fraction coefficients.

Coefficients are ascending-power tuples. Real-root isolation uses Sturm
chains, so roots of any multiplicity are located reliably; refinement is
plain rational bisection with an exact-zero shortcut (dyadic midpoints hit
rational roots such as 1/2 exactly).
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

_ZERO = Fraction(0)


def trim(coeffs) -> tuple[Fraction, ...]:
    cs = [Fraction(c) for c in coeffs]
    while cs and cs[-1] == 0:
        cs.pop()
    return tuple(cs)


def degree(coeffs) -> int:
    return len(coeffs) - 1


def evaluate(coeffs, x: Fraction) -> Fraction:
    acc = _ZERO
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def derivative(coeffs) -> tuple[Fraction, ...]:
    return tuple(Fraction(k) * coeffs[k] for k in range(1, len(coeffs)))


def compose(outer, inner) -> tuple[Fraction, ...]:
    """outer(inner(x)); used only by small fixtures and tests."""
    acc: tuple[Fraction, ...] = ()
    for c in reversed(outer):
        acc = add(mul(acc, inner), (Fraction(c),))
    return trim(acc)


def add(p, q) -> tuple[Fraction, ...]:
    n = max(len(p), len(q))
    return trim(
        (p[k] if k < len(p) else _ZERO) + (q[k] if k < len(q) else _ZERO)
        for k in range(n)
    )


def mul(p, q) -> tuple[Fraction, ...]:
    if not p or not q:
        return ()
    out = [_ZERO] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return trim(out)


def _divmod(num, den):
    num = list(num)
    den = trim(den)
    if not den:
        raise ZeroDivisionError("polynomial division by zero")
    q = [_ZERO] * max(0, len(num) - len(den) + 1)
    lead = den[-1]
    for k in range(len(num) - len(den), -1, -1):
        f = num[k + len(den) - 1] / lead
        q[k] = f
        if f != 0:
            for j, d in enumerate(den):
                num[k + j] -= f * d
    return trim(q), trim(num[: len(den) - 1])


def _monic(p):
    if not p:
        return p
    lead = p[-1]
    return tuple(c / lead for c in p)


def gcd(p, q) -> tuple[Fraction, ...]:
    a, b = trim(p), trim(q)
    while b:
        _, r = _divmod(a, b)
        a, b = b, _monic(r)
    return _monic(a)


def square_free_part(p) -> tuple[Fraction, ...]:
    p = trim(p)
    if degree(p) < 1:
        return p
    g = gcd(p, derivative(p))
    if degree(g) < 1:
        return _monic(p)
    q, _ = _divmod(p, g)
    return _monic(q)


def _positive_scale(p):
    """Scale by a positive constant (sign-preserving, keeps Sturm valid)."""
    if not p:
        return p
    lead = abs(p[-1])
    return tuple(c / lead for c in p)


@lru_cache(maxsize=512)
def sturm_chain(p: tuple) -> tuple[tuple[Fraction, ...], ...]:
    chain = [trim(p), trim(derivative(p))]
    while chain[-1]:
        _, r = _divmod(chain[-2], chain[-1])
        if not r:
            break
        chain.append(_positive_scale(tuple(-c for c in r)))
    return tuple(chain)


def _sign_changes(chain, x: Fraction) -> int:
    signs = []
    for p in chain:
        v = evaluate(p, x)
        if v != 0:
            signs.append(1 if v > 0 else -1)
    changes = 0
    for s, t in zip(signs, signs[1:]):
        if s != t:
            changes += 1
    return changes


def count_roots(p, lo: Fraction, hi: Fraction) -> int:
    """Number of distinct real roots of ``p`` in the half-open ``(lo, hi]``."""
    chain = sturm_chain(trim(p))
    return _sign_changes(chain, lo) - _sign_changes(chain, hi)


def isolate_roots(p, lo: Fraction, hi: Fraction) -> list[tuple[Fraction, Fraction]]:
    """Disjoint brackets, one per distinct root of ``p`` in ``(lo, hi)``.

    A degenerate bracket ``(r, r)`` marks a root hit exactly. Non-degenerate
    brackets ``(a, b)`` contain exactly one root, strictly inside.
    """
    p = trim(p)
    if degree(p) < 1:
        return []
    sq = square_free_part(p)
    # nudge endpoints off roots so brackets stay inside (lo, hi)
    eps = (hi - lo) / (1 << 40)
    out: list[tuple[Fraction, Fraction]] = []

    def walk(a: Fraction, b: Fraction, n: int):
        if n == 0:
            return
        if n == 1:
            out.append(_refine_isolated(sq, a, b))
            return
        m = (a + b) / 2
        if evaluate(sq, m) == 0:
            out.append((m, m))
            m_lo = m - eps
            m_hi = m + eps
            walk(a, m_lo, count_roots(sq, a, m_lo))
            walk(m_hi, b, count_roots(sq, m_hi, b))
            return
        walk(a, m, count_roots(sq, a, m))
        walk(m, b, count_roots(sq, m, b))

    a0 = lo + eps if evaluate(sq, lo) == 0 else lo
    b0 = hi - eps if evaluate(sq, hi) == 0 else hi
    walk(a0, b0, count_roots(sq, a0, b0))
    out.sort()
    return out


def _refine_isolated(sq, a: Fraction, b: Fraction) -> tuple[Fraction, Fraction]:
    """Shrink a one-root Sturm bracket until the endpoint signs differ."""
    fa = evaluate(sq, a)
    fb = evaluate(sq, b)
    if fa == 0:
        return (a, a)
    if fb == 0:
        return (b, b)
    while (fa > 0) == (fb > 0):
        m = (a + b) / 2
        fm = evaluate(sq, m)
        if fm == 0:
            return (m, m)
        if count_roots(sq, a, m) == 1:
            b, fb = m, fm
        else:
            a, fa = m, fm
    return (a, b)


def refine_bracket(p, lo: Fraction, hi: Fraction, width: Fraction) -> tuple[Fraction, Fraction]:
    """Bisect a sign-change bracket of ``p`` down to ``width``; detects exact
    rational roots at dyadic midpoints."""
    flo = evaluate(p, lo)
    fhi = evaluate(p, hi)
    if flo == 0:
        return (lo, lo)
    if fhi == 0:
        return (hi, hi)
    if (flo > 0) == (fhi > 0):
        raise ValueError("bracket endpoints have equal signs")
    while hi - lo > width:
        mid = (lo + hi) / 2
        fm = evaluate(p, mid)
        if fm == 0:
            return (mid, mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return (lo, hi)


def root_multiplicity(p, bracket: tuple[Fraction, Fraction]) -> int:
    """Multiplicity of the unique root of ``p`` inside ``bracket``."""
    lo, hi = bracket
    if lo == hi:
        x = lo
        mult = 0
        q = trim(p)
        while q and evaluate(q, x) == 0:
            mult += 1
            q = derivative(q)
        return mult
    if lo > hi:
        lo, hi = hi, lo
    pad = (hi - lo) / 1024
    mult = 0
    q = trim(p)
    while q and count_roots(q, lo - pad, hi + pad) >= 1:
        mult += 1
        q = derivative(q)
    return mult


def float_coeffs(coeffs) -> list[float]:
    return [float(c) for c in coeffs]
