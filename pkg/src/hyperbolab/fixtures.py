"""Built-in analysis fixtures: exactly representable maps used throughout
the test suite and the command line's canned runs."""

from __future__ import annotations

from fractions import Fraction

from .errors import ConfigurationError
from .mapkit import (
    ConjugateFamily,
    MapSpec,
    PolynomialFamily,
    TrigPolynomialFamily,
    build_map,
)

__all__ = [
    "FIXTURES",
    "cubic_two_critical",
    "fixture",
    "fixture_names",
    "logistic",
    "quartic_tangency",
    "sine_arch",
    "ulam",
    "ulam_quadratic_change",
]

_UNIT = (Fraction(0), Fraction(1))


def ulam() -> MapSpec:
    """The full quadratic map ``4x(1-x)`` on [0, 1]."""
    return build_map(PolynomialFamily((Fraction(0), Fraction(4), Fraction(-4))), _UNIT, "ulam")


def logistic(a) -> MapSpec:
    """``a*x*(1-x)`` on [0, 1] for a rational parameter ``a`` in (0, 4]."""
    af = Fraction(a)
    if not 0 < af <= 4:
        raise ConfigurationError("logistic parameter must lie in (0, 4]")
    return build_map(
        PolynomialFamily((Fraction(0), af, -af)), _UNIT, f"logistic-{af}"
    )


def cubic_two_critical() -> MapSpec:
    """``19/5 * x(1-x)(x-1/10) + 1/10``: two interior critical points."""
    a = Fraction(19, 5)
    coeffs = (
        Fraction(1, 10),
        a * Fraction(-1, 10),
        a * Fraction(11, 10),
        -a,
    )
    return build_map(PolynomialFamily(coeffs), _UNIT, "cubic-two-critical")


def quartic_tangency() -> MapSpec:
    """``1 - 16*(x - 1/2)**4``: one critical point of order 4."""
    coeffs = (Fraction(0), Fraction(8), Fraction(-24), Fraction(32), Fraction(-16))
    return build_map(PolynomialFamily(coeffs), _UNIT, "quartic-tangency")


def sine_arch() -> MapSpec:
    """``sin(pi x)`` on [0, 1] (trigonometric family)."""
    return build_map(
        TrigPolynomialFamily(Fraction(0), ((1, Fraction(0), Fraction(1)),)),
        _UNIT,
        "sine-arch",
    )


def ulam_quadratic_change() -> MapSpec:
    """The full quadratic map in the coordinates ``phi(x) = (x + x^2)/2``."""
    phi = PolynomialFamily((Fraction(0), Fraction(1, 2), Fraction(1, 2)))
    base = PolynomialFamily((Fraction(0), Fraction(4), Fraction(-4)))
    return build_map(
        ConjugateFamily(base=base, base_domain=_UNIT, change=phi),
        _UNIT,
        "ulam-quadratic-change",
    )


FIXTURES = {
    "ulam": ("full quadratic map 4x(1-x)", ulam),
    "logistic-2.8": ("logistic map, attracting fixed point", lambda: logistic(Fraction(14, 5))),
    "logistic-3.5": ("logistic map, periodic attractor", lambda: logistic(Fraction(7, 2))),
    "logistic-3.9": ("logistic map, chaotic parameter", lambda: logistic(Fraction(39, 10))),
    "cubic-two-critical": ("cubic with two interior critical points", cubic_two_critical),
    "quartic-tangency": ("unimodal quartic with order-4 critical point", quartic_tangency),
    "sine-arch": ("sine arch map (trigonometric family)", sine_arch),
    "ulam-quadratic-change": (
        "full quadratic map conjugated by (x + x^2)/2",
        ulam_quadratic_change,
    ),
}


def fixture_names() -> list[str]:
    return sorted(FIXTURES)


def fixture(name: str) -> MapSpec:
    try:
        _, builder = FIXTURES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown fixture {name!r}; available: {', '.join(fixture_names())}"
        ) from None
    return builder()
