import math
from fractions import Fraction as F

import mpmath
import numpy as np
import pytest

import hyperbolab._poly as poly
from hyperbolab.errors import (
    ConfigurationError,
    DomainError,
    GeometryError,
    MapInvariantError,
    NotMultimodalError,
    PrecisionError,
)
from hyperbolab.mapkit import (
    ConjugateFamily,
    CriticalPoint,
    MapSpec,
    PolynomialFamily,
    TrigPolynomialFamily,
    branch_partition,
    build_map,
    eval_deriv,
    eval_map,
    load_map,
    map_from_dict,
    map_to_dict,
    nonflatness_probe,
    save_map,
    to_fraction,
)


class TestEval:
    def test_critical_value(self, ulam):
        assert eval_map(ulam, F(1, 2)) == 1

    def test_endpoint_to_fixed_point(self, ulam):
        assert eval_map(ulam, 1) == 0

    def test_exact_rational_point(self, ulam):
        assert eval_map(ulam, F(1, 4)) == F(3, 4)

    def test_deriv_values(self, ulam):
        assert eval_deriv(ulam, 0, 1) == 4
        assert eval_deriv(ulam, F(1, 2), 1) == 0
        assert eval_deriv(ulam, F(1, 2), 2) == -8

    def test_outside_domain(self, ulam):
        with pytest.raises(DomainError):
            eval_map(ulam, 1.5)

    def test_precision_floor(self, ulam):
        with pytest.raises(ConfigurationError):
            eval_map(ulam, 0.5, precision_bits=32)

    def test_unsupported_order(self, ulam, ulam_phi):
        with pytest.raises(ConfigurationError):
            eval_deriv(ulam, 0.5, order=4)
        with pytest.raises(ConfigurationError):
            eval_deriv(ulam_phi, 0.5, order=2)

    def test_rounding_contract_against_exact(self, ulam):
        # extended-precision evaluation agrees with exact rationals on a
        # grid of 10^3 rational points
        prec = 80
        tol = F(1, 2 ** (prec - 2))
        for k in range(1000):
            q = F(k, 999)
            got = to_fraction(eval_map(ulam, q, prec))
            exact = ulam.family.eval_fraction(q)
            assert abs(got - exact) <= tol

    def test_chain_rule_small_n_symbolic(self, ulam):
        # |Df^n(x)| as a product of step derivatives vs the derivative of
        # the exactly composed polynomial
        composed = ulam.family.coeffs
        for n in range(2, 6):
            composed = poly.compose(ulam.family.coeffs, composed)
        dcomp = poly.derivative(composed)  # derivative of f^5
        for xq in (F(1, 3), F(2, 7), F(9, 11)):
            prod = F(1)
            x = xq
            for _ in range(5):
                prod *= ulam.family.eval_fraction(x, 1)
                x = ulam.family.eval_fraction(x)
            assert poly.evaluate(dcomp, xq) == prod

    def test_chain_rule_n20_finite_difference(self, ulam):
        prec = 128
        x0 = F(1, 3)
        h = F(1, 2**80)

        def iterate(z, n=20):
            for _ in range(n):
                z = to_fraction(eval_map(ulam, z, 4 * prec))
            return z

        fd = (iterate(x0 + h) - iterate(x0 - h)) / (2 * h)
        prod = F(1)
        z = x0
        for _ in range(20):
            prod *= to_fraction(eval_deriv(ulam, z, 1, 4 * prec))
            z = to_fraction(eval_map(ulam, z, 4 * prec))
        assert abs(abs(fd) - abs(prod)) <= abs(prod) * F(1, 2 ** (prec // 2))


class TestBranches:
    def test_ulam_two_branches(self, ulam):
        bs = branch_partition(ulam)
        assert len(bs) == 2
        assert (bs[0].lo, bs[0].hi) == (F(0), F(1, 2))
        assert bs[0].increasing and not bs[1].increasing
        assert bs[0].image == (0.0, 1.0) and bs[1].image == (0.0, 1.0)

    def test_cubic_three_branches_bisection_oracle(self, cubic):
        bs = branch_partition(cubic)
        assert len(bs) == 3
        # oracle: locate the derivative's sign changes by plain bisection
        df = cubic.df
        roots = []
        xs = np.linspace(0, 1, 257)
        vals = [df(float(x)) for x in xs]
        for i in range(256):
            if vals[i] * vals[i + 1] < 0:
                lo, hi = float(xs[i]), float(xs[i + 1])
                for _ in range(80):
                    mid = 0.5 * (lo + hi)
                    if df(mid) * df(lo) <= 0:
                        hi = mid
                    else:
                        lo = mid
                roots.append(0.5 * (lo + hi))
        assert len(roots) == 2
        assert abs(float(bs[0].hi) - roots[0]) < 1e-12
        assert abs(float(bs[1].hi) - roots[1]) < 1e-12

    def test_affine_not_multimodal(self):
        with pytest.raises(NotMultimodalError):
            build_map(PolynomialFamily((F(0), F(1, 2))), (F(0), F(1)), "affine")

    def test_partition_revalidates(self, ulam):
        bare = MapSpec(
            label="bare",
            domain=(F(0), F(1)),
            family=ulam.family,
            critical_points=(),
        )
        with pytest.raises(NotMultimodalError):
            branch_partition(bare)

    def test_unresolved_bracket(self, ulam):
        fat = MapSpec(
            label="fat",
            domain=(F(0), F(1)),
            family=ulam.family,
            critical_points=(
                CriticalPoint(bracket=(F(1, 4), F(3, 4)), order=2,
                              nonflat_L=1.0, nonflat_radius=0.1),
            ),
        )
        with pytest.raises(PrecisionError):
            branch_partition(fat)

    @pytest.mark.parametrize("fixture_name", ["ulam", "cubic", "quartic", "sine_arch"])
    def test_branch_images_monotone(self, fixture_name, request):
        spec = request.getfixturevalue(fixture_name)
        for br in branch_partition(spec):
            xs = np.linspace(br.lo_float, br.hi_float, 102)[1:-1]
            vals = spec.f_batch(xs)
            diffs = np.diff(vals)
            assert np.all(diffs > 0) if br.increasing else np.all(diffs < 0)


class TestNonflatness:
    def test_ulam_linear_derivative(self, ulam):
        probe = nonflatness_probe(ulam, ulam.critical_points[0])
        assert abs(probe.ell - 2.0) < 1e-6
        assert probe.L <= 1 / 8 + 1e-9

    def test_quartic_exponent(self, quartic):
        probe = nonflatness_probe(quartic, quartic.critical_points[0])
        assert abs(probe.ell - 4.0) < 1e-3

    def test_exponent_matches_multiplicity(self, ulam, cubic, quartic):
        for spec in (ulam, cubic, quartic):
            for c in spec.critical_points:
                probe = nonflatness_probe(spec, c)
                assert round(probe.ell) == c.order

    def test_grid_overlapping_second_critical_point(self, cubic):
        c0, c1 = cubic.critical_points
        gap = abs(c1.location - c0.location)
        with pytest.raises(GeometryError):
            nonflatness_probe(cubic, c0, radius_grid=[gap / 8, gap * 1.5])

    def test_weak_exponent_bound_holds(self, ulam):
        # the looser |Df| >= |x-c|**ell / L convention also verifies on the
        # probe's own radius range
        cp = ulam.critical_points[0]
        probe = nonflatness_probe(ulam, cp)
        c = cp.location
        for r in np.geomspace(cp.nonflat_radius / 4096, cp.nonflat_radius / 2, 12):
            assert abs(ulam.df(c + r)) >= r ** round(probe.ell) / probe.weak_L * (1 - 1e-9)


class TestInvariants:
    def test_critical_orders(self, ulam, cubic, quartic, sine_arch, ulam_phi):
        assert [c.order for c in ulam.critical_points] == [2]
        assert [c.order for c in cubic.critical_points] == [2, 2]
        assert [c.order for c in quartic.critical_points] == [4]
        assert [c.order for c in sine_arch.critical_points] == [2]
        assert [c.order for c in ulam_phi.critical_points] == [2]

    def test_nonflat_constants_valid(self, ulam, cubic, quartic):
        for spec in (ulam, cubic, quartic):
            for c in spec.critical_points:
                assert c.order >= 2
                assert c.nonflat_L >= 1
                assert c.nonflat_radius > 0
                exp = c.order - 1
                for r in np.geomspace(c.nonflat_radius / 100, c.nonflat_radius / 2, 8):
                    for x in (c.location - r, c.location + r):
                        assert abs(spec.df(x)) >= r**exp / c.nonflat_L * (1 - 1e-9)

    def test_escaping_map_rejected(self):
        with pytest.raises(MapInvariantError):
            build_map(
                PolynomialFamily((F(0), F(9, 2), F(-9, 2))), (F(0), F(1)), "escapes"
            )

    def test_trig_matches_math(self, sine_arch):
        for x in np.linspace(0.05, 0.95, 11):
            assert sine_arch.f(float(x)) == pytest.approx(math.sin(math.pi * x), abs=1e-12)
            assert sine_arch.df(float(x)) == pytest.approx(
                math.pi * math.cos(math.pi * x), abs=1e-12
            )
        v = eval_map(sine_arch, F(1, 3), 100)
        assert abs(to_fraction(v) - to_fraction(mpmath.mpf(math.sin(math.pi / 3)))) < F(1, 2**40)

    def test_conjugate_matches_composition(self, ulam_phi):
        def phi(u):
            return (u + u * u) / 2

        def phi_inv(y):
            return (-1 + math.sqrt(1 + 8 * y)) / 2

        for x in np.linspace(0.01, 0.99, 17):
            u = phi_inv(float(x))
            expected = phi(4 * u * (1 - u))
            assert ulam_phi.f(float(x)) == pytest.approx(expected, abs=1e-12)


class TestMapFiles:
    def test_dict_round_trip(self, ulam, cubic, sine_arch, ulam_phi):
        for spec in (ulam, cubic, sine_arch, ulam_phi):
            d = map_to_dict(spec)
            rebuilt = map_from_dict(d)
            assert map_to_dict(rebuilt) == d
            assert rebuilt.critical_points == spec.critical_points

    def test_file_round_trip(self, tmp_path, cubic):
        path = tmp_path / "cubic.json"
        save_map(cubic, path)
        loaded = load_map(path)
        assert map_to_dict(loaded) == map_to_dict(cubic)

    def test_decimal_strings_accepted(self):
        spec = map_from_dict(
            {
                "label": "decimal",
                "domain": ["0", "1"],
                "family": {"kind": "polynomial", "coefficients": ["0.1", "3.3", "-3.3"]},
            }
        )
        assert spec.family.coeffs == (F(1, 10), F(33, 10), F(-33, 10))
