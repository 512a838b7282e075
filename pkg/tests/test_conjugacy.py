import math
from fractions import Fraction as F

import numpy as np
import pytest

from hyperbolab.conjugacy import (
    build_conjugacy,
    holder_fit,
    invariance_report,
    itinerary,
    table_pairs,
    write_table_csv,
)
from hyperbolab.errors import (
    ConjugacyMismatchError,
    InsufficientDataError,
    PrecisionError,
    StructureError,
)


def _phi(x):
    return (x + x * x) / 2


def scale_pairs(rng, n=4000):
    """Pairs spanning >= 6 decades of distance, anchored at 0."""
    d = 10.0 ** (-rng.random(n) * 6 - 0.5)
    x_rand = rng.random(n)
    x1 = np.concatenate([np.zeros(n // 2), x_rand[: n // 2]])
    x2 = np.concatenate([d[: n // 2], np.clip(x_rand[: n // 2] + d[n // 2 :], 0, 1)])
    return x1, x2


class TestItinerary:
    def test_left_fixed_point(self, ulam):
        assert str(itinerary(ulam, 0, 5)) == "00000"

    def test_right_fixed_point(self, ulam):
        assert str(itinerary(ulam, F(3, 4), 4)) == "1111"

    def test_critical_point_closed_address(self, ulam):
        # marker, then the itinerary of the critical value f(1/2) = 1
        assert str(itinerary(ulam, F(1, 2), 3)) == "*10"

    def test_straddling_bracket_precision_error(self, cubic):
        # a barely-certified orbit point near a critical bracket cannot be
        # assigned a branch
        from hyperbolab.orbit import PrecisionPolicy

        loose = PrecisionPolicy(min_certified=1, guard_bits=0)
        x = cubic.critical_points[0].midpoint_fraction() + F(1, 50)
        with pytest.raises(PrecisionError):
            itinerary(cubic, x, 1, policy=loose, crit_tol=0.0)

    def test_orbit_through_critical_point_repeats_marker(self, logistic2):
        # f(1/2) = 1/2: the closed address is markers forever
        assert str(itinerary(logistic2, F(1, 2), 4)) == "****"


class TestBuildConjugacy:
    def test_identity_table(self, ulam):
        table = build_conjugacy(ulam, ulam, 10)
        assert len(table) == 2**11 - 1
        assert np.max(np.abs(table.xs - table.ys)) <= table.bracket_width

    def test_quadratic_change_matches_formula(self, ulam, ulam_phi):
        table = build_conjugacy(ulam, ulam_phi, 16)
        assert np.max(np.abs(table.ys - _phi(table.xs))) < 1e-8

    def test_kneading_mismatch(self, ulam, logistic35):
        with pytest.raises(ConjugacyMismatchError) as err:
            build_conjugacy(ulam, logistic35, 8)
        assert err.value.witness is not None
        assert err.value.depth is not None

    def test_unequal_critical_counts(self, ulam, cubic):
        with pytest.raises(StructureError):
            build_conjugacy(ulam, cubic, 4)

    def test_strict_order_preservation(self, ulam, ulam_phi):
        table = build_conjugacy(ulam, ulam_phi, 10)
        assert np.all(np.diff(table.xs) > 0)
        assert np.all(np.diff(table.ys) > 0)

    def test_semiconjugacy_residual(self, ulam, ulam_phi):
        table = build_conjugacy(ulam, ulam_phi, 10)
        # points at level >= 1 map to table points: h(f(x)) = g(h(x))
        fx = ulam.f_batch(table.xs)
        gy = ulam_phi.f_batch(table.ys)
        idx = np.searchsorted(table.xs, fx)
        idx = np.clip(idx, 1, len(table) - 1)
        near = np.minimum(
            np.abs(table.xs[idx] - fx), np.abs(table.xs[idx - 1] - fx)
        )
        is_table_point = near < 1e-9
        pick = np.where(
            np.abs(table.xs[idx] - fx) <= np.abs(table.xs[idx - 1] - fx), idx, idx - 1
        )
        resid = np.abs(table.ys[pick] - gy)[is_table_point]
        assert float(resid.max()) < 1e-8

    def test_depth_refinement(self, ulam, ulam_phi):
        shallow = build_conjugacy(ulam, ulam_phi, 8)
        deep = build_conjugacy(ulam, ulam_phi, 9)
        deep_keys = {int(k) for k in deep.keys}
        missing = [k for k in shallow.keys if int(k) not in deep_keys]
        assert not missing
        lookup = {int(k): y for k, y in zip(deep.keys, deep.ys)}
        for x, y, k in zip(shallow.xs, shallow.ys, shallow.keys):
            assert abs(lookup[int(k)] - y) <= 1e-12

    def test_evaluate_brackets(self, ulam, ulam_phi):
        table = build_conjugacy(ulam, ulam_phi, 12)
        for x in (0.1, 0.37, 0.82):
            lo, hi = table.evaluate(x)
            assert lo <= _phi(x) + table.bracket_width
            assert hi >= _phi(x) - table.bracket_width

    def test_csv_export(self, tmp_path, ulam):
        table = build_conjugacy(ulam, ulam, 4)
        path = tmp_path / "table.csv"
        write_table_csv(table, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,depth,address"
        assert len(lines) == len(table) + 1


class TestHolderFit:
    def test_identity_calibration(self):
        x1, x2 = scale_pairs(np.random.default_rng(1))
        fit = holder_fit(np.column_stack([x1, x2, x1, x2]))
        assert abs(fit.alpha - 1.0) <= 0.01
        assert fit.K == pytest.approx(1.0, abs=0.05)

    def test_sqrt_calibration(self):
        x1, x2 = scale_pairs(np.random.default_rng(2))
        fit = holder_fit(np.column_stack([x1, x2, np.sqrt(x1), np.sqrt(x2)]))
        assert abs(fit.alpha - 0.5) <= 0.03

    def test_arcsin_sqrt_calibration(self):
        rng = np.random.default_rng(3)
        x1, x2 = scale_pairs(rng)
        d = 10.0 ** (-rng.random(2000) * 6 - 0.5)
        a1 = np.concatenate([x1, 1.0 - d])
        a2 = np.concatenate([x2, np.ones(2000)])
        hinv = lambda y: (2 / np.pi) * np.arcsin(np.sqrt(y))
        fit = holder_fit(np.column_stack([a1, a2, hinv(a1), hinv(a2)]))
        assert abs(fit.alpha - 0.5) <= 0.05

    def test_backward_direction(self):
        x1, x2 = scale_pairs(np.random.default_rng(4))
        h1, h2 = np.sqrt(x1), np.sqrt(x2)
        fwd = holder_fit(np.column_stack([x1, x2, h1, h2]), "forward")
        bwd = holder_fit(np.column_stack([h1, h2, x1, x2]), "backward")
        assert abs(fwd.alpha - bwd.alpha) <= 0.05

    def test_insufficient_pairs(self):
        with pytest.raises(InsufficientDataError):
            holder_fit(np.random.default_rng(0).random((100, 4)))

    def test_degenerate_distances(self):
        x1 = np.zeros(2000)
        x2 = np.full(2000, 0.25)
        with pytest.raises(InsufficientDataError):
            holder_fit(np.column_stack([x1, x2, x1, x2]))

    def test_bound_holds_on_samples(self):
        x1, x2 = scale_pairs(np.random.default_rng(5))
        fit = holder_fit(np.column_stack([x1, x2, np.sqrt(x1), np.sqrt(x2)]))
        dx = np.abs(x1 - x2)
        dh = np.abs(np.sqrt(x1) - np.sqrt(x2))
        keep = dx > 0
        assert np.all(dh[keep] <= fit.K * dx[keep] ** fit.alpha * (1 + 1e-9))


class TestTablePairs:
    def test_spans_scales(self, ulam, ulam_phi):
        table = build_conjugacy(ulam, ulam_phi, 12)
        pairs = table_pairs(table, seed=0)
        dx = np.abs(pairs[:, 0] - pairs[:, 1])
        dx = dx[dx > 0]
        assert math.log10(dx.max() / dx.min()) >= 4


class TestInvarianceReport:
    @pytest.fixture(scope="class")
    def identity_report(self, request):
        ulam = request.getfixturevalue("ulam")
        table = build_conjugacy(ulam, ulam, 12)
        return invariance_report(ulam, ulam, table, horizons=100, tce_horizon=12)

    def test_identity_holder_is_exact(self, identity_report):
        conj = identity_report["conjugacy"]
        assert conj["holder_forward"]["alpha"] == 1.0
        assert conj["holder_forward"]["K"] == 1.0
        assert conj["holder_backward"]["alpha"] == 1.0

    def test_identity_transport_no_violations(self, identity_report):
        for claim, checks in identity_report["transported"].items():
            if claim == "slow_recurrence_invariance":
                continue
            for chk in checks:
                if chk.get("transported"):
                    assert chk["violations"] == []

    def test_identity_transported_bound_equals_source(self, identity_report):
        # K = 1, alpha = 1: the transported constants are the source fit's
        src = identity_report["source"]["critical_points"][0]["recurrence"]["er"]
        chk = identity_report["transported"]["subexponential_invariance"][0]
        assert chk["constant"] == src["constant"]
        assert chk["exponent"] == src["exponent"]

    def test_quadratic_change_pair(self, ulam, ulam_phi):
        table = build_conjugacy(ulam, ulam_phi, 14)
        rep = invariance_report(
            ulam, ulam_phi, table, horizons=200, tce_horizon=8, radii=(0.05,)
        )
        g_growth = rep["target"]["critical_points"][0]["growth"]
        assert abs(g_growth["rate"] - 4.0) / 4.0 < 0.10
        ser = rep["transported"]["stretched_exponential_invariance"][0]
        assert ser["transported"]
        assert ser["violations"] == []
        assert rep["conjugacy"]["exactness_assumed"] is True
