import csv
import json
import math
from fractions import Fraction as F

import pytest

from hyperbolab.errors import ConfigurationError, PrecisionError
from hyperbolab.mapkit import to_fraction
from hyperbolab.orbit import (
    OrbitRecord,
    PrecisionPolicy,
    critical_orbit,
    derivative_sup_estimate,
    periodic_points,
    point_orbit,
    repelling_check,
    write_orbit_csv,
)


class TestCriticalOrbit:
    def test_ulam_closed_form(self, ulam):
        rec = critical_orbit(ulam, ulam.critical_points[0], 10)
        pts = [float(p) for p in rec.points]
        assert pts[0] == 1.0
        assert all(p == 0.0 for p in pts[1:])
        assert all(float(d) == 4.0 for d in rec.deriv_factors)

    def test_minimal_request_returns_base_point(self, ulam):
        rec = critical_orbit(ulam, ulam.critical_points[0], 0)
        assert len(rec) == 1
        assert float(rec.points[0]) == 1.0

    def test_exact_mode_product(self, ulam):
        rec = critical_orbit(ulam, ulam.critical_points[0], 30, exact=True)
        assert rec.exact
        prod = F(1)
        for d in rec.deriv_factors:
            prod *= d
        assert prod == F(4) ** 30

    def test_exact_mode_caps(self, ulam, sine_arch):
        with pytest.raises(ConfigurationError):
            critical_orbit(ulam, ulam.critical_points[0], 31, exact=True)
        with pytest.raises(ConfigurationError):
            critical_orbit(sine_arch, sine_arch.critical_points[0], 5, exact=True)

    def test_doubled_precision_agreement(self, logistic39):
        # self-consistency oracle: recomputing at higher working precision
        # agrees with the stored points on their certified bits
        c = logistic39.critical_points[0]
        base = critical_orbit(logistic39, c, 100, PrecisionPolicy(min_certified=100))
        finer = critical_orbit(
            logistic39, c, 100, PrecisionPolicy(min_certified=base.min_certified + 128)
        )
        assert base.min_certified >= 100
        assert finer.precision_bits > base.precision_bits
        for k in range(100):
            diff = abs(to_fraction(base.points[k]) - to_fraction(finer.points[k]))
            assert diff <= F(1, 2 ** base.certified_bits[k])

    def test_precision_exhaustion_reports_prefix(self, logistic39):
        policy = PrecisionPolicy(min_certified=60, max_bits=64)
        with pytest.raises(PrecisionError) as err:
            critical_orbit(logistic39, logistic39.critical_points[0], 200, policy)
        partial = err.value.partial
        assert partial is not None
        assert 0 < len(partial) < 200
        assert all(b >= 60 for b in partial.certified_bits)

    def test_point_orbit_arbitrary_start(self, ulam):
        rec = point_orbit(ulam, F(1, 3), 12)
        # orbit of 1/3: 8/9, then 32/81, ...
        assert to_fraction(rec.points[1]) == pytest.approx(8 / 9)
        assert rec.min_certified >= 64

    def test_sup_estimate(self, ulam):
        m = derivative_sup_estimate(ulam)
        assert 4.0 <= m <= 4.4


class TestPeriodicPoints:
    def test_fixed_points(self, ulam):
        orbs = [o for o in periodic_points(ulam, 1)]
        assert len(orbs) == 2
        zero, interior = orbs
        assert zero.point == pytest.approx(0.0, abs=1e-12)
        assert zero.multiplier == pytest.approx(4.0, abs=1e-12)
        assert interior.point == pytest.approx(0.75, abs=1e-12)
        assert interior.multiplier == pytest.approx(2.0, abs=1e-12)
        assert interior.derivative == pytest.approx(-2.0, abs=1e-12)

    def test_period_two_cycle(self, ulam):
        orbs = [o for o in periodic_points(ulam, 2) if o.period == 2]
        assert len(orbs) == 1
        cyc = sorted(orbs[0].cycle)
        expected = sorted(((5 - math.sqrt(5)) / 8, (5 + math.sqrt(5)) / 8))
        assert cyc[0] == pytest.approx(expected[0], abs=1e-12)
        assert cyc[1] == pytest.approx(expected[1], abs=1e-12)
        # Vieta: (4-8x1)(4-8x2) = -4
        assert orbs[0].derivative == pytest.approx(-4.0, abs=1e-10)

    def test_cycle_counts_match_full_shift(self, ulam):
        # number of least-period-p cycles of the full quadratic map
        expected = {1: 2, 2: 1, 3: 2, 4: 3, 5: 6, 6: 9}
        orbs = periodic_points(ulam, 6)
        for p, count in expected.items():
            assert sum(1 for o in orbs if o.period == p) == count

    def test_least_period_property(self, ulam):
        for o in periodic_points(ulam, 6):
            x = o.point
            for q in range(1, o.period):
                if o.period % q == 0:
                    z = x
                    for _ in range(q):
                        z = ulam.f(z)
                    assert abs(z - x) > 1e-6

    def test_reverse_scan_invariance(self, cubic):
        a = periodic_points(cubic, 4)
        b = periodic_points(cubic, 4, reverse_scan=True)
        key = lambda orbs: sorted((o.period, round(o.point, 9)) for o in orbs)
        assert key(a) == key(b)

    def test_period_cap(self, ulam):
        with pytest.raises(ConfigurationError):
            periodic_points(ulam, 13)


class TestRepelling:
    def test_ulam_all_repelling(self, ulam):
        rep = repelling_check(ulam, 6)
        assert rep.all_repelling
        assert not rep.witnesses
        for o in rep.orbits:
            assert abs(o.multiplier - 2.0**o.period) < 1e-9 or (
                o.point == pytest.approx(0.0, abs=1e-9)
            )

    def test_attracting_fixed_point_witness(self, logistic28):
        rep = repelling_check(logistic28, 1)
        assert not rep.all_repelling
        assert len(rep.witnesses) == 1
        w = rep.witnesses[0]
        assert w.point == pytest.approx(1 - 1 / 2.8, abs=1e-9)
        assert w.derivative == pytest.approx(-0.8, abs=1e-9)

    def test_empty_scan_vacuous(self, ulam):
        rep = repelling_check(ulam, 0)
        assert rep.all_repelling
        assert rep.witnesses == ()
        assert rep.orbits == ()


class TestSerialization:
    def test_csv_round_trip(self, tmp_path, ulam):
        rec = critical_orbit(ulam, ulam.critical_points[0], 8, exact=True)
        path = tmp_path / "orbit.csv"
        header = write_orbit_csv(rec, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["index", "point", "deriv_factor", "certified_bits"]
        assert len(rows) == 9
        assert rows[1][1] == "1"
        assert rows[2][2] == "4"
        meta = json.loads((tmp_path / "orbit.csv.json").read_text())
        assert meta == header
        assert meta["exact"] is True
        assert meta["entries"] == 8

    def test_synthetic_record_fields(self):
        rec = OrbitRecord(
            map_label="synthetic",
            base_point=0.5,
            points=(0.5, 0.5),
            deriv_factors=(1.0, 1.0),
            precision_bits=53,
            certified_bits=(53, 53),
        )
        assert rec.min_certified == 53
        assert list(rec.log_factors()) == [0.0, 0.0]
