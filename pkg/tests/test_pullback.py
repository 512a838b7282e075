import csv
import math
from fractions import Fraction as F

import numpy as np
import pytest

from hyperbolab.errors import CapacityError, DomainError, HypothesisError
from hyperbolab.intervals import Ival
from hyperbolab.orbit import point_orbit
from hyperbolab.pullback import (
    criticality_count,
    esc_fit,
    estimate_chain_constants,
    koebe_probe,
    preimage_components,
    pull_stable_probe,
    pullback_chain,
    quasi_chain,
    sample_distortion_probes,
    shrink_to_ce_bound,
    tce_density,
    write_chain_csv,
)


def _grid_probes(spec, delta, count):
    a, b = spec.domain_floats
    centers = np.linspace(a + delta / 2, b - delta / 2, count)
    return [(x - delta / 2, x + delta / 2) for x in centers]


class TestPreimageComponents:
    def test_depth_one_closed_form(self, ulam):
        comps = preimage_components(ulam, (0.0, 0.75), 1)
        assert len(comps) == 2
        assert comps[0].lo == pytest.approx(0.0, abs=1e-12)
        assert comps[0].hi == pytest.approx(0.25, abs=1e-12)
        assert comps[1].lo == pytest.approx(0.75, abs=1e-12)
        assert comps[1].hi == pytest.approx(1.0, abs=1e-12)

    def test_full_interval_fixed(self, ulam):
        for depth in (1, 3, 5):
            comps = preimage_components(ulam, (0.0, 1.0), depth)
            assert len(comps) == 1
            assert comps[0].lo == 0.0 and comps[0].hi == 1.0

    def test_depth_four_membership_oracle(self, ulam):
        comps = preimage_components(ulam, (0.2, 0.3), 4)
        xs = np.linspace(0.0, 1.0, 100001)
        y = xs.copy()
        for _ in range(4):
            y = 4 * y * (1 - y)
        inside = (y >= 0.2) & (y <= 0.3)
        in_comp = np.zeros_like(inside)
        strict = np.zeros_like(inside)
        for c in comps:
            in_comp |= (xs >= c.lo - 1e-9) & (xs <= c.hi + 1e-9)
            strict |= (xs >= c.lo + 1e-9) & (xs <= c.hi - 1e-9)
        assert not np.any(inside & ~in_comp)
        assert not np.any(strict & ~inside)

    def test_endpoint_images_on_boundary(self, ulam):
        comps = preimage_components(ulam, (0.2, 0.3), 3)
        for c in comps:
            for e in (c.lo, c.hi):
                v = e
                for _ in range(3):
                    v = ulam.f(v)
                assert min(abs(v - 0.2), abs(v - 0.3)) < 1e-10

    def test_pairwise_disjoint(self, ulam):
        comps = preimage_components(ulam, (0.4, 0.45), 5)
        for a, b in zip(comps, comps[1:]):
            assert a.hi < b.lo

    def test_interval_outside_domain(self, ulam):
        with pytest.raises(DomainError):
            preimage_components(ulam, (-0.1, 0.5), 1)

    def test_capacity_error_with_partial(self, ulam):
        with pytest.raises(CapacityError) as err:
            preimage_components(ulam, (0.2, 0.3), 4, cap=3)
        assert err.value.partial is not None
        assert len(err.value.partial) > 3

    def test_prune_floor_flags(self, ulam):
        comps = preimage_components(ulam, (0.2, 0.3), 2, prune_floor=1.0)
        assert all(c.pruned for c in comps)
        assert len(comps) == 4  # flagged, never dropped


class TestPullbackChain:
    def test_left_fixed_point_chain(self, ulam):
        ch = pullback_chain(ulam, 0, 10, 0.1)
        assert ch.criticality() == 0
        assert not any(ch.critical_flags)
        # closed form: W_0 = [0, t] where t is the 10-fold branch inverse of 0.1
        t = 0.1
        for _ in range(10):
            lo, hi = 0.0, 0.5
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if 4 * mid * (1 - mid) < t:
                    lo = mid
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
        w0 = ch.component(0)
        lo_f, hi_f = w0.to_floats()
        assert lo_f == pytest.approx(0.0, abs=1e-15)
        assert hi_f == pytest.approx(t, rel=1e-10)

    def test_ball_around_critical_point(self, ulam):
        ch = pullback_chain(ulam, F(1, 2), 1, 0.1)
        assert ch.flag(0)
        assert ch.component(0).contains(F(1, 2))
        assert ch.criticality() == 1

    def test_contains_orbit_points(self, logistic39):
        n = 40
        ch = pullback_chain(logistic39, F(1, 3), n, 0.05)
        orbit = point_orbit(logistic39, F(1, 3), n + 1)
        for j in range(n + 1):
            assert ch.component(j).contains(orbit.points[j])

    def test_expanding_fixed_point_contracts(self, ulam):
        # |Df| > 1 at the fixed point: diameters shrink monotonically
        ch = pullback_chain(ulam, 0, 12, 0.01)
        diams = ch.diameters_log2  # ordered W_n .. W_0
        assert all(a >= b - 1e-9 for a, b in zip(diams, diams[1:]))

    def test_clipping_recorded(self, ulam):
        ch = pullback_chain(ulam, 0, 3, 0.5)
        assert ch.clipped

    def test_csv_export(self, tmp_path, ulam):
        ch = pullback_chain(ulam, 0, 5, 0.1)
        path = tmp_path / "chain.csv"
        write_chain_csv(ch, path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["depth", "left", "right", "flagged"]
        assert len(rows) == 7


class TestCriticality:
    def test_fixed_point_zero(self, ulam):
        for n in (1, 10, 50):
            assert criticality_count(ulam, 0, n, 0.1) == 0

    def test_critical_center_one(self, ulam):
        assert criticality_count(ulam, F(1, 2), 1, 0.1) == 1

    def test_huge_radius_counts_everything(self, ulam):
        n = 5
        assert criticality_count(ulam, 0.3, n, 2.0) == n

    def test_monotone_in_radius(self, logistic39):
        counts = [
            criticality_count(logistic39, F(1, 3), 25, r)
            for r in (0.01, 0.05, 0.1, 0.2)
        ]
        assert all(a <= b for a, b in zip(counts, counts[1:]))


class TestTceDensity:
    def test_fixed_point_density_one(self, ulam):
        t = tce_density(ulam, 0, 60, 0.05, 0)
        assert t.density == 1.0
        assert t.liminf_surrogate == 1.0

    def test_threshold_at_least_horizon(self, ulam):
        t = tce_density(ulam, 0.3, 8, 2.0, 8)
        assert t.density == 1.0  # criticality <= n <= D always

    def test_counts_match_direct_recount(self, ulam):
        x = 0.14644660940672627  # a preimage of the critical point
        t = tce_density(ulam, x, 12, 0.05, 1)
        for m in range(1, 13):
            assert t.counts[m - 1] == criticality_count(ulam, x, m, 0.05)
        good = [c <= 1 for c in t.counts]
        assert t.density == sum(good) / 12


class TestShrinking:
    def test_probe_longer_than_cap(self, ulam):
        with pytest.raises(DomainError):
            esc_fit(ulam, 0.1, 4, [(0.0, 1.0)])

    def test_depth_one_matches_single_step_inverses(self, ulam):
        probes = _grid_probes(ulam, 0.1, 10)
        fit = esc_fit(ulam, 0.1, 3, probes)
        expected = 0.0
        for lo, hi in probes:
            comps = preimage_components(ulam, (lo, hi), 1)
            expected = max(expected, max(c.diameter for c in comps))
        assert fit.max_diameters[0] == expected

    def test_rate_near_two(self, ulam):
        fit = esc_fit(ulam, 0.1, 9, _grid_probes(ulam, 0.1, 8))
        assert fit.verdict
        assert 1.8 <= fit.rate <= 2.2
        # pointwise soundness of (constant, rate)
        for n, m in enumerate(fit.max_diameters, start=1):
            assert m <= fit.constant * fit.rate**-n * (1 + 1e-12)


class TestPullStable:
    def test_huge_kappa_accepts_largest(self, ulam):
        got = pull_stable_probe(ulam, 2.0, [0.2, 0.1], 4)
        assert got == 0.2

    def test_invalid_kappa(self, ulam):
        with pytest.raises(DomainError):
            pull_stable_probe(ulam, 0.0, [0.1], 3)

    def test_exhaustive_verification(self, ulam):
        kappa = 0.5
        got = pull_stable_probe(ulam, kappa, [0.2, 0.1, 0.05], 10)
        assert got is not None
        # oracle: re-enumerate the trees of the returned radius
        a, b = ulam.domain_floats
        for x in np.arange(a + got / 2, b, got / 2):
            lo, hi = max(a, x - got), min(b, x + got)
            for depth in range(1, 11):
                comps = preimage_components(ulam, (lo, hi), depth)
                assert max(c.diameter for c in comps) < kappa


class TestKoebe:
    def test_non_injective_hypothesis(self, ulam):
        with pytest.raises(HypothesisError):
            koebe_probe(ulam, (0.4, 0.6), (0.45, 0.55), 1, 0.5)

    def test_point_limit_ratio_one(self, ulam):
        # iterates of T stay inside the left branch, so f^s is injective
        probe = koebe_probe(ulam, (0.0005, 0.002), (0.001, 0.0010001), 3, 0.5)
        assert probe.ratio < 1.001

    def test_grid_oracle_within_one_percent(self, ulam):
        T = (0.0005, 0.002)
        J = (0.001, 0.0012)
        for s in (2, 3, 4):
            probe = koebe_probe(ulam, T, J, s, 0.5)
            xs = np.linspace(J[0], J[1], 10001)
            logd = np.zeros_like(xs)
            cur = xs.copy()
            for _ in range(s):
                logd += np.log(np.abs(ulam.df_batch(cur)))
                cur = ulam.f_batch(cur)
            oracle = math.exp(float(logd.max() - logd.min()))
            assert probe.ratio == pytest.approx(oracle, rel=0.01)

    def test_well_inside_hypothesis(self, ulam):
        # inner interval too close to the outer boundary for tau = 4
        with pytest.raises(HypothesisError):
            koebe_probe(ulam, (0.1, 0.3), (0.11, 0.29), 1, 4.0)

    def test_sampler_monotone_in_tau(self, ulam):
        maxima = []
        for tau in (0.5, 1.0, 2.0, 4.0):
            probes = sample_distortion_probes(ulam, 30, 12, tau, seed=7)
            assert len(probes) >= 20
            maxima.append(max(p.ratio for p in probes))
        for a, b in zip(maxima, maxima[1:]):
            assert b <= a * 1.05  # nonincreasing within sampling noise


class TestQuasiChain:
    def test_ulam_no_resets(self, ulam):
        cert = quasi_chain(ulam, 1, 50, 0.1)
        assert cert.reset_count == 0
        assert not cert.start_reset
        assert cert.hypotheses_verified
        assert cert.log_bound <= cert.log_actual + 1e-9
        assert cert.log_actual == pytest.approx(50 * math.log(4), abs=1e-9)
        # m = 0: the bound collapses to prefactor * rate**n
        expected = math.log(cert.prefactor) + 50 * math.log(cert.constants.rate)
        assert cert.log_bound == pytest.approx(expected, abs=1e-9)

    def test_radius_above_domain_resets_everywhere(self, ulam):
        cert = quasi_chain(ulam, 1, 10, 2.0)
        assert cert.reset_count == 9
        assert cert.reset_times == tuple(range(9, 0, -1))
        assert cert.start_reset
        assert not cert.hypotheses_verified  # radius >= 1/e and start reset
        assert not cert.radius_below_inv_e

    def test_certificate_inequality_when_verified(self, ulam, logistic39):
        for spec, v, eta in ((ulam, 1, 0.05), (logistic39, 0.975, 0.05)):
            cert = quasi_chain(spec, v, 120, eta)
            if cert.hypotheses_verified:
                assert cert.log_bound <= cert.log_actual + 1e-9
            for piece in cert.pieces:
                if piece.verified:
                    assert piece.model_log <= piece.actual_log + 1e-9

    def test_chain_contains_orbit(self, logistic39):
        n = 60
        cert = quasi_chain(logistic39, 0.975, n, 0.3)
        orbit = point_orbit(logistic39, 0.975, n + 1)
        assert cert.reset_count >= 1  # wide radius forces resets
        assert len(cert.diameters_log2) == n + 1

    def test_reset_rule_replay(self, logistic39):
        # independent re-simulation of the three chain rules through the
        # public preimage machinery
        n, eta = 80, 0.3
        cert = quasi_chain(logistic39, 0.975, n, eta)
        orbit = point_orbit(logistic39, 0.975, n + 1)
        pts = [float(p) for p in orbit.points]
        a, b = logistic39.domain_floats
        crits = [c.location for c in logistic39.critical_points]

        def contains_crit(lo, hi):
            return any(lo <= c <= hi for c in crits)

        resets = []
        cur = (max(a, pts[n] - eta), min(b, pts[n] + eta))
        for k in range(n - 1, -1, -1):
            comps = preimage_components(logistic39, cur, 1)
            owner = None
            for c in comps:
                if c.lo - 1e-9 <= pts[k] <= c.hi + 1e-9:
                    owner = c
                    break
            assert owner is not None
            if contains_crit(owner.lo, owner.hi):
                if k >= 1:
                    resets.append(k)
                cur = (max(a, pts[k] - eta), min(b, pts[k] + eta))
            else:
                cur = (owner.lo, owner.hi)
        assert tuple(resets) == cert.reset_times


class TestShrinkCertificate:
    def test_ulam_verified_bound(self, ulam):
        cert = shrink_to_ce_bound(ulam, 1, 30, 0.5, 1e-3, 2.0, 4.0, 0.05)
        assert cert.diffeo_verified
        assert cert.log_bound <= cert.log_actual + 1e-12
        assert cert.log_actual == pytest.approx(30 * math.log(4), abs=1e-9)

    def test_padding_zero_branch(self, ulam):
        cert = shrink_to_ce_bound(ulam, 1, 10, 50.0, 1e-6, 2.0, 4.0, 0.05)
        assert cert.extra_depth == 0
        assert cert.diffeo_verified
        assert cert.log_bound <= cert.log_actual + 1e-12

    def test_huge_recurrence_exponent_still_sound(self, ulam):
        cert = shrink_to_ce_bound(ulam, 1, 5, 0.5, 8.0, 2.0, 4.0, 0.05)
        assert cert.extra_depth > 5 * math.log(4) / math.log(2)
        assert cert.diffeo_verified
        assert cert.log_bound <= cert.log_actual + 1e-12

    def test_hypothesis_failure_lists_indices(self, ulam):
        cert = shrink_to_ce_bound(ulam, 0.3, 3, 0.9, 1e-3, 2.0, 4.0, 0.45)
        assert not cert.diffeo_verified
        assert len(cert.failed_indices) >= 1
        assert cert.bound == 0.0

    def test_parameter_validation(self, ulam):
        with pytest.raises(DomainError):
            shrink_to_ce_bound(ulam, 1, 10, 0.5, 1e-3, 0.9, 4.0, 0.05)
        with pytest.raises(DomainError):
            shrink_to_ce_bound(ulam, 1, 10, 0.5, 1e-3, 2.0, 3.0, 0.05)


class TestChainConstants:
    def test_estimates_are_sane(self, ulam):
        c = estimate_chain_constants(ulam)
        assert 1.8 <= c.rate <= 2.2
        assert c.shrink_constant > 2.0
        assert c.koebe_constant >= 1.0
        assert c.nonflat_ell == 2.0
        assert c.nonflat_L >= 1.0
        assert 0 < c.combined_radius <= c.shrink_radius
        assert c.reset_penalty_strong > c.reset_penalty_weak > 0
        assert 0 < c.return_budget_strong < c.return_budget_weak
