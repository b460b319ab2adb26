import math
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpztails import estimators as est
from kpztails import geometry as geo
from kpztails.brownian import SampledPath, log_normal_tail, uniform_grid
from kpztails.errors import DomainError
from kpztails.rng import RngHandle


class TestAvoidanceSpec:
    def test_endpoints_must_clear_barrier(self):
        with pytest.raises(DomainError):
            est.AvoidanceSpec(-1, 1, -1.0, 0.0)
        with pytest.raises(DomainError):
            est.AvoidanceSpec(1, -1, 0.0, 0.0)


class TestMcAvoidance:
    def test_short_interval_is_likely(self):
        spec = est.AvoidanceSpec(0.9, 1.1, -0.81 + 1, -1.21 + 1)
        t = est.mc_avoidance(spec, 0.01, 20_000, RngHandle(0))
        assert t.p > 0.9

    def test_smc_matches_naive(self):
        spec = est.AvoidanceSpec.symmetric(1.5)
        a = est.mc_avoidance(spec, 0.01, 200_000, RngHandle(1), "naive")
        b = est.mc_avoidance(spec, 0.01, 32_000, RngHandle(2), "smc")
        assert abs(a.log_p - b.log_p) <= 3 * math.hypot(a.stderr_log, b.stderr_log)

    def test_inside_sandwich_at_z15(self):
        t = est.mc_avoidance(est.AvoidanceSpec.symmetric(1.5), 0.01, 200_000, RngHandle(3))
        with pytest.warns(UserWarning):
            lo = est.analytic_avoidance_lower_bound(-1.5, 1.5).log_p
        assert lo <= t.log_p + 3 * t.stderr_log
        assert t.log_p - 3 * t.stderr_log <= est.analytic_avoidance_upper_bound(1.5)

    def test_same_seed_same_bytes(self):
        spec = est.AvoidanceSpec.symmetric(1.0)
        a = est.mc_avoidance(spec, 0.02, 5_000, RngHandle(9), replicates=4)
        b = est.mc_avoidance(spec, 0.02, 5_000, RngHandle(9), replicates=4)
        assert repr(a) == repr(b)

    def test_process_pool_mapper_matches_serial(self):
        spec = est.AvoidanceSpec.symmetric(2.0)
        a = est.mc_avoidance(spec, 0.02, 4_000, RngHandle(5), "smc", replicates=4)
        with ProcessPoolExecutor(2) as pool:
            b = est.mc_avoidance(spec, 0.02, 4_000, RngHandle(5), "smc", replicates=4, mapper=pool.map)
        assert a.log_p == b.log_p and a.stderr_log == b.stderr_log

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            est.mc_avoidance(est.AvoidanceSpec.symmetric(1.0), 0.1, 10, RngHandle(0), "magic")

    @pytest.mark.slow
    def test_refinement_moves_down(self):
        spec = est.AvoidanceSpec.symmetric(1.5)
        coarse = est.mc_avoidance(spec, 0.02, 400_000, RngHandle(1))
        fine = est.mc_avoidance(spec, 0.01, 400_000, RngHandle(2))
        assert fine.log_p < coarse.log_p

    @pytest.mark.slow
    @pytest.mark.xfail(strict=True, reason="discrete-monitoring bias at step 0.01 is about 6 stderr at N=10^6")
    def test_refinement_change_within_two_stderr(self):
        spec = est.AvoidanceSpec.symmetric(1.5)
        a = est.mc_avoidance(spec, 0.01, 1_000_000, RngHandle(1))
        b = est.mc_avoidance(spec, 0.005, 1_000_000, RngHandle(2))
        assert abs(a.log_p - b.log_p) < 2 * math.hypot(a.stderr_log, b.stderr_log)


class TestSmc:
    def test_single_constraint_exact(self):
        # only one interior site is constrained: the answer is a normal tail
        g = uniform_grid(0, 1, 0.05)
        floor = np.full(g.size, -np.inf)
        floor[8] = 2.5
        t = est.smc_estimate(g, 0.0, 0.0, floor, 32_000, RngHandle(0))
        exact = log_normal_tail(2.5, math.sqrt(2 * 0.4 * 0.6))
        assert abs(t.log_p - exact) <= 3 * t.stderr_log + 0.02

    def test_needs_two_replicates(self):
        g = uniform_grid(0, 1, 0.1)
        with pytest.raises(DomainError):
            est.smc_estimate(g, 0, 0, np.full(g.size, -np.inf), 100, RngHandle(0), replicates=1)

    def test_guide_above_floor(self):
        g = uniform_grid(-2, 2, 0.05)
        floor = -(g**2)
        floor[0] = floor[-1] = -np.inf
        guide = est.guide_curve(g, floor, -3.0, -3.0)
        assert np.all(guide[1:-1] > floor[1:-1])
        assert guide[0] == -3.0 and guide[-1] == -3.0


class TestAnalyticBounds:
    def test_closed_form_example(self, frozen):
        lb = est.analytic_avoidance_lower_bound(0, 10)
        assert lb.log_p == pytest.approx(frozen["closed_form_avoid_L10"], rel=1e-12)
        assert not lb.flagged

    def test_short_interval_flagged(self):
        with pytest.warns(UserWarning):
            assert est.analytic_avoidance_lower_bound(-1, 1).flagged

    def test_upper_leading_example(self, frozen):
        assert est.analytic_avoidance_upper_bound(1.5, "leading") == pytest.approx(frozen["upper_leading_z1.5"])

    def test_upper_leading_order(self):
        assert est.analytic_avoidance_upper_bound(10, "leading") / (-2 * 1000 / 3) == pytest.approx(1, abs=0.05)

    @pytest.mark.parametrize("z", [3, 5, 10])
    def test_sandwich_valid(self, z):
        lo = est.analytic_avoidance_lower_bound(-z, z).log_p
        assert est.analytic_avoidance_upper_bound(z) >= lo
        assert est.analytic_avoidance_upper_bound(z) >= est.analytic_avoidance_lower_bound(-z, z, "mesh").log_p

    def test_mesh_spacing(self):
        e, n = est.mesh_spacing(8.0)
        assert e == pytest.approx(8 / 7) and n == 7
        e, n = est.mesh_spacing(6.0)
        assert e == pytest.approx(6 / 5)
        with pytest.raises(DomainError):
            est.mesh_spacing(3.0)

    def test_mesh_bound_below_mc(self):
        lb = est.analytic_avoidance_lower_bound(-3, 3, "mesh")
        assert math.isfinite(lb.log_p)
        t = est.mc_avoidance(est.AvoidanceSpec.symmetric(3.0), 0.01, 16_000, RngHandle(4), "smc")
        assert lb.log_p <= t.log_p + 3 * t.stderr_log

    @given(st.floats(0.5, 20))
    def test_leading_exponent_nonpositive(self, z):
        assert est.analytic_avoidance_upper_bound(z, "leading") <= 0


class TestOnePointTail:
    def test_tilted_matches_naive_at_theta1(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            t = est.tilted_one_point_tail(1.0, 200_000, RngHandle(4))
        n = est.naive_one_point_tail(1.0, 1_000_000, RngHandle(3))
        assert abs(t.log_p - n.log_p) <= 3 * math.hypot(t.stderr_log, n.stderr_log)

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            est.tilted_one_point_tail(0.0, 10, RngHandle(0))

    def test_fit_envelope_constant(self):
        C = est.fit_envelope_constant([-10.0, -20.0], [11.0, 18.0], [1.0, 2.0])
        assert C == pytest.approx(1.0)


class TestTwoPointTail:
    def test_hull_energy_matches_rate(self, frozen):
        for key, v in frozen["two_point_rate"].items():
            a, b, t = map(float, key.split(","))
            assert est.hull_energy_rate(geo.TwoPointSpec(t, a, b)) == pytest.approx(v, rel=1e-4)

    def test_origin_within_envelope(self):
        t = est.mc_two_point(geo.TwoPointSpec(1, 0, 0), 16_000, RngHandle(1))
        assert abs(-t.log_p - 8 / 3) <= 2 * geo.two_point_envelope(1.0) + 3 * t.stderr_log

    def test_smc_matches_naive(self):
        spec = geo.TwoPointSpec(1, 0, 0)
        a = est.mc_two_point(spec, 16_000, RngHandle(2), "smc")
        b = est.mc_two_point(spec, 200_000, RngHandle(3), "naive")
        assert abs(a.log_p - b.log_p) <= 3 * math.hypot(a.stderr_log, b.stderr_log)


@pytest.fixture(scope="module")
def report():
    return est.conditioned_shape(16.0, 600, RngHandle(3), chains=2)


class TestShape:
    def test_midpoint_rarely_far_below_tent(self, report):
        assert np.mean(report.midpoint_low > 5) < 0.05

    def test_outer_region(self, report):
        assert report.outer_p95 <= 3 * 16**0.25 * math.log(16)

    def test_inner_finite(self, report):
        assert math.isfinite(report.inner_median) and report.inner_median > 0

    def test_small_theta_rejected(self):
        with pytest.raises(DomainError):
            est.conditioned_shape(1.0, 10, RngHandle(0))


class TestDiagnostics:
    def test_rhat_iid(self):
        x = np.random.default_rng(0).standard_normal((4, 2000))
        assert est.split_rhat(x) == pytest.approx(1.0, abs=0.02)
        assert est.effective_sample_size(x) == pytest.approx(8000, rel=0.2)

    def test_rhat_detects_shift(self):
        x = np.random.default_rng(0).standard_normal((4, 2000))
        x[0] += 3
        assert est.split_rhat(x) > 1.2


class TestInequalities:
    def test_fkg_example(self):
        g = uniform_grid(0, 1, 0.02)
        rows = est.fkg_bk_report(2, [1, 0], [1, 0], g, [0.5, 1.0], 10_000, RngHandle(1))
        row = next(r for r in rows if r.label == "c1mid>0.5 & c1sup>1")
        assert row.passed
        assert all(r.passed for r in rows)

    def test_needs_two_curves(self):
        with pytest.raises(DomainError):
            est.fkg_bk_report(1, [1], [1], uniform_grid(0, 1, 0.1), [0.5], 10, RngHandle(0))

    def test_sup_interval_at_90th_percentile(self):
        header, rows = est.sup_interval_tail_check(None, 3, 10_000, RngHandle(2))
        assert len(rows) == 3 and rows[1].passed
        assert header["k"] == 3


class TestInitialData:
    def test_gaussian_integral(self, frozen):
        g = uniform_grid(-10, 10, 0.01)
        v = est.general_data_value(SampledPath(g, -(g**2)), SampledPath(g, np.zeros_like(g)), 1.0)
        assert v == pytest.approx(frozen["log_sqrt_pi"], abs=1e-3)

    @pytest.mark.parametrize("t", [0.5, 1.0, 8.0])
    def test_constant_window(self, t):
        g = uniform_grid(-3, 3, 0.01)
        f = np.where(np.abs(g) <= 1 + 1e-12, 0.0, -np.inf)
        v = est.general_data_value(SampledPath(g, np.full_like(g, 0.7)), SampledPath(g, f), t)
        assert v == pytest.approx(0.7 + math.log(2) / t ** (1 / 3), abs=1e-12)

    @given(st.floats(-2, 2), st.floats(0, 3), st.floats(0.1, 10))
    @settings(max_examples=50)
    def test_monotone_in_path(self, level, lift, t):
        g = uniform_grid(-2, 2, 0.05)
        f = SampledPath(g, -np.abs(g))
        a = est.general_data_value(SampledPath(g, level - g**2), f, t)
        b = est.general_data_value(SampledPath(g, level + lift - g**2), f, t)
        assert b >= a - 1e-12

    def test_all_minus_infinity(self):
        g = uniform_grid(-1, 1, 0.1)
        with pytest.raises(DomainError):
            est.general_data_value(SampledPath(g, np.zeros_like(g)), SampledPath(g, np.full_like(g, -np.inf)), 1.0)

    def test_hyp_examples(self):
        g = uniform_grid(-5, 5, 0.01)
        window = np.where(np.abs(g) <= 1 + 1e-12, 0.0, -np.inf)
        assert est.hyp_check(SampledPath(g, window), est.HypParams(1, 1, 1, 2)).passed
        quad = est.hyp_check(SampledPath(g, g**2), est.HypParams(1, 0.5, 1, 0.5))
        assert not quad.passed and not quad.growth_ok and abs(quad.first_violation) > 1
        empty = est.hyp_check(SampledPath(g, np.full_like(g, -np.inf)), est.HypParams(1, 1, 1, 0.5))
        assert not empty.passed and empty.growth_ok and not empty.mass_ok

    def test_hyp_params_validated(self):
        with pytest.raises(DomainError):
            est.HypParams(0, 1, 1, 1)
