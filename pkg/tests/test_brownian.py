import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpztails.brownian import (
    BridgeSpec,
    SampledPath,
    affine_part,
    bridge_integral_variance,
    bridge_mean,
    bridge_of,
    bridge_sups,
    bridge_variance,
    fit_gaussian_decay,
    gaussian_tail_sandwich,
    grid_through,
    line_avoidance_tail,
    log_gaussian_tail_sandwich,
    normal_tail,
    restricted_sup_bound,
    sample_bridge,
    sample_bridges,
    sup_tail_exact,
    trapezoid,
    uniform_grid,
)
from kpztails.errors import DomainError
from kpztails.rng import RngHandle
from kpztails.stats import ks_statistic

reals = st.floats(-50, 50, allow_nan=False)


@st.composite
def specs(draw):
    a = draw(st.floats(-20, 20))
    length = draw(st.floats(0.01, 20))
    return BridgeSpec(a, a + length, draw(reals), draw(reals), draw(st.floats(0.1, 5)))


class TestBridgeSpec:
    def test_rejects_empty_interval(self):
        with pytest.raises(DomainError):
            BridgeSpec(1.0, 1.0, 0.0, 0.0)

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(DomainError):
            BridgeSpec(0.0, 1.0, 0.0, 0.0, rate=0.0)

    def test_mean_outside_interval(self):
        with pytest.raises(DomainError):
            bridge_mean(BridgeSpec(0, 1, 0, 0), 1.5)


class TestMoments:
    def test_variance_examples(self, frozen):
        assert bridge_variance(BridgeSpec(-2, 2, 0, 0), 0.0) == pytest.approx(frozen["bridge_variance"]["rate2_[-2,2]_x0"])
        assert bridge_variance(BridgeSpec(0, 1, 0, 0, 1.0), 0.5) == pytest.approx(
            frozen["bridge_variance"]["rate1_[0,1]_x0.5"]
        )

    @given(specs(), st.floats(0, 1))
    def test_mean_is_linear_and_variance_vanishes_at_ends(self, s, u):
        x = s.left_x + u * s.length
        m = bridge_mean(s, x)
        assert m == pytest.approx((1 - u) * s.left_y + u * s.right_y, abs=1e-9 * (1 + abs(s.left_y) + abs(s.right_y)))
        assert bridge_variance(s, s.left_x) == 0.0
        assert bridge_variance(s, s.right_x) == pytest.approx(0.0, abs=1e-12 * s.length)
        assert bridge_variance(s, x) <= s.rate * s.length / 4 * (1 + 1e-12)

    @given(specs(), st.floats(0, 1))
    def test_reversal_symmetry(self, s, u):
        x = s.left_x + u * s.length
        xr = min(max(s.left_x + s.right_x - x, s.left_x), s.right_x)
        r = s.reversed()
        assert bridge_mean(r, xr) == pytest.approx(bridge_mean(s, x), abs=1e-7)
        assert bridge_variance(r, xr) == pytest.approx(bridge_variance(s, x), abs=1e-7)

    def test_empirical_midpoint_moments(self):
        s = BridgeSpec(0.0, 1.0, 1.0, 3.0)
        grid = uniform_grid(0, 1, 0.05)
        p = sample_bridges(s, grid, 100_000, RngHandle(1).generator())
        mid = p[:, 10]
        n = mid.size
        assert abs(mid.mean() - 2.0) <= 4 * math.sqrt(0.5 / n)
        # var of the sample variance of a normal is 2 sigma^4 / (n - 1)
        assert abs(mid.var(ddof=1) - 0.5) <= 4 * math.sqrt(2 * 0.25 / (n - 1))


class TestSampling:
    def test_endpoints_exact(self):
        s = BridgeSpec(-1, 2, 0.3, -0.7)
        p = sample_bridge(s, grid_through(-1, 2, [0.5], 0.1), RngHandle(3))
        assert p.values[0] == 0.3 and p.values[-1] == -0.7
        p.index_of(0.5)

    def test_grid_must_span_interval(self):
        with pytest.raises(DomainError):
            sample_bridge(BridgeSpec(0, 1, 0, 0), np.linspace(0, 0.5, 5), RngHandle(0))

    def test_same_handle_same_path(self):
        s = BridgeSpec(0, 1, 0, 0)
        g = uniform_grid(0, 1, 0.1)
        a = sample_bridge(s, g, RngHandle(5, 2))
        b = sample_bridge(s, g, RngHandle(5, 2))
        np.testing.assert_array_equal(a.values, b.values)

    def test_time_reversal_in_law(self):
        s = BridgeSpec(0, 1, 0.0, 1.0)
        g = uniform_grid(0, 1, 0.1)
        fwd = sample_bridges(s, g, 20_000, RngHandle(11).generator())
        rev = sample_bridges(s.reversed(), g, 20_000, RngHandle(12).generator())[:, ::-1]
        j = 3
        a, b = np.sort(fwd[:, j]), np.sort(rev[:, j])
        # two-sample KS at the 0.1% level
        cdf_b = lambda x: np.searchsorted(b, x, side="right") / b.size
        assert ks_statistic(a, cdf_b) < 1.95 * math.sqrt(2 / a.size)

    def test_nonuniform_grid_covariance(self):
        s = BridgeSpec(0, 2, 0, 0)
        g = np.array([0.0, 0.1, 0.7, 1.6, 2.0])
        p = sample_bridges(s, g, 200_000, RngHandle(2).generator())
        c = np.cov(p[:, 1:-1].T)
        x = g[1:-1]
        exact = 2 * np.minimum.outer(x, x) * (2 - np.maximum.outer(x, x)) / 2
        np.testing.assert_allclose(c, exact, atol=0.02)


class TestDecomposition:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25)
    def test_bridge_plus_affine_reassembles(self, seed):
        g = uniform_grid(0, 2, 0.1)
        p = sample_bridge(BridgeSpec(0, 2, 0.5, -1.0), g, RngHandle(seed))
        b = bridge_of(p, (0.4, 1.5))
        a = affine_part(p, (0.4, 1.5))
        np.testing.assert_allclose(b.values + a.values, p.values[4:16], atol=1e-12)
        assert b.values[0] == 0 and b.values[-1] == 0

    def test_sub_interval_must_be_on_grid(self):
        p = SampledPath(uniform_grid(0, 1, 0.1), np.zeros(11))
        with pytest.raises(DomainError):
            bridge_of(p, (0.05, 0.5))


class TestClosedForms:
    def test_sup_tail_half(self, frozen):
        assert sup_tail_exact(frozen["sup_tail_half_M"]) == pytest.approx(0.5, rel=1e-12)
        assert sup_tail_exact(0) == 1.0

    @given(st.floats(0, 10), st.floats(0, 10))
    def test_sup_tail_decreasing(self, a, b):
        lo, hi = sorted((a, b))
        assert sup_tail_exact(hi) <= sup_tail_exact(lo)

    def test_sandwich_example(self, frozen):
        lo, hi = gaussian_tail_sandwich(2.0, 1.0)
        assert (lo, hi) == pytest.approx(tuple(frozen["sandwich_sigma1_x2"]), rel=1e-12)
        assert lo <= frozen["normal_tail_x2"] <= hi
        assert normal_tail(2.0) == pytest.approx(frozen["normal_tail_x2"], rel=1e-12)

    def test_sandwich_domain(self):
        with pytest.raises(DomainError):
            gaussian_tail_sandwich(1.0, 1.0)

    @given(st.floats(1.1548, 30), st.floats(0.1, 10))
    def test_sandwich_contains_tail(self, u, sigma):
        x = u * sigma
        llo, lhi = log_gaussian_tail_sandwich(x, sigma)
        from scipy.special import log_ndtr

        t = float(log_ndtr(-u))
        assert llo <= t + 1e-12 and t <= lhi + 1e-12

    def test_restricted_bound_dominates_exact(self):
        for M in (0.5, 1, 2, 4):
            assert restricted_sup_bound(M) >= sup_tail_exact(M)

    def test_integral_variance(self, frozen):
        for z, v in frozen["integral_variance"].items():
            assert bridge_integral_variance(float(z)) == pytest.approx(v, rel=1e-10)


class TestMonteCarlo:
    def test_bridge_sups_dominate_grid_values(self):
        g = uniform_grid(0, 1, 0.1)
        gen = RngHandle(4).generator()
        p = sample_bridges(BridgeSpec(0, 1, 0.3, -0.2), g, 500, gen)
        s = bridge_sups(p, g, gen)
        assert s.shape == (500,)
        assert np.all(s >= p.max(axis=1))

    def test_bridge_sups_single_cell_law(self):
        # one cell from 0 to 0: P(max >= m) = exp(-m^2) at rate 2, length 1
        g = np.array([0.0, 1.0])
        s = bridge_sups(np.zeros((40_000, 2)), g, RngHandle(5))
        assert ks_statistic(s, lambda m: 1 - np.exp(-np.maximum(m, 0) ** 2)) < 1.63 / math.sqrt(40_000)

    def test_bridge_sups_shape_mismatch(self):
        with pytest.raises(DomainError):
            bridge_sups(np.zeros((3, 4)), np.linspace(0, 1, 5), RngHandle(0))

    def test_trapezoid_matches_numpy(self):
        g = np.linspace(0, 3, 31)
        v = np.sin(g)
        assert trapezoid(v, g) == pytest.approx(np.trapezoid(v, g))

    def test_line_avoidance_large_K_reported_as_zero(self):
        t = line_avoidance_tail(8.0, 4.0, 1.0, 200_000, RngHandle(0), grid_step=0.1)
        assert t.log_p == -math.inf and t.log_upper < math.log(1e-4)

    def test_line_avoidance_uniform_in_r(self):
        a = line_avoidance_tail(2.0, 4.0, 1.0, 100_000, RngHandle(1), grid_step=0.02)
        b = line_avoidance_tail(2.0, 64.0, 1.0, 100_000, RngHandle(2), grid_step=0.05)
        assert abs(a.log_p - b.log_p) < math.log(5)

    def test_fit_gaussian_decay_recovers_parameters(self):
        K = np.array([1.0, 1.5, 2.0, 2.5])
        C, c = fit_gaussian_decay(K, np.log(3.0) - 0.7 * K**2)
        assert C == pytest.approx(3.0) and c == pytest.approx(0.7)
