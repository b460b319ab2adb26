import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from kpztails import geometry as geo
from kpztails.errors import DomainError
from kpztails.geometry import CaseLabel, TwoPointSpec


@st.composite
def two_point_specs(draw):
    theta = draw(st.floats(0.05, 50))
    b = draw(st.floats(-0.99, 10))
    a = b + draw(st.floats(0, 10))
    return TwoPointSpec(theta, a, b)


class TestTent:
    def test_examples(self):
        assert geo.tri(4, 2) == -4
        assert geo.tri(4, 1) == 0

    @given(st.floats(0.01, 100), st.floats(-10, 10))
    def test_majorises_parabola_with_tangency(self, theta, x):
        assert geo.tri(theta, x) >= -x * x - 1e-9 * (1 + x * x)
        r = math.sqrt(theta)
        assert geo.tri(theta, r) == pytest.approx(-theta)

    def test_point_hull_equals_tent(self):
        h = geo.point_hull(9.0)
        x = np.linspace(-3, 3, 61)
        np.testing.assert_allclose(h(x), geo.tri(9.0, x), atol=1e-12)


class TestTangency:
    def test_examples(self):
        assert geo.tangency_points(TwoPointSpec(1, 0, 0)) == pytest.approx((-2, 2))
        assert geo.tangency_points(TwoPointSpec(1, 3, 0))[0] == pytest.approx(-3)

    @given(two_point_specs())
    def test_tangent_line_touches_parabola(self, s):
        xl, xr = geo.tangency_points(s)
        r = s.root
        # slope of the line from the tangency point to the conditioning point equals -2 x_l
        k = (s.a * s.theta + xl * xl) / (-r - xl)
        assert k == pytest.approx(-2 * xl, rel=1e-9, abs=1e-9)
        k = (s.b * s.theta + xr * xr) / (r - xr)
        assert k == pytest.approx(-2 * xr, rel=1e-9, abs=1e-9)


class TestClassify:
    def test_examples(self, frozen):
        assert geo.classify(TwoPointSpec(1, 1, 1)) is CaseLabel.TWO_EXTREME
        assert geo.classify(TwoPointSpec(1, 9, 0)) is CaseLabel.ONE_EXTREME
        assert geo.classify(TwoPointSpec(1, 0.5, -0.9)) is CaseLabel.INFINITELY_MANY
        assert sorted(geo.scaled_chord_roots(0.5, -0.9)) == pytest.approx(frozen["chord_roots_0.5_-0.9"], abs=1e-12)
        assert sorted(geo.scaled_chord_roots(9, 0)) == pytest.approx(frozen["chord_roots_9_0"], abs=1e-12)

    @given(two_point_specs(), st.floats(0.01, 100))
    def test_theta_invariant(self, s, theta2):
        assert geo.classify(s) is geo.classify(TwoPointSpec(theta2, s.a, s.b))

    @given(two_point_specs())
    def test_chord_roots_lie_on_parabola(self, s):
        roots = geo.scaled_chord_roots(s.a, s.b)
        assume(roots is not None)
        for u in roots:
            x = u * s.root
            assert geo.chord(s, x) == pytest.approx(-x * x, abs=1e-7 * (1 + s.theta * (1 + abs(s.a))))

    def test_invalid_spec(self):
        with pytest.raises(DomainError):
            TwoPointSpec(1, 0, 0.5)
        with pytest.raises(DomainError):
            TwoPointSpec(0, 0, 0)


class TestRates:
    def test_one_point(self, frozen):
        assert geo.one_point_log_rate(4) == pytest.approx(frozen["one_point_rate_theta4"], rel=1e-12)

    def test_against_hull_oracle(self, frozen):
        for key, v in frozen["two_point_rate"].items():
            a, b, t = map(float, key.split(","))
            assert geo.two_point_log_rate(TwoPointSpec(t, a, b)) == pytest.approx(v, rel=1e-5)

    def test_boundary_consistency_at_origin(self):
        assert geo.two_point_case1_rate(1, 0, 0) == pytest.approx(8 / 3, rel=1e-14)
        assert geo.two_point_case2_rate(1, 0, 0) == pytest.approx(8 / 3, rel=1e-14)

    def test_tangent_pair_bracket_halves(self):
        # on the tangent locus the case-1 bracket is twice 96 z^2 + 32
        for z in (0.0, 0.25, 0.5, 0.75):
            a, b = geo.fkg_tangent_pair(z)
            bracket = geo.two_point_case1_rate(1, a, b) * 24
            assert bracket / 2 == pytest.approx(96 * z * z + 32, rel=1e-13)

    @given(st.floats(0, 1), st.floats(0.01, 100))
    def test_cases_agree_on_tangent_locus(self, z, theta):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a, b = geo.fkg_tangent_pair(z)
        assume(b > -1)
        c1 = geo.two_point_case1_rate(theta, a, b)
        c2 = geo.two_point_case2_rate(theta, a, b)
        assert c1 == pytest.approx(c2, rel=1e-12)
        assert (a - b) ** 2 == pytest.approx(8 * (a + b), abs=1e-12)

    @given(two_point_specs())
    def test_rate_between_one_point_and_product(self, s):
        r = geo.two_point_log_rate(s)
        single = geo.two_point_case3_rate(s.theta, s.a)
        assert r >= single * (1 - 1e-12)
        assert r <= geo.two_point_case2_rate(s.theta, s.a, s.b) * (1 + 1e-12) + 1e-12

    def test_collapse_to_single_point(self):
        s = TwoPointSpec(2.0, 0.5, -0.9)
        assert geo.two_point_log_rate(s) - geo.two_point_case3_rate(2.0, 0.5) == pytest.approx(
            geo.one_point_log_rate(0.1 * 2.0)
        )

    def test_tangent_pair_example(self):
        assert geo.fkg_tangent_pair(0.5) == (1.25, -0.75)
        with pytest.warns(UserWarning):
            geo.fkg_tangent_pair(1.0)
        with pytest.raises(DomainError):
            geo.fkg_tangent_pair(1.5)


class TestRecursion:
    def test_examples(self):
        assert geo.lower_bound_recursion(0)[:2] == (5.0, 0)
        assert geo.lower_bound_recursion(1)[:2] == (2.25, 1)
        assert geo.lower_bound_recursion(20)[0] == pytest.approx(4 / 3, abs=1e-9)

    def test_closed_form(self):
        for n in range(21):
            c, g, r = geo.lower_bound_recursion(n)
            cc, gc, rc = geo.lower_bound_recursion_closed_form(n)
            assert abs(c - cc) < 1e-9 and g == gc and r == rc

    def test_negative(self):
        with pytest.raises(DomainError):
            geo.lower_bound_recursion(-1)


class TestHull:
    def test_origin_example(self):
        h = geo.hull(TwoPointSpec(1, 0, 0))
        assert h.tangency == pytest.approx((-2, 2))
        assert h(-1.0) == pytest.approx(0) and h(1.0) == pytest.approx(0)

    @given(two_point_specs())
    def test_concave_majorant(self, s):
        h = geo.hull(s)
        lo = geo.tangency_points(s)[0] - 1
        hi = geo.tangency_points(s)[1] + 1
        x = np.unique(np.concatenate([np.linspace(lo, hi, 801), h.tangency]))
        y = h(x)
        tol = 1e-8 * (1 + s.theta * (1 + s.a))
        assert np.all(y >= -(x**2) - tol)
        assert h(-s.root) >= s.a * s.theta - tol
        assert h(s.root) >= s.b * s.theta - tol
        # concavity on the mesh
        slopes = np.diff(y) / np.diff(x)
        assert np.all(np.diff(slopes) <= tol * 1e3)
        # agrees with a numerical concave majorant of the same data
        xs = np.concatenate([x, [-s.root, s.root]])
        ys = np.concatenate([-(x**2), [s.a * s.theta, s.b * s.theta]])
        o = np.argsort(xs, kind="stable")
        maj = geo.concave_majorant(xs[o], ys[o])
        keep = np.isin(o, np.arange(x.size))
        # a mesh majorant cuts the parabola by chords, an O(dx^2) error
        dx = np.max(np.diff(x))
        assert np.max(np.abs(maj[keep] - y[o[keep]])) < dx * dx + tol

    def test_describe_is_json(self):
        d = geo.describe(TwoPointSpec(1, 0.5, -0.9))
        assert d["case"] == "InfinitelyMany"
        json.dumps(d)
