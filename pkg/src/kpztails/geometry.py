"""Tangent-line geometry over the parabola ``-x^2`` and the closed-form tail rates.

Rates are returned as positive exponents: a probability is ``exp(-rate)`` to
leading order.  Error-term shapes live in the ``*_envelope`` helpers and are
never folded into a rate.

The formulas are stated for every valid ``(theta, a, b)``; whether ``theta``
is large enough for them to be meaningful is the caller's business.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_ROOT_RTOL = 1e-12


class CaseLabel(str, enum.Enum):
    TWO_EXTREME = "TwoExtreme"
    INFINITELY_MANY = "InfinitelyMany"
    ONE_EXTREME = "OneExtreme"


@dataclass(frozen=True)
class TwoPointSpec:
    theta: float
    a: float
    b: float

    def __post_init__(self) -> None:
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if not (self.a >= self.b > -1):
            raise DomainError(f"need a >= b > -1, got a={self.a}, b={self.b}")

    @property
    def root(self) -> float:
        return math.sqrt(self.theta)


def parabola(x):
    return -np.asarray(x, dtype=float) ** 2


def tri(theta: float, x):
    """The tent ``-2 sqrt(theta) |x| + theta``."""
    if not theta > 0:
        raise DomainError("theta must be positive")
    out = -2.0 * math.sqrt(theta) * np.abs(np.asarray(x, dtype=float)) + theta
    return float(out) if out.ndim == 0 else out


def tangency_points(spec: TwoPointSpec) -> tuple[float, float]:
    """Where the outer tangents through the two conditioning points touch ``-x^2``."""
    r = spec.root
    return -(1.0 + math.sqrt(1.0 + spec.a)) * r, (1.0 + math.sqrt(1.0 + spec.b)) * r


def inner_tangency_points(spec: TwoPointSpec) -> tuple[float, float]:
    """Tangency of the tangent from the left point going right, and vice versa."""
    r = spec.root
    return (math.sqrt(1.0 + spec.a) - 1.0) * r, -(math.sqrt(1.0 + spec.b) - 1.0) * r


def chord_slope(spec: TwoPointSpec) -> float:
    return 0.5 * (spec.b - spec.a) * spec.root


def chord(spec: TwoPointSpec, x):
    """The line through ``(-sqrt(theta), a theta)`` and ``(sqrt(theta), b theta)``."""
    x = np.asarray(x, dtype=float)
    out = chord_slope(spec) * (x + spec.root) + spec.a * spec.theta
    return float(out) if out.ndim == 0 else out


def chord_discriminant(a: float, b: float) -> float:
    """Discriminant (divided by theta) of ``-x^2 = chord(x)``; >= 0 iff they meet."""
    return 0.25 * (a - b) ** 2 - 2.0 * (a + b)


def scaled_chord_roots(a: float, b: float) -> tuple[float, float] | None:
    """Roots of ``-x^2 = chord(x)`` in units of ``sqrt(theta)``, or None if none are real."""
    disc = chord_discriminant(a, b)
    if disc < 0:
        return None
    s = 0.5 * (b - a)
    h = math.sqrt(disc)
    return (-s - h) / 2.0, (-s + h) / 2.0


def classify(spec: TwoPointSpec) -> CaseLabel:
    a, b = spec.a, spec.b
    if (a - b) ** 2 <= 8.0 * (a + b):
        return CaseLabel.TWO_EXTREME
    roots = scaled_chord_roots(a, b)
    assert roots is not None  # (a-b)^2 > 8(a+b) forces a real pair
    tol = 1.0 + _ROOT_RTOL
    if all(-tol <= u <= tol for u in roots):
        return CaseLabel.INFINITELY_MANY
    return CaseLabel.ONE_EXTREME


def two_point_case1_rate(theta: float, a: float, b: float) -> float:
    bracket = 3 * (a - b) ** 2 + 24 * (a + b) + 16 * ((1 + a) ** 1.5 + (1 + b) ** 1.5) + 32
    return theta**1.5 / 24.0 * bracket


def two_point_case2_rate(theta: float, a: float, b: float) -> float:
    return 4.0 / 3.0 * theta**1.5 * ((1 + a) ** 1.5 + (1 + b) ** 1.5)


def two_point_case3_rate(theta: float, a: float) -> float:
    return 4.0 / 3.0 * theta**1.5 * (1 + a) ** 1.5


def two_point_log_rate(spec: TwoPointSpec) -> float:
    label = classify(spec)
    if label is CaseLabel.TWO_EXTREME:
        return two_point_case1_rate(spec.theta, spec.a, spec.b)
    if label is CaseLabel.INFINITELY_MANY:
        return two_point_case2_rate(spec.theta, spec.a, spec.b)
    return two_point_case3_rate(spec.theta, spec.a)


def one_point_log_rate(theta: float) -> float:
    if not theta > 0:
        raise DomainError("theta must be positive")
    return 4.0 / 3.0 * theta**1.5


def one_point_envelope(theta: float) -> float:
    """Shape of the one-point error term, ``theta^{3/4}``."""
    return theta**0.75


def two_point_envelope(theta: float) -> float:
    """Shape of the two-point error term, ``theta^{3/4} + theta^{1/2} log theta`` (log clipped at 0)."""
    return theta**0.75 + math.sqrt(theta) * max(math.log(theta), 0.0)


def fkg_tangent_pair(z: float) -> tuple[float, float]:
    """``(a, b)`` whose chord is tangent to the parabola at ``z sqrt(theta)``."""
    if not 0.0 <= z <= 1.0:
        raise DomainError("need 0 <= z <= 1")
    if z == 1.0:
        warnings.warn("z = 1 puts b on the boundary b = -1", stacklevel=2)
    return z * z + 2 * z, z * z - 2 * z


def lower_bound_recursion(n: int) -> tuple[float, int, int]:
    """Iterate ``C <- 1 + C/4, gamma <- 2 gamma + 1, theta_ratio <- 4 theta_ratio`` n times from (5, 0, 1)."""
    if n < 0:
        raise DomainError("n must be non-negative")
    C, gamma, ratio = 5.0, 0, 1
    for _ in range(n):
        C, gamma, ratio = 1.0 + C / 4.0, 2 * gamma + 1, 4 * ratio
    return C, gamma, ratio


def lower_bound_recursion_closed_form(n: int) -> tuple[float, int, int]:
    return 4.0 / 3.0 * (1.0 + 11.0 * 4.0 ** (-n - 1)), 2**n - 1, 4**n


# -- hulls -------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    slope: float
    intercept: float
    lo: float
    hi: float

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


@dataclass(frozen=True)
class Hull:
    """Least concave majorant of ``-x^2`` and finitely many points above it.

    Equal to ``-x^2`` outside ``intervals`` and piecewise linear on them.
    """

    tangency: tuple[float, ...]
    segments: tuple[Segment, ...]
    intervals: tuple[tuple[float, float], ...]
    kinks: tuple[tuple[float, float], ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = -(x**2)
        for seg in self.segments:
            m = (x >= seg.lo) & (x <= seg.hi)
            out = np.where(m, seg(x), out)
        return float(out) if out.ndim == 0 else out


def _line(x0: float, y0: float, x1: float, y1: float) -> Segment:
    k = (y1 - y0) / (x1 - x0)
    return Segment(k, y0 - k * x0, x0, x1)


def hull(spec: TwoPointSpec) -> Hull:
    r, th = spec.root, spec.theta
    A, B = (-r, spec.a * th), (r, spec.b * th)
    xl, xr = tangency_points(spec)
    xin_l, xin_r = inner_tangency_points(spec)
    label = classify(spec)
    if label is CaseLabel.TWO_EXTREME:
        segs = (
            _line(xl, -xl * xl, *A),
            _line(*A, *B),
            _line(*B, xr, -xr * xr),
        )
        return Hull((xl, xr), segs, ((xl, xr),), (A, B))
    if label is CaseLabel.INFINITELY_MANY:
        segs = (
            _line(xl, -xl * xl, *A),
            _line(*A, xin_l, -xin_l * xin_l),
            _line(xin_r, -xin_r * xin_r, *B),
            _line(*B, xr, -xr * xr),
        )
        return Hull((xl, xin_l, xin_r, xr), segs, ((xl, xin_l), (xin_r, xr)), (A, B))
    segs = (_line(xl, -xl * xl, *A), _line(*A, xin_l, -xin_l * xin_l))
    return Hull((xl, xin_l), segs, ((xl, xin_l),), (A,))


def point_hull(theta: float) -> Hull:
    """Hull of ``-x^2`` and the single point ``(0, theta)``; equals ``tri`` on its interval."""
    if not theta > 0:
        raise DomainError("theta must be positive")
    r = math.sqrt(theta)
    segs = (_line(-r, -theta, 0.0, theta), _line(0.0, theta, r, -theta))
    return Hull((-r, r), segs, ((-r, r),), ((0.0, theta),))


def concave_majorant(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least concave majorant of the points ``(x_i, y_i)`` evaluated on ``x``.

    ``x`` must be increasing; entries with ``y = -inf`` are ignored.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    idx = np.flatnonzero(np.isfinite(y))
    hull_pts: list[int] = []
    for i in idx:
        while len(hull_pts) >= 2:
            i0, i1 = hull_pts[-2], hull_pts[-1]
            # drop i1 if it lies on or below the segment i0 -> i
            cross = (x[i1] - x[i0]) * (y[i] - y[i0]) - (y[i1] - y[i0]) * (x[i] - x[i0])
            if cross >= 0:
                hull_pts.pop()
            else:
                break
        hull_pts.append(int(i))
    hx, hy = x[hull_pts], y[hull_pts]
    return np.interp(x, hx, hy)


def describe(spec: TwoPointSpec) -> dict:
    """Everything the ``geometry`` CLI reports, as plain JSON-able values."""
    h = hull(spec)
    label = classify(spec)
    roots = scaled_chord_roots(spec.a, spec.b)
    return {
        "theta": spec.theta,
        "a": spec.a,
        "b": spec.b,
        "case": label.value,
        "tangency_points": list(tangency_points(spec)),
        "hull_breakpoints": sorted({p for s in h.segments for p in (s.lo, s.hi)}),
        "I_lin": [list(iv) for iv in h.intervals],
        "chord_roots": None if roots is None else [u * spec.root for u in roots],
        "two_point_log_rate": two_point_log_rate(spec),
        "one_point_log_rate_left": one_point_log_rate((1 + spec.a) * spec.theta),
        "one_point_log_rate_right": one_point_log_rate((1 + spec.b) * spec.theta),
        "envelope": two_point_envelope(spec.theta),
    }
