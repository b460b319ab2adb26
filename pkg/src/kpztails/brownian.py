"""Brownian bridges on explicit grids.

All curves here are carried as values on a strictly increasing grid and events
(avoidance, suprema) are checked at grid points only; :func:`bridge_sups` is
the one exception and fills in the continuous maximum.  Bridges are sampled
left to right from their exact Gaussian conditionals, so the finite-dimensional
law on the grid is exact for any spacing.

The rate is the variance per unit length of the underlying Brownian motion;
most of the package uses rate 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DomainError
from .rng import RngHandle, as_generator
from .stats import TailEstimate, binomial_estimate

DEFAULT_RATE = 2.0
DEFAULT_STEP = 0.01
_GRID_TOL = 1e-9


@dataclass(frozen=True)
class BridgeSpec:
    left_x: float
    right_x: float
    left_y: float
    right_y: float
    rate: float = DEFAULT_RATE

    def __post_init__(self) -> None:
        if not self.left_x < self.right_x:
            raise DomainError(f"need left_x < right_x, got {self.left_x}, {self.right_x}")
        if not self.rate > 0:
            raise DomainError(f"rate must be positive, got {self.rate}")

    @property
    def length(self) -> float:
        return self.right_x - self.left_x

    def reversed(self) -> "BridgeSpec":
        """The bridge seen under x -> left_x + right_x - x."""
        return BridgeSpec(self.left_x, self.right_x, self.right_y, self.left_y, self.rate)


@dataclass(frozen=True)
class SampledPath:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise DomainError("grid and values must be 1-d of equal length >= 2")
        if np.any(np.diff(g) <= 0):
            raise DomainError("grid must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, x) -> np.ndarray:
        return np.interp(x, self.grid, self.values)

    def index_of(self, x: float) -> int:
        """Index of the grid point equal to ``x`` (up to 1e-9)."""
        i = int(np.argmin(np.abs(self.grid - x)))
        if abs(self.grid[i] - x) > _GRID_TOL * max(1.0, abs(x)):
            raise DomainError(f"{x} is not a grid point")
        return i


def _check_inside(spec: BridgeSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < spec.left_x) or np.any(x > spec.right_x):
        raise DomainError(f"x outside [{spec.left_x}, {spec.right_x}]")
    return x


def bridge_mean(spec: BridgeSpec, x):
    x = _check_inside(spec, x)
    out = spec.left_y + (x - spec.left_x) / spec.length * (spec.right_y - spec.left_y)
    return float(out) if out.ndim == 0 else out


def bridge_variance(spec: BridgeSpec, x):
    x = _check_inside(spec, x)
    out = spec.rate * (x - spec.left_x) * (spec.right_x - x) / spec.length
    return float(out) if out.ndim == 0 else out


# -- grids -------------------------------------------------------------------

def uniform_grid(a: float, b: float, step: float = DEFAULT_STEP) -> np.ndarray:
    """Uniform grid on [a, b] whose spacing is at most ``step``."""
    if not b > a:
        raise DomainError("need b > a")
    n = max(1, int(math.ceil((b - a) / step - 1e-9)))
    return np.linspace(a, b, n + 1)


def grid_through(a: float, b: float, points: Sequence[float] = (), step: float = DEFAULT_STEP) -> np.ndarray:
    """Grid on [a, b] with spacing <= step that contains every point in ``points``."""
    knots = sorted({float(a), float(b), *(float(p) for p in points if a < p < b)})
    pieces = [uniform_grid(l, r, step)[:-1] for l, r in zip(knots[:-1], knots[1:])]
    return np.concatenate(pieces + [np.array([knots[-1]])])


def _check_grid(spec: BridgeSpec, grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
        raise DomainError("grid must be strictly increasing with >= 2 points")
    if abs(g[0] - spec.left_x) > _GRID_TOL or abs(g[-1] - spec.right_x) > _GRID_TOL:
        raise DomainError("grid endpoints must equal the bridge endpoints")
    return g


# -- sampling ----------------------------------------------------------------

def step_coefficients(grid: np.ndarray, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the left-to-right conditional steps of a bridge on ``grid``.

    Given the value ``v`` at ``grid[i]``, the value at ``grid[i+1]`` is normal
    with mean ``v + lam[i] * (right_y - v)`` and standard deviation ``sd[i]``.
    """
    g = np.asarray(grid, dtype=float)
    dx = np.diff(g)
    remaining = g[-1] - g[:-1]
    lam = dx / remaining
    sd = np.sqrt(rate * dx * (g[-1] - g[1:]) / remaining)
    return lam, sd


def bridge_noise(grid: np.ndarray, n: int, rng, rate: float = DEFAULT_RATE) -> np.ndarray:
    """``n`` zero-endpoint bridges on ``grid``; shape ``(n, len(grid))``.

    The left-to-right recursion ``v[i+1] = (1 - lam[i]) v[i] + sd[i] z[i]``
    telescopes: ``v[j] / (b - x[j])`` is a cumulative sum, which is how it is
    evaluated here.
    """
    gen = as_generator(rng)
    g = np.asarray(grid, dtype=float)
    out = np.zeros((n, g.size))
    if g.size <= 2:
        return out
    _, sd = step_coefficients(g, rate)
    z = gen.standard_normal((n, g.size - 2))
    rem = g[-1] - g[1:-1]
    out[:, 1:-1] = rem * np.cumsum(sd[:-1] / rem * z, axis=1)
    return out


def sample_bridges(spec: BridgeSpec, grid, n: int, rng) -> np.ndarray:
    """``n`` independent bridges of law ``spec`` on ``grid``; shape ``(n, len(grid))``."""
    g = _check_grid(spec, grid)
    lin = spec.left_y + (g - g[0]) / spec.length * (spec.right_y - spec.left_y)
    out = bridge_noise(g, n, rng, spec.rate) + lin
    out[:, 0] = spec.left_y
    out[:, -1] = spec.right_y
    return out


def sample_bridge(spec: BridgeSpec, grid, rng: RngHandle | np.random.Generator) -> SampledPath:
    g = _check_grid(spec, grid)
    return SampledPath(g, sample_bridges(spec, g, 1, rng)[0])


def bridge_sups(paths: np.ndarray, grid, rng, rate: float = DEFAULT_RATE) -> np.ndarray:
    """Supremum of the continuous bridges through the grid values ``paths``.

    Between grid points the path is a bridge from ``a`` to ``b`` whose maximum
    satisfies ``P(max >= m) = exp(-2 (m - a)(m - b) / (rate dx))``, which is
    inverted with one uniform per cell.
    """
    gen = as_generator(rng)
    g = np.asarray(grid, dtype=float)
    p = np.atleast_2d(np.asarray(paths, dtype=float))
    if p.shape[1] != g.size:
        raise DomainError("paths and grid disagree in length")
    a, b = p[:, :-1], p[:, 1:]
    log_u = np.log(gen.uniform(size=a.shape))
    m = 0.5 * (a + b + np.sqrt((a - b) ** 2 - 2.0 * rate * np.diff(g) * log_u))
    return m.max(axis=1)


# -- decomposition -----------------------------------------------------------

def _sub_indices(path: SampledPath, sub: tuple[float, float]) -> tuple[int, int]:
    a, b = sub
    if not a < b:
        raise DomainError("sub-interval must have a < b")
    return path.index_of(a), path.index_of(b)


def affine_part(path: SampledPath, sub: tuple[float, float]) -> SampledPath:
    i, j = _sub_indices(path, sub)
    g = path.grid[i : j + 1]
    fa, fb = path.values[i], path.values[j]
    vals = (g[-1] - g) / (g[-1] - g[0]) * fa + (g - g[0]) / (g[-1] - g[0]) * fb
    return SampledPath(g, vals)


def bridge_of(path: SampledPath, sub: tuple[float, float]) -> SampledPath:
    """Restriction of ``path`` to ``sub`` minus the chord through its endpoint values."""
    i, j = _sub_indices(path, sub)
    aff = affine_part(path, sub)
    vals = path.values[i : j + 1] - aff.values
    vals[0] = vals[-1] = 0.0
    return SampledPath(aff.grid, vals)


# -- closed forms ------------------------------------------------------------

def sup_tail_exact(M: float) -> float:
    """P(sup B >= M * sigma_I) for a zero-endpoint bridge, sigma_I the peak sd."""
    if M < 0:
        raise DomainError("M must be non-negative")
    return math.exp(-0.5 * M * M)


def restricted_sup_bound(M: float) -> float:
    """Upper bound on P(sup_J B >= M sigma_J) for any sub-interval J."""
    if M <= 0:
        raise DomainError("M must be positive")
    return min(1.0, 3.0 * math.exp(-M * M / 8.0))


def normal_tail(x: float, sigma: float = 1.0) -> float:
    return float(special.ndtr(-x / sigma))


def log_normal_tail(x: float, sigma: float = 1.0) -> float:
    return float(special.log_ndtr(-x / sigma))


def gaussian_tail_sandwich(x: float, sigma: float) -> tuple[float, float]:
    """Lower and upper bounds on P(N(0, sigma^2) >= x), valid for x >= sqrt(4/3) sigma."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if x < math.sqrt(4.0 / 3.0) * sigma:
        raise DomainError(f"need x >= sqrt(4/3)*sigma, got x={x}, sigma={sigma}")
    e = math.exp(-x * x / (2.0 * sigma * sigma))
    lower = sigma / (4.0 * x) / math.sqrt(2.0 * math.pi) * e
    return lower, e


def log_gaussian_tail_sandwich(x: float, sigma: float) -> tuple[float, float]:
    """Log of :func:`gaussian_tail_sandwich`; stays finite far in the tail."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    if x < math.sqrt(4.0 / 3.0) * sigma:
        raise DomainError(f"need x >= sqrt(4/3)*sigma, got x={x}, sigma={sigma}")
    q = -x * x / (2.0 * sigma * sigma)
    return q + math.log(sigma / (4.0 * x)) - 0.5 * math.log(2.0 * math.pi), q


def bridge_integral_variance(z: float, rate: float = DEFAULT_RATE) -> float:
    """Variance of the integral over [-z, z] of a zero-endpoint bridge.

    Equals ``rate * (2z)^3 / 12``, i.e. ``4 z^3 / 3`` at rate 2.
    """
    if not z > 0:
        raise DomainError("z must be positive")
    return rate * (2.0 * z) ** 3 / 12.0


def trapezoid(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Trapezoid integral along the last axis."""
    dx = np.diff(grid)
    return 0.5 * np.sum((values[..., 1:] + values[..., :-1]) * dx, axis=-1)


# -- Monte Carlo -------------------------------------------------------------

def line_avoidance_tail(
    K: float,
    r: float,
    eta: float,
    N: int,
    rng,
    grid_step: float = 0.05,
    batch: int = 20_000,
) -> TailEstimate:
    """P(inf over [0, r] of B < -eta K) for the rate-2 bridge (0,0) -> (r, K r).

    The infimum is taken over grid points, so the estimate is biased low by the
    excursions between them; refine ``grid_step`` to check.
    """
    if K < 0.5 * max(1.0, 1.0 / eta):
        raise DomainError("need K >= max(1, 1/eta)/2")
    gen = as_generator(rng)
    spec = BridgeSpec(0.0, r, 0.0, K * r)
    grid = uniform_grid(0.0, r, grid_step)
    hits = 0
    left = N
    while left > 0:
        m = min(batch, left)
        paths = sample_bridges(spec, grid, m, gen)
        hits += int(np.count_nonzero(paths.min(axis=1) < -eta * K))
        left -= m
    return binomial_estimate(hits, N, "naive", K=K, r=r, eta=eta, grid_step=grid_step)


def fit_gaussian_decay(Ks: Sequence[float], log_ps: Sequence[float]) -> tuple[float, float]:
    """Least-squares ``(C, c)`` in ``log p ~ log C - c K^2`` over finite entries."""
    K = np.asarray(Ks, dtype=float)
    lp = np.asarray(log_ps, dtype=float)
    ok = np.isfinite(lp)
    if ok.sum() < 2:
        raise ValueError("need at least two finite log-probabilities")
    slope, intercept = np.polyfit(K[ok] ** 2, lp[ok], 1)
    return math.exp(intercept), -slope
