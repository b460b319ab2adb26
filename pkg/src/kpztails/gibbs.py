"""Finite line ensembles with Brownian Gibbs resampling.

Curves are indexed top to bottom (row 0 is the top curve).  The Gibbs weight of
an ensemble is

    W = exp(-sum over adjacent pairs of  int H(lower - upper) du)

with the pairs (upper boundary, curve 1), (curve i, curve i+1), ...,
(curve k, lower boundary); missing boundaries drop their term.  At finite
temperature ``H(x) = 2 t^{2/3} exp(t^{1/3} x)`` and integrals are trapezoid
sums on the grid; at zero temperature ``W`` is the indicator of strict
ordering at every interior grid point (endpoint data may touch).

Two samplers share that target:

* :func:`gibbs_sweep` resamples each curve in turn by Metropolis-Hastings with
  fresh Brownian-bridge proposals on blocks of width ``proposal_scale``
  (the whole interval by default).
* :func:`monotone_gibbs_sweep_pair` is a single-site heat-bath sweep driven by
  inverse-CDF maps of shared uniforms, which preserves pointwise order between
  two coupled ensembles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .brownian import DEFAULT_RATE, BridgeSpec, SampledPath, sample_bridges
from .errors import DomainError, FeasibilityError, LowAcceptanceError
from .rng import as_generator
from .stats import LogMoments, TailEstimate

# exp() of anything above this is treated as an infinite penalty
_EXP_CAP = 700.0
MAX_CONSECUTIVE_REJECTIONS = 10_000


@dataclass(frozen=True)
class Hamiltonian:
    """``t=None`` is the zero-temperature (hard non-intersection) limit."""

    t: float | None = None

    def __post_init__(self) -> None:
        if self.t is not None and not self.t > 0:
            raise DomainError("temperature parameter t must be positive")

    @property
    def zero_temperature(self) -> bool:
        return self.t is None

    def __call__(self, x):
        if self.t is None:
            return np.where(np.asarray(x) > 0, np.inf, 0.0)
        e = self.t ** (1 / 3) * np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return np.where(e > _EXP_CAP, np.inf, 2.0 * self.t ** (2 / 3) * np.exp(np.minimum(e, _EXP_CAP)))

    def __str__(self) -> str:
        return "zero-temperature" if self.t is None else f"H_t(t={self.t:g})"


ZERO_TEMPERATURE = Hamiltonian(None)


@dataclass(frozen=True)
class PinWindow:
    """Constraint ``center - eps <= curve_1(x) <= center + eps``."""

    x: float
    center: float
    eps: float

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise DomainError("pin window half-width must be positive")

    @property
    def low(self) -> float:
        return self.center - self.eps

    @property
    def high(self) -> float:
        return self.center + self.eps


@dataclass(frozen=True)
class ChainConfig:
    sup_bound: float = math.inf
    pins: tuple[PinWindow, ...] = ()
    sweeps_per_sample: int = 1
    proposal_scale: float = math.inf  # block width in x units

    def __post_init__(self) -> None:
        if not self.sup_bound > 0:
            raise DomainError("sup_bound must be positive")
        if not self.proposal_scale > 0:
            raise DomainError("proposal_scale must be positive")
        if self.sweeps_per_sample < 1:
            raise DomainError("sweeps_per_sample must be >= 1")
        for p in self.pins:
            if abs(p.low) > self.sup_bound and abs(p.high) > self.sup_bound and p.low * p.high > 0:
                raise DomainError(f"pin window at x={p.x} lies outside [-M, M]")
        object.__setattr__(self, "pins", tuple(sorted(self.pins, key=lambda p: p.x)))


@dataclass
class EnsembleState:
    """``k`` curves on a shared grid, plus optional boundary curves.

    ``curves[i]`` is curve ``i+1`` in the usual top-down numbering; the first
    and last columns are the entrance and exit data.
    """

    grid: np.ndarray
    curves: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    rate: float = DEFAULT_RATE

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.curves = np.atleast_2d(np.asarray(self.curves, dtype=float)).copy()
        if self.grid.ndim != 1 or self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly increasing with >= 2 points")
        if self.curves.shape[1] != self.grid.size:
            raise DomainError("every curve must live on the shared grid")
        for name in ("lower", "upper"):
            b = getattr(self, name)
            if b is not None:
                b = np.asarray(b.values if isinstance(b, SampledPath) else b, dtype=float)
                if b.shape != self.grid.shape:
                    raise DomainError(f"{name} boundary must live on the shared grid")
                setattr(self, name, b)

    @property
    def k(self) -> int:
        return self.curves.shape[0]

    @property
    def left_values(self) -> np.ndarray:
        return self.curves[:, 0].copy()

    @property
    def right_values(self) -> np.ndarray:
        return self.curves[:, -1].copy()

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.grid, self.curves.copy(), self.lower, self.upper, self.rate)

    def path(self, i: int) -> SampledPath:
        return SampledPath(self.grid, self.curves[i])

    def above(self, i: int) -> np.ndarray | None:
        return self.upper if i == 0 else self.curves[i - 1]

    def below(self, i: int) -> np.ndarray | None:
        return self.lower if i == self.k - 1 else self.curves[i + 1]

    def is_ordered(self) -> bool:
        """Strict order at interior grid points, weak order at the ends."""
        stack = [b for b in (self.upper,) if b is not None] + list(self.curves)
        stack += [b for b in (self.lower,) if b is not None]
        s = np.vstack(stack)
        gaps = s[:-1] - s[1:]
        return bool(np.all(gaps[:, 1:-1] > 0) and np.all(gaps[:, [0, -1]] >= 0))


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    dx = np.diff(grid)
    w = np.zeros(grid.size)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w


def _pair_penalty(lower: np.ndarray, upper: np.ndarray, h: Hamiltonian, w: np.ndarray) -> float:
    """``int H(lower - upper)`` as a trapezoid sum (``inf`` on overflow)."""
    vals = h(lower - upper)
    if not np.all(np.isfinite(vals)):
        return math.inf
    return float(np.dot(w, vals))


def log_boltzmann_weight(state: EnsembleState, h: Hamiltonian) -> float:
    if h.zero_temperature:
        return 0.0 if state.is_ordered() else -math.inf
    w = trapezoid_weights(state.grid)
    total = 0.0
    rows = [state.upper] + list(state.curves) + [state.lower]
    for up, lo in zip(rows[:-1], rows[1:]):
        if up is None or lo is None:
            continue
        total += _pair_penalty(lo, up, h, w)
        if total == math.inf:
            return -math.inf
    return -total


def estimate_partition_function(
    spec: BridgeSpec,
    lower: SampledPath | None,
    h: Hamiltonian,
    N: int,
    rng,
    grid=None,
    batch: int = 20_000,
) -> TailEstimate:
    """Monte Carlo mean of the Gibbs weight of one free bridge above ``lower``."""
    if N < 1:
        raise DomainError("N must be >= 1")
    if lower is None:
        return TailEstimate(0.0, 0.0, N, "exact")
    grid = lower.grid if grid is None else np.asarray(grid, dtype=float)
    if grid.shape != lower.grid.shape or not np.allclose(grid, lower.grid):
        raise DomainError("lower boundary must live on the sampling grid")
    gen = as_generator(rng)
    w = trapezoid_weights(grid)
    parts = []
    left = N
    while left > 0:
        m = min(batch, left)
        paths = sample_bridges(spec, grid, m, gen)
        parts.append(LogMoments.from_log_weights(_log_weight_rows(paths, lower.values, h, w)))
        left -= m
    return LogMoments.reduce(parts).to_estimate("naive", temperature=str(h))


def _log_weight_rows(paths: np.ndarray, lower: np.ndarray, h: Hamiltonian, w: np.ndarray) -> np.ndarray:
    gap = lower - paths
    if h.zero_temperature:
        ok = np.all(gap[:, 1:-1] < 0, axis=1)
        return np.where(ok, 0.0, -np.inf)
    vals = h(gap)
    with np.errstate(invalid="ignore"):
        out = -(vals @ w)
    return np.where(np.isfinite(out), out, -np.inf)


# -- the resampling chain ----------------------------------------------------

def _site_penalty(v, above, below, h: Hamiltonian, w) -> np.ndarray:
    """Per-site interaction of values ``v`` with neighbours (``inf`` where forbidden)."""
    pen = np.zeros_like(v)
    if h.zero_temperature:
        if above is not None:
            pen = np.where(v < above, pen, np.inf)
        if below is not None:
            pen = np.where(v > below, pen, np.inf)
        return pen
    if above is not None:
        pen = pen + h(v - above)
    if below is not None:
        pen = pen + h(below - v)
    return w * pen


def _block_anchors(m: int, dx_mean: float, width: float, gen: np.random.Generator) -> list[int]:
    if not math.isfinite(width) or width >= dx_mean * (m - 1):
        return [0, m - 1]
    nb = max(2, int(round(width / dx_mean)))
    off = int(gen.integers(1, nb + 1))
    return [0] + list(range(off, m - 1, nb)) + [m - 1]


def _fresh_segment(x: np.ndarray, ya: float, yb: float, rate: float, z: np.ndarray) -> np.ndarray:
    """Bridge values at ``x[1:-1]`` from ``(x[0], ya)`` to ``(x[-1], yb)`` driven by normals ``z``."""
    b = x[-1]
    dx = np.diff(x)
    sd = np.sqrt(rate * dx[:-1] * (b - x[1:-1]) / (b - x[:-1][:-1]))
    u = np.cumsum(sd * z / (b - x[1:-1]))
    lin = ya + (x[1:-1] - x[0]) / (b - x[0]) * (yb - ya)
    return lin + (b - x[1:-1]) * u


def _pin_log_prior(xs: np.ndarray, ys: np.ndarray, rate: float) -> float:
    """Log density (up to a constant) of a Brownian path passing through ``(xs, ys)``."""
    return float(-np.sum(np.diff(ys) ** 2 / (2.0 * rate * np.diff(xs))))


@dataclass
class ChainStats:
    proposals: int = 0
    accepted: int = 0
    consecutive_rejections: int = 0

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")


def _pins_for(state: EnsembleState, cfg: ChainConfig) -> dict[int, PinWindow]:
    out = {}
    for p in cfg.pins:
        j = state.path(0).index_of(p.x)
        if j in (0, state.grid.size - 1):
            raise DomainError("pin windows must sit at interior grid points")
        out[j] = p
    return out


def gibbs_sweep(
    state: EnsembleState,
    h: Hamiltonian,
    cfg: ChainConfig,
    rng,
    stats: ChainStats | None = None,
) -> EnsembleState:
    """One sweep: curves 1..k in order, each by MH block resampling.

    When curve ``i`` is updated, curve ``i-1`` already holds its new value and
    curve ``i+1`` its old one.  Returns a new state.
    """
    gen = as_generator(rng)
    stats = stats if stats is not None else ChainStats()
    new = state.copy()
    grid = new.grid
    m = grid.size
    wts = trapezoid_weights(grid)
    pins = _pins_for(new, cfg)
    dx_mean = (grid[-1] - grid[0]) / (m - 1)
    M = cfg.sup_bound
    for i in range(new.k):
        anchors = _block_anchors(m, dx_mean, cfg.proposal_scale, gen)
        above_full, below_full = new.above(i), new.below(i)
        cur = new.curves[i]
        for lo, hi in zip(anchors[:-1], anchors[1:]):
            if hi - lo < 2:
                continue
            sl = slice(lo + 1, hi)
            inner_pins = sorted(j for j in pins if lo < j < hi) if i == 0 else []
            knots = [lo] + inner_pins + [hi]
            prop = cur.copy()
            for j in inner_pins:
                prop[j] = gen.uniform(pins[j].low, pins[j].high)
            z = gen.standard_normal(hi - lo - 1)
            pos = 0
            for p, q in zip(knots[:-1], knots[1:]):
                n_in = q - p - 1
                if n_in > 0:
                    prop[p + 1 : q] = _fresh_segment(grid[p : q + 1], prop[p], prop[q], new.rate, z[pos : pos + n_in])
                pos += n_in + 1
            ab = None if above_full is None else above_full[sl]
            be = None if below_full is None else below_full[sl]
            old_pen = _site_penalty(cur[sl], ab, be, h, wts[sl])
            new_pen = _site_penalty(prop[sl], ab, be, h, wts[sl])
            log_old = -float(np.sum(old_pen))
            log_new = -float(np.sum(new_pen))
            if math.isfinite(M):
                if np.any(np.abs(prop[sl]) > M):
                    log_new = -math.inf
                if np.any(np.abs(cur[sl]) > M):
                    log_old = -math.inf
            for j in inner_pins:
                if not pins[j].low <= cur[j] <= pins[j].high:
                    log_old = -math.inf
            if inner_pins:
                xs = grid[knots]
                log_new += _pin_log_prior(xs, prop[knots], new.rate)
                log_old += _pin_log_prior(xs, cur[knots], new.rate)
            stats.proposals += 1
            if log_new == -math.inf:
                accept = False
            elif log_old == -math.inf:
                accept = True
            else:
                accept = math.log(gen.random()) < log_new - log_old
            if accept:
                cur[sl] = prop[sl]
                stats.accepted += 1
                stats.consecutive_rejections = 0
            else:
                stats.consecutive_rejections += 1
                if stats.consecutive_rejections >= MAX_CONSECUTIVE_REJECTIONS:
                    raise FeasibilityError(
                        f"{MAX_CONSECUTIVE_REJECTIONS} consecutive rejections; constraint set looks empty"
                    )
        new.curves[i] = cur
    return new


def initial_state(
    grid,
    left_values: Sequence[float],
    right_values: Sequence[float],
    lower=None,
    upper=None,
    pins: Sequence[PinWindow] = (),
    gap: float = 0.1,
    rate: float = DEFAULT_RATE,
) -> EnsembleState:
    """A deterministic starting configuration that respects order and pins where it can."""
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(left_values, dtype=float)
    z = np.asarray(right_values, dtype=float)
    k = w.size
    t = (grid - grid[0]) / (grid[-1] - grid[0])
    curves = w[:, None] * (1 - t) + z[:, None] * t
    if pins:
        xs = [grid[0]] + [p.x for p in pins] + [grid[-1]]
        ys = [w[0]] + [p.center for p in pins] + [z[0]]
        curves[0] = np.interp(grid, xs, ys)
    lo = None if lower is None else np.asarray(getattr(lower, "values", lower), dtype=float)
    up = None if upper is None else np.asarray(getattr(upper, "values", upper), dtype=float)
    floor = lo
    for i in range(k - 1, -1, -1):
        if floor is not None:
            curves[i, 1:-1] = np.maximum(curves[i, 1:-1], floor[1:-1] + gap)
        floor = curves[i]
    if up is not None:
        curves[0, 1:-1] = np.minimum(curves[0, 1:-1], up[1:-1] - gap)
    return EnsembleState(grid, curves, lo, up, rate)


def run_chain(
    state: EnsembleState,
    h: Hamiltonian,
    cfg: ChainConfig,
    rng,
    n_samples: int,
    burn_in: int | None = None,
    observe: Callable[[EnsembleState], object] | None = None,
) -> tuple[list, EnsembleState, ChainStats]:
    """Burn in, then record ``observe(state)`` every ``cfg.sweeps_per_sample`` sweeps.

    The default burn-in is ``10 * k * len(grid)`` sweeps.
    """
    gen = as_generator(rng)
    stats = ChainStats()
    if burn_in is None:
        burn_in = 10 * state.k * state.grid.size
    observe = observe or (lambda s: s.curves.copy())
    for _ in range(burn_in):
        state = gibbs_sweep(state, h, cfg, gen, stats)
    out = []
    for _ in range(n_samples):
        for _ in range(cfg.sweeps_per_sample):
            state = gibbs_sweep(state, h, cfg, gen, stats)
        out.append(observe(state))
    return out, state, stats


# -- monotone coupling -------------------------------------------------------

def _truncnorm_ppf(u, mean, sd, a, b):
    """Inverse CDF of N(mean, sd^2) restricted to [a, b], evaluated at u (vectorised).

    Works in log space in whichever tail the window sits so the map stays
    monotone far from the mean.
    """
    alpha = (a - mean) / sd
    beta = (b - mean) / sd
    z = np.empty_like(u)
    upper = alpha > 0
    lower_t = beta < 0
    mid = ~(upper | lower_t)
    if np.any(upper):
        la = special.log_ndtr(-alpha[upper])
        lb = special.log_ndtr(-beta[upper])
        ls = la + np.log1p(-u[upper] * -np.expm1(lb - la))
        z[upper] = -special.ndtri_exp(ls)
    if np.any(lower_t):
        la = special.log_ndtr(alpha[lower_t])
        lb = special.log_ndtr(beta[lower_t])
        lf = lb + np.log1p(-(1 - u[lower_t]) * -np.expm1(la - lb))
        z[lower_t] = special.ndtri_exp(lf)
    if np.any(mid):
        fa = special.ndtr(alpha[mid])
        fb = special.ndtr(beta[mid])
        z[mid] = special.ndtri(fa + u[mid] * (fb - fa))
    z = np.clip(z, alpha, beta)
    return mean + sd * z


def _soft_ppf(u, mean, sd, a, b, above, below, h: Hamiltonian, w, mesh_lo, mesh_hi, n_mesh=801):
    """Inverse CDF of the finite-temperature site law on a caller-supplied mesh.

    The site density is ``N(mean, sd^2) * exp(-w [H(below - v) + H(v - above)])``
    restricted to [a, b].  Both members of a coupled pair must pass the same
    ``mesh_lo``/``mesh_hi`` so their discrete CDFs are compared on one mesh.
    """
    s = np.linspace(0.0, 1.0, n_mesh)
    v = mesh_lo[:, None] + (mesh_hi - mesh_lo)[:, None] * s[None, :]
    logd = -((v - mean[:, None]) ** 2) / (2 * sd[:, None] ** 2)
    t3 = h.t ** (1 / 3)
    pre = 2.0 * h.t ** (2 / 3)
    if above is not None:
        logd = logd - w[:, None] * pre * np.exp(np.minimum(t3 * (v - above[:, None]), _EXP_CAP))
    if below is not None:
        logd = logd - w[:, None] * pre * np.exp(np.minimum(t3 * (below[:, None] - v), _EXP_CAP))
    logd = np.where((v >= a[:, None]) & (v <= b[:, None]), logd, -np.inf)
    mx = np.max(logd, axis=1, keepdims=True)
    dens = np.exp(logd - mx)
    cdf = np.concatenate([np.zeros((v.shape[0], 1)), np.cumsum(0.5 * (dens[:, 1:] + dens[:, :-1]), axis=1)], axis=1)
    cdf /= cdf[:, -1:]
    out = np.empty(v.shape[0])
    for r in range(v.shape[0]):
        out[r] = np.interp(u[r], cdf[r], v[r])
    return out


def _site_bounds(state: EnsembleState, i: int, idx: np.ndarray, pins: dict[int, PinWindow], M: float, zero: bool):
    a = np.full(idx.size, -M)
    b = np.full(idx.size, M)
    if i == 0:
        for n, j in enumerate(idx):
            if j in pins:
                a[n] = max(a[n], pins[j].low)
                b[n] = min(b[n], pins[j].high)
    if zero:
        ab, be = state.above(i), state.below(i)
        if ab is not None:
            b = np.minimum(b, ab[idx])
        if be is not None:
            a = np.maximum(a, be[idx])
    return a, b


def _site_moments(state: EnsembleState, i: int, idx: np.ndarray):
    g = state.grid
    c = state.curves[i]
    dl = g[idx] - g[idx - 1]
    dr = g[idx + 1] - g[idx]
    mean = (c[idx - 1] * dr + c[idx + 1] * dl) / (dl + dr)
    sd = np.sqrt(state.rate * dl * dr / (dl + dr))
    return mean, sd


def _check_dominates(hi: EnsembleState, lo: EnsembleState, cfg: ChainConfig) -> None:
    if hi.grid.shape != lo.grid.shape or not np.array_equal(hi.grid, lo.grid) or hi.k != lo.k:
        raise DomainError("coupled ensembles must share grid and curve count")
    if np.any(hi.curves < lo.curves):
        raise DomainError("hi must dominate lo pointwise")
    for name in ("lower", "upper"):
        bh, bl = getattr(hi, name), getattr(lo, name)
        if (bh is None) != (bl is None):
            raise DomainError(f"both ensembles need a {name} boundary or neither")
        if bh is not None and np.any(bh < bl):
            raise DomainError(f"{name} boundaries are not ordered")


def heat_bath_sweep_pair(
    hi: EnsembleState,
    lo: EnsembleState,
    h: Hamiltonian,
    cfg: ChainConfig,
    rng,
    hi_cfg: ChainConfig | None = None,
) -> tuple[EnsembleState, EnsembleState]:
    """Shared-uniform heat-bath sweep; see :func:`monotone_gibbs_sweep_pair`.

    ``hi_cfg`` lets the upper chain carry its own (higher) pin windows.
    """
    gen = as_generator(rng)
    hi_cfg = hi_cfg or cfg
    hi, lo = hi.copy(), lo.copy()
    m = hi.grid.size
    if m < 3:
        return hi, lo
    wts = trapezoid_weights(hi.grid)
    pins_h, pins_l = _pins_for(hi, hi_cfg), _pins_for(lo, cfg)
    interior = np.arange(1, m - 1)
    zero = h.zero_temperature
    for i in range(hi.k):
        for parity in (1, 0):
            idx = interior[interior % 2 == parity]
            if idx.size == 0:
                continue
            u = gen.random(idx.size)
            new_vals = []
            bounds = []
            for st, pins, c in ((hi, pins_h, hi_cfg), (lo, pins_l, cfg)):
                mean, sd = _site_moments(st, i, idx)
                a, b = _site_bounds(st, i, idx, pins, c.sup_bound, zero)
                bounds.append((mean, sd, a, b))
            if zero:
                for (mean, sd, a, b) in bounds:
                    new_vals.append(_truncnorm_ppf(u, mean, sd, a, b))
            else:
                span = [(np.maximum(mean - 12 * sd, a), np.minimum(mean + 12 * sd, b)) for mean, sd, a, b in bounds]
                # pad the mesh so neighbour-curve pushes stay inside it
                pushes = []
                for st in (hi, lo):
                    ab, be = st.above(i), st.below(i)
                    if be is not None:
                        pushes.append(be[idx] + 12 * bounds[0][1])
                    if ab is not None:
                        pushes.append(ab[idx] - 12 * bounds[0][1])
                lo_edge = np.minimum(span[0][0], span[1][0])
                hi_edge = np.maximum(span[0][1], span[1][1])
                for p in pushes:
                    lo_edge = np.minimum(lo_edge, np.maximum(p - 24 * bounds[0][1], np.maximum(bounds[0][2], bounds[1][2])))
                    hi_edge = np.maximum(hi_edge, np.minimum(p + 24 * bounds[0][1], np.minimum(bounds[0][3], bounds[1][3])))
                for st, (mean, sd, a, b) in zip((hi, lo), bounds):
                    ab, be = st.above(i), st.below(i)
                    new_vals.append(
                        _soft_ppf(
                            u, mean, sd, a, b,
                            None if ab is None else ab[idx],
                            None if be is None else be[idx],
                            h, wts[idx], lo_edge, hi_edge,
                        )
                    )
            hi.curves[i, idx] = new_vals[0]
            lo.curves[i, idx] = new_vals[1]
    return hi, lo


def monotone_gibbs_sweep_pair(
    hi: EnsembleState,
    lo: EnsembleState,
    h: Hamiltonian,
    cfg: ChainConfig,
    rng,
    hi_cfg: ChainConfig | None = None,
) -> tuple[EnsembleState, EnsembleState]:
    """Coupled sweep of two ensembles with ``hi >= lo`` pointwise.

    Each site is redrawn from its exact conditional law (bridge neighbours,
    interaction with adjacent curves, pin window, sup bound) by the inverse
    CDF of one uniform shared by both chains.  The conditional laws are
    stochastically increasing in all boundary data, so the order survives.
    """
    _check_dominates(hi, lo, cfg)
    if hi_cfg is not None:
        for ph, pl in zip(hi_cfg.pins, cfg.pins):
            if ph.x != pl.x or ph.low < pl.low or ph.high < pl.high:
                raise DomainError("pin windows of the upper chain must dominate")
    return heat_bath_sweep_pair(hi, lo, h, cfg, rng, hi_cfg)


# -- direct sampling ---------------------------------------------------------

def _ordered_rows(samples: np.ndarray, lower: np.ndarray | None) -> np.ndarray:
    """``samples`` has shape (n, k, m); True where curves are strictly ordered inside."""
    inner = samples[:, :, 1:-1]
    ok = np.all(inner[:, :-1, :] > inner[:, 1:, :], axis=(1, 2))
    if lower is not None:
        ok &= np.all(inner[:, -1, :] > lower[None, 1:-1], axis=1)
    return ok


def sample_nonintersecting_many(
    n: int,
    w: Sequence[float],
    z: Sequence[float],
    grid,
    lower=None,
    rng=None,
    rate: float = DEFAULT_RATE,
    batch: int = 20_000,
    min_acceptance: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """``n`` exact samples by rejection; returns (samples of shape (n, k, m), acceptance)."""
    gen = as_generator(rng)
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_endpoints(w, z, lower)
    low = None if lower is None else np.asarray(getattr(lower, "values", lower), dtype=float)
    specs = [BridgeSpec(grid[0], grid[-1], w[i], z[i], rate) for i in range(w.size)]
    kept: list[np.ndarray] = []
    have = tried = 0
    while have < n:
        draws = np.stack([sample_bridges(s, grid, batch, gen) for s in specs], axis=1)
        ok = _ordered_rows(draws, low)
        tried += batch
        acc = int(ok.sum())
        if tried >= 10 * batch and have + acc == 0 or (tried >= 1_000_000 and (have + acc) / tried < min_acceptance):
            raise LowAcceptanceError(
                f"rejection acceptance below {min_acceptance:g} after {tried} tries; use method='chain'"
            )
        kept.append(draws[ok])
        have += acc
    return np.concatenate(kept)[:n], have / tried


def _check_endpoints(w: np.ndarray, z: np.ndarray, lower) -> None:
    if w.shape != z.shape or w.ndim != 1:
        raise DomainError("w and z must be k-vectors")
    if np.any(np.diff(w) >= 0) or np.any(np.diff(z) >= 0):
        raise DomainError("entrance and exit data must be strictly decreasing")
    if lower is not None:
        lv = np.asarray(getattr(lower, "values", lower), dtype=float)
        if w[-1] < lv[0] or z[-1] < lv[-1]:
            raise DomainError("lowest curve must start and end above the lower boundary")


def sample_nonintersecting(
    k: int,
    w: Sequence[float],
    z: Sequence[float],
    grid,
    lower=None,
    rng=None,
    method: str = "rejection",
    rate: float = DEFAULT_RATE,
    burn_in: int | None = None,
) -> EnsembleState:
    """One sample of ``k`` non-intersecting bridges above ``lower``.

    ``method='rejection'`` is exact; ``method='chain'`` runs :func:`gibbs_sweep`
    from a deterministic ordered start for ``burn_in`` sweeps
    (default ``10 * k * len(grid)``).
    """
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    if w.size != k:
        raise DomainError("len(w) must equal k")
    grid = np.asarray(grid, dtype=float)
    low = None if lower is None else np.asarray(getattr(lower, "values", lower), dtype=float)
    if method == "rejection":
        samples, _ = sample_nonintersecting_many(1, w, z, grid, low, rng, rate, batch=2_000)
        return EnsembleState(grid, samples[0], low, None, rate)
    if method == "chain":
        _check_endpoints(w, z, low)
        st = initial_state(grid, w, z, low, rate=rate)
        _, st, _ = run_chain(st, ZERO_TEMPERATURE, ChainConfig(), rng, 0, burn_in)
        return st
    raise DomainError(f"unknown method {method!r}")


# -- conditional law of one point -------------------------------------------

@dataclass(frozen=True)
class PointLaw:
    mean: float
    var: float
    log_weight: Callable[[np.ndarray], np.ndarray]
    curve_at: Callable[[float], np.ndarray]


def conditional_point_law(state: EnsembleState, x0: float, h: Hamiltonian) -> PointLaw:
    """Law of the top curve at ``x0`` given its two side bridges and everything else.

    Before reweighting the value is normal with the returned mean and
    variance; ``log_weight(x)`` is the log interaction of the reassembled top
    curve (value ``x`` at ``x0``) with the curve below it.
    """
    top = state.path(0)
    j = top.index_of(x0)
    if j in (0, state.grid.size - 1):
        raise DomainError("x0 must be an interior grid point")
    g = state.grid
    a, b = g[0], g[-1]
    fa, fb = top.values[0], top.values[-1]
    mean = ((b - x0) * fa + (x0 - a) * fb) / (b - a)
    var = state.rate * (x0 - a) * (b - x0) / (b - a)
    # side bridges: the curve minus the chords on [a, x0] and [x0, b]
    left_t = (g[: j + 1] - a) / (x0 - a)
    right_t = (g[j:] - x0) / (b - x0)
    c = top.values
    left_bridge = c[: j + 1] - ((1 - left_t) * fa + left_t * c[j])
    right_bridge = c[j:] - ((1 - right_t) * c[j] + right_t * fb)

    def curve_at(x: float) -> np.ndarray:
        out = np.empty_like(c)
        out[: j + 1] = left_bridge + (1 - left_t) * fa + left_t * x
        out[j:] = right_bridge + (1 - right_t) * x + right_t * fb
        return out

    below = state.below(0)
    wts = trapezoid_weights(g)

    def log_weight(x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        if below is None:
            return np.zeros(xs.shape)
        out = np.empty(xs.shape)
        for n, xv in enumerate(xs):
            curve = curve_at(float(xv))
            if h.zero_temperature:
                out[n] = 0.0 if np.all(curve[1:-1] > below[1:-1]) else -np.inf
            else:
                pen = _pair_penalty(below, curve, h, wts)
                out[n] = -pen
        return out

    return PointLaw(float(mean), float(var), log_weight, curve_at)


# -- snapshots ---------------------------------------------------------------

def write_snapshot(state: EnsembleState, path: str | Path) -> None:
    """CSV with columns ``curve_index, x, value``; curves numbered from 1."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["curve_index", "x", "value"])
        for i in range(state.k):
            for x, v in zip(state.grid, state.curves[i]):
                wr.writerow([i + 1, repr(float(x)), repr(float(v))])


def read_snapshot(path: str | Path, rate: float = DEFAULT_RATE) -> EnsembleState:
    rows: dict[int, list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["curve_index"]), []).append((float(r["x"]), float(r["value"])))
    keys = sorted(rows)
    grid = np.array([x for x, _ in rows[keys[0]]])
    curves = np.array([[v for _, v in rows[k]] for k in keys])
    return EnsembleState(grid, curves, rate=rate)
