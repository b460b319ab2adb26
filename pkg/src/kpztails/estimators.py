"""Monte Carlo estimators set against the closed-form bounds.

Probabilities of a bridge staying above a barrier decay like ``exp(-c L^3)``
in the interval length, far past what plain sampling reaches.  The ``smc``
method here is a sequential importance sampler: the bridge is grown left to
right from truncated normal steps that never cross the barrier, pulled
towards a guide curve (the concave majorant of the constraints), with the
truncation mass and the drift likelihood ratio carried as weights and
systematic resampling when the effective sample size halves.  Each replicate
gives an unbiased estimate of the probability; replicates are averaged.

The second curve of the ensemble is replaced by the deterministic parabola
``-x^2`` throughout (a Brownian surrogate); reports say so in their ``extra``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import geometry as geo
from .brownian import (
    DEFAULT_RATE,
    DEFAULT_STEP,
    BridgeSpec,
    SampledPath,
    bridge_integral_variance,
    bridge_noise,
    grid_through,
    log_gaussian_tail_sandwich,
    log_normal_tail,
    sample_bridges,
    step_coefficients,
    uniform_grid,
)
from .errors import DomainError
from .gibbs import (
    ZERO_TEMPERATURE,
    ChainConfig,
    EnsembleState,
    PinWindow,
    ChainStats,
    gibbs_sweep,
    sample_nonintersecting_many,
)
from .rng import RngHandle, as_generator
from .stats import (
    LogMoments,
    TailEstimate,
    binomial_estimate,
    ratio_estimate,
)

SURROGATE_NOTE = "second curve replaced by the deterministic barrier -x^2"
CLOSED_FORM_MIN_LENGTH = 5.0


def _handle(rng) -> RngHandle:
    if isinstance(rng, RngHandle):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngHandle(int(rng))
    raise DomainError("estimators need an RngHandle (or int seed) so replicas can be derived")


# -- specs -------------------------------------------------------------------

@dataclass(frozen=True)
class AvoidanceSpec:
    """Bridge from ``(z1, left_height)`` to ``(z2, right_height)`` above ``-x^2 + shift``."""

    z1: float
    z2: float
    left_height: float
    right_height: float
    shift: float = 0.0

    def __post_init__(self) -> None:
        if not self.z1 < self.z2:
            raise DomainError("need z1 < z2")
        if self.left_height <= self.barrier(self.z1) or self.right_height <= self.barrier(self.z2):
            raise DomainError("endpoint heights must lie strictly above the barrier")

    @classmethod
    def symmetric(cls, z: float, margin: float = 1.0) -> "AvoidanceSpec":
        return cls(-z, z, -z * z + margin, -z * z + margin)

    def barrier(self, x):
        return -np.asarray(x, dtype=float) ** 2 + self.shift if np.ndim(x) else -x * x + self.shift

    @property
    def bridge(self) -> BridgeSpec:
        return BridgeSpec(self.z1, self.z2, self.left_height, self.right_height)


@dataclass(frozen=True)
class HypParams:
    K: float
    L: float
    M: float
    delta: float

    def __post_init__(self) -> None:
        if not self.K > 0 or self.L < 0 or not self.M > 0 or self.delta < 0:
            raise DomainError("need K > 0, L >= 0, M > 0, delta >= 0")


@dataclass(frozen=True)
class HypResult:
    passed: bool
    growth_ok: bool
    mass_ok: bool
    first_violation: float | None
    mass: float


@dataclass
class ShapeReport:
    theta: float
    grid: np.ndarray
    quantile_levels: np.ndarray
    quantiles: np.ndarray  # (levels, len(grid)) of path - reference
    inner_sup: np.ndarray  # sup over [-sqrt(theta), sqrt(theta)] of |path - tri| / theta^{1/4}
    outer_sup: np.ndarray  # sup over sqrt(theta) <= |x| <= L sqrt(theta) of |path + x^2|
    midpoint_low: np.ndarray  # tri - path at -sqrt(theta)/2, in units of theta^{1/4}
    rhat: float
    ess: float
    acceptance: float
    extra: dict = field(default_factory=dict)

    @property
    def inner_median(self) -> float:
        return float(np.median(self.inner_sup))

    @property
    def outer_p95(self) -> float:
        return float(np.quantile(self.outer_sup, 0.95))


# -- guided SMC --------------------------------------------------------------

def _trunc_above(u: np.ndarray, mean: np.ndarray, sd: float, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample N(mean, sd^2) conditioned on > c by inversion; also return log P(> c)."""
    alpha = (c - mean) / sd
    log_s = special.log_ndtr(-alpha)
    # survival level of the draw: S(v) = u * S(c)
    z = -special.ndtri_exp(np.log(u) + log_s)
    z = np.maximum(z, alpha)
    return mean + sd * z, log_s


def _systematic(logw: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    w = np.exp(logw - logw.max())
    c = np.cumsum(w)
    c /= c[-1]
    n = logw.size
    pos = (gen.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(c, pos), n - 1)


def smc_log_probability(
    grid: np.ndarray,
    y0: float,
    ym: float,
    floor: np.ndarray,
    guide: np.ndarray | None,
    n_particles: int,
    rng,
    rate: float = DEFAULT_RATE,
    ess_fraction: float = 0.5,
) -> float:
    """One unbiased estimate of P(B(x_j) > floor_j at every interior j), returned as a log.

    ``floor`` may hold ``-inf`` where nothing is imposed.  ``guide`` is the
    curve the proposals drift along (defaults to the straight line).
    """
    gen = as_generator(rng)
    g = np.asarray(grid, dtype=float)
    m = g.size
    if m <= 2:
        return 0.0
    lam, sd = step_coefficients(g, rate)
    lin = y0 + (g - g[0]) / (g[-1] - g[0]) * (ym - y0)
    h = np.zeros(m) if guide is None else np.asarray(guide, dtype=float) - lin
    h[0] = h[-1] = 0.0
    # Proposals follow the bridge shifted by h.  The likelihood ratio of the
    # unshifted to the shifted Gaussian law is exp(-sum_j c_j (f_j - h_j/2))
    # with c = Sigma^{-1} h, and Sigma^{-1} is tridiagonal, so the ratio can be
    # charged site by site as a function of the current state only.
    slope = np.diff(h) / np.diff(g)
    c_lr = np.zeros(m)
    c_lr[1:-1] = (slope[:-1] - slope[1:]) / rate
    v = np.full(n_particles, float(y0))
    logw = np.zeros(n_particles)
    log_z = 0.0
    log_n = math.log(n_particles)
    for i in range(m - 2):
        mean = v + lam[i] * (ym - v)
        pm = mean + (h[i + 1] - (1.0 - lam[i]) * h[i])
        s = sd[i]
        c = floor[i + 1]
        u = gen.random(n_particles)
        if c == -math.inf:
            new = pm + s * special.ndtri(u)
            inc = 0.0
        else:
            new, inc = _trunc_above(u, pm, s, c)
        if c_lr[i + 1] != 0.0:
            inc = inc - c_lr[i + 1] * (new - lin[i + 1] - 0.5 * h[i + 1])
        logw = logw + inc
        v = new
        top = logw.max()
        if top == -math.inf:
            return -math.inf
        w = np.exp(logw - top)
        ess = w.sum() ** 2 / np.dot(w, w)
        if ess < ess_fraction * n_particles:
            log_z += top + math.log(w.sum()) - log_n
            idx = _systematic(logw, gen)
            v = v[idx]
            logw = np.zeros(n_particles)
    return log_z + float(special.logsumexp(logw)) - log_n


def guide_curve(grid: np.ndarray, floor: np.ndarray, y0: float, ym: float, lift: float = 1.0) -> np.ndarray:
    """Concave majorant of the constraints and endpoints, lifted by ``lift * sqrt(distance to an end)`` (capped)."""
    g = np.asarray(grid, dtype=float)
    y = np.asarray(floor, dtype=float).copy()
    y[0], y[-1] = y0, ym
    maj = geo.concave_majorant(g, y)
    d = np.minimum(g - g[0], g[-1] - g)
    return maj + lift * np.sqrt(np.minimum(d, 1.0))


def _smc_replicate(args) -> float:
    grid, y0, ym, floor, guide, n_part, handle, rate = args
    return smc_log_probability(grid, y0, ym, floor, guide, n_part, handle, rate)


def smc_estimate(
    grid: np.ndarray,
    y0: float,
    ym: float,
    floor: np.ndarray,
    N: int,
    rng,
    replicates: int = 16,
    rate: float = DEFAULT_RATE,
    lift: float = 1.0,
    mapper: Callable = map,
    **extra,
) -> TailEstimate:
    """Average of ``replicates`` independent SMC runs using ``N // replicates`` particles each.

    Replicate ``r`` always uses ``rng.child(r)``, so any order-preserving
    ``mapper`` (builtin ``map``, a process pool's ``map``) gives the same result.
    """
    handle = _handle(rng)
    if replicates < 2:
        raise DomainError("need at least two replicates for a standard error")
    n_part = max(N // replicates, 2)
    guide = guide_curve(grid, floor, y0, ym, lift)
    jobs = [(grid, y0, ym, floor, guide, n_part, handle.child(r), rate) for r in range(replicates)]
    logs = list(mapper(_smc_replicate, jobs))
    mom = LogMoments.from_log_weights(np.array(logs))
    return TailEstimate(
        mom.log_mean(), mom.stderr_log(), replicates * n_part, "smc",
        extra=dict(replicates=replicates, particles=n_part, **extra),
    )


# -- avoidance ---------------------------------------------------------------

def _avoid_floor(spec: AvoidanceSpec, grid: np.ndarray) -> np.ndarray:
    f = -grid**2 + spec.shift
    f[0] = f[-1] = -math.inf
    return f


def mc_avoidance(
    spec: AvoidanceSpec,
    grid_step: float = DEFAULT_STEP,
    N: int = 100_000,
    rng=0,
    method: str = "naive",
    batch: int = 20_000,
    replicates: int = 16,
    mapper: Callable = map,
) -> TailEstimate:
    """P(bridge stays strictly above the barrier at every interior grid point)."""
    if N < 1:
        raise DomainError("N must be >= 1")
    grid = uniform_grid(spec.z1, spec.z2, grid_step)
    if method == "smc":
        return smc_estimate(
            grid, spec.left_height, spec.right_height, _avoid_floor(spec, grid), N, rng, replicates,
            mapper=mapper, grid_step=grid_step,
        )
    if method != "naive":
        raise DomainError(f"unknown method {method!r}")
    # fixed chunking on child streams keeps the count independent of the mapper
    handle = _handle(rng)
    sizes = [N // replicates + (1 if r < N % replicates else 0) for r in range(replicates)]
    jobs = [(spec, grid, n_r, handle.child(r), batch) for r, n_r in enumerate(sizes) if n_r > 0]
    hits = sum(mapper(_avoid_hits, jobs))
    return binomial_estimate(hits, N, "naive", grid_step=grid_step)


def _avoid_hits(args) -> int:
    spec, grid, n, handle, batch = args
    gen = handle.generator()
    barrier = -grid**2 + spec.shift
    hits = 0
    while n > 0:
        m = min(batch, n)
        paths = sample_bridges(spec.bridge, grid, m, gen)
        hits += int(np.count_nonzero(np.all(paths[:, 1:-1] > barrier[1:-1], axis=1)))
        n -= m
    return hits


@dataclass(frozen=True)
class LowerBound:
    log_p: float
    flagged: bool
    detail: dict = field(default_factory=dict)


def mesh_spacing(length: float, eps: float = 6.0 / 5.0) -> tuple[float, int]:
    """Spacing nearest ``eps`` that divides ``length`` and keeps the mesh argument valid."""
    lo, hi = (4.0 / 3.0) ** (1.0 / 3.0), math.sqrt(2.0)
    n_min = math.ceil(length / hi - 1e-12)
    n_max = math.floor(length / lo + 1e-12)
    if n_min > n_max:
        raise DomainError(f"no mesh of length {length} has spacing in [(4/3)^(1/3), sqrt 2)")
    best = min(range(n_min, n_max + 1), key=lambda n: abs(length / n - eps))
    e = length / best
    if e >= hi:
        raise DomainError("mesh spacing must stay below sqrt 2")
    return e, best


def analytic_avoidance_lower_bound(z1: float, z2: float, variant: str = "closed_form", eps: float = 6.0 / 5.0) -> LowerBound:
    """Lower bound on log P(bridge from parabola+1 to parabola+1 stays above ``-x^2``).

    ``closed_form`` is ``-L^3/12 - 2 L log L`` (proved for large ``L = z2 - z1``;
    flagged below 5).  ``mesh`` evaluates the constructive bound itself: the
    bridge stays above ``-x^2 + 1`` at mesh points and wanders less than 1/2
    between them.
    """
    L = z2 - z1
    if not L > 0:
        raise DomainError("need z1 < z2")
    if variant == "closed_form":
        val = -(L**3) / 12.0 - 2.0 * L * math.log(L)
        flagged = L < CLOSED_FORM_MIN_LENGTH
        if flagged:
            warnings.warn(f"closed-form avoidance bound used at length {L} < {CLOSED_FORM_MIN_LENGTH}", stacklevel=2)
        return LowerBound(val, flagged, {"length": L})
    if variant != "mesh":
        raise DomainError(f"unknown variant {variant!r}")
    e, n = mesh_spacing(L, eps)
    # per-interval: rate-2 bridge of length e has inf >= -1/2 with prob 1 - exp(-1/(4e))
    log_p_interval = math.log1p(-math.exp(-1.0 / (4.0 * e)))
    total = n * log_p_interval
    fallbacks = 0
    for j in range(1, n):
        lam = e / (L - e * (j - 1))
        sigma = math.sqrt(2.0 * e * (1.0 - lam))
        gap = e * (L - e * j)
        try:
            total += log_gaussian_tail_sandwich(gap, sigma)[0]
        except DomainError:
            total += log_normal_tail(gap, sigma)
            fallbacks += 1
    return LowerBound(total, False, {"eps": e, "intervals": n, "exact_tail_fallbacks": fallbacks})


def analytic_avoidance_upper_bound(z: float, variant: str = "bound") -> float:
    """log P(N(0, 4z^3/3) > 4z^3/3 - 2z), an upper bound for the symmetric avoidance probability.

    ``bound`` uses ``exp(-x^2 / 2 sigma^2)`` where that majorant is proved
    and the exact normal tail otherwise; ``leading`` always returns the
    exponent ``-x^2 / 2 sigma^2``.
    """
    if not z > 0:
        raise DomainError("z must be positive")
    var = bridge_integral_variance(z)
    x = var - 2.0 * z
    sigma = math.sqrt(var)
    if variant == "leading":
        return -(x * x) / (2.0 * var)
    if variant != "bound":
        raise DomainError(f"unknown variant {variant!r}")
    if x >= math.sqrt(4.0 / 3.0) * sigma:
        return log_gaussian_tail_sandwich(x, sigma)[1]
    return log_normal_tail(x, sigma)


# -- one-point tail ----------------------------------------------------------

def tilted_one_point_tail(
    theta: float,
    N: int,
    rng,
    grid_step: float = DEFAULT_STEP,
    tilt: float | None = None,
    den_method: str = "smc",
    replicates: int = 16,
    mapper: Callable = map,
) -> TailEstimate:
    """log P(B(0) >= theta | B > -x^2 on the grid) for the bridge (-r, -theta) -> (r, -theta), r = sqrt(theta).

    Numerator: ``B(0)`` is drawn from a normal with the bridge variance and
    mean ``-theta + tilt`` (default ``tilt = 2 theta``, i.e. mean ``theta``),
    reweighted by the likelihood ratio, and the two side bridges are drawn
    given ``B(0)``.  Denominator: the avoidance probability alone, by guided
    SMC (or ``naive``).  Returned as their ratio.
    """
    if not theta > 0:
        raise DomainError("theta must be positive")
    handle = _handle(rng)
    r = math.sqrt(theta)
    grid = grid_through(-r, r, [0.0], grid_step)
    j0 = int(np.argmin(np.abs(grid)))
    var = r  # rate 2: 2 * r * r / (2 r)
    sd = math.sqrt(var)
    shift = 2.0 * theta if tilt is None else tilt
    barrier = -grid**2
    gen = handle.child(0).generator()
    left_g, right_g = grid[: j0 + 1], grid[j0:]
    log_terms = []
    left = N
    batch = 20_000
    while left > 0:
        m = min(batch, left)
        v = -theta + shift + sd * gen.standard_normal(m)
        log_lr = -((v + theta) ** 2 - (v + theta - shift) ** 2) / (2.0 * var)
        ok = v >= theta
        lb = _bridges_to(left_g, -theta, v, gen)
        rb = _bridges_to(right_g, v, -theta, gen)
        ok &= np.all(lb[:, 1:] > barrier[1 : j0 + 1], axis=1)
        ok &= np.all(rb[:, :-1] > barrier[j0:-1], axis=1)
        log_terms.append(np.where(ok, log_lr, -np.inf))
        left -= m
    lw = np.concatenate(log_terms)
    num = LogMoments.from_log_weights(lw).to_estimate("tilted")
    finite = lw[np.isfinite(lw)]
    ess = 0.0
    if finite.size:
        w = np.exp(finite - finite.max())
        ess = float(w.sum() ** 2 / np.dot(w, w))
    if ess < 100:
        warnings.warn(f"tilted numerator effective sample size {ess:.0f} < 100", stacklevel=2)
    if num.log_p == -math.inf:
        return TailEstimate(-math.inf, math.inf, N, "tilted", extra={"ess": ess, "note": SURROGATE_NOTE})
    floor = barrier.copy()
    floor[0] = floor[-1] = -math.inf
    if den_method == "smc":
        den = smc_estimate(grid, -theta, -theta, floor, N, handle.child(1), replicates, mapper=mapper)
    elif den_method == "naive":
        spec = BridgeSpec(-r, r, -theta, -theta)
        g2 = handle.child(1).generator()
        hits = 0
        left = N
        while left > 0:
            m = min(batch, left)
            p = sample_bridges(spec, grid, m, g2)
            hits += int(np.count_nonzero(np.all(p[:, 1:-1] > barrier[1:-1], axis=1)))
            left -= m
        den = binomial_estimate(hits, N)
    else:
        raise DomainError(f"unknown den_method {den_method!r}")
    return ratio_estimate(
        num, den, "tilted", ess=ess, numerator=num.log_p, denominator=den.log_p, note=SURROGATE_NOTE
    )


def _bridges_to(grid: np.ndarray, ya, yb, gen) -> np.ndarray:
    """Bridges on ``grid`` with per-row endpoint values (either end may be an array)."""
    n = np.size(ya) if np.ndim(ya) else np.size(yb)
    t = (grid - grid[0]) / (grid[-1] - grid[0])
    ya = np.broadcast_to(np.asarray(ya, dtype=float), (n,))
    yb = np.broadcast_to(np.asarray(yb, dtype=float), (n,))
    return bridge_noise(grid, n, gen) + ya[:, None] * (1 - t) + yb[:, None] * t


def naive_one_point_tail(theta: float, N: int, rng, grid_step: float = DEFAULT_STEP) -> TailEstimate:
    """Plain conditional MC: count of (B(0) >= theta and avoid) over count of avoid."""
    r = math.sqrt(theta)
    grid = grid_through(-r, r, [0.0], grid_step)
    j0 = int(np.argmin(np.abs(grid)))
    gen = as_generator(rng)
    spec = BridgeSpec(-r, r, -theta, -theta)
    barrier = -grid**2
    avoid = both = 0
    left = N
    while left > 0:
        m = min(20_000, left)
        p = sample_bridges(spec, grid, m, gen)
        ok = np.all(p[:, 1:-1] > barrier[1:-1], axis=1)
        avoid += int(ok.sum())
        both += int(np.count_nonzero(ok & (p[:, j0] >= theta)))
        left -= m
    if avoid == 0:
        raise DomainError("no avoiding paths; use tilted_one_point_tail")
    return binomial_estimate(both, avoid, "naive", avoid=avoid)


def fit_envelope_constant(log_ps: Sequence[float], rates: Sequence[float], envelopes: Sequence[float]) -> float:
    """Smallest ``C`` with ``|-log p - rate| <= C * envelope`` at every point."""
    return max(abs(-lp - r) / e for lp, r, e in zip(log_ps, rates, envelopes))


# -- two-point tail ----------------------------------------------------------

def two_point_surrogate(spec: geo.TwoPointSpec, grid_step: float = DEFAULT_STEP, margin: float = 1.0):
    """Grid, end values and pin indices of the bridge used for the two-point event."""
    r = spec.root
    xl, xr = geo.tangency_points(spec)
    if geo.classify(spec) is geo.CaseLabel.ONE_EXTREME:
        xr = max(xr, geo.inner_tangency_points(spec)[0])
    xr = max(xr, r + grid_step)
    grid = grid_through(xl, xr, [-r, r], grid_step)
    jl = int(np.argmin(np.abs(grid + r)))
    jr = int(np.argmin(np.abs(grid - r)))
    return grid, -xl * xl + margin, -xr * xr + margin, jl, jr


def mc_two_point(
    spec: geo.TwoPointSpec,
    N: int,
    rng,
    method: str = "smc",
    grid_step: float = DEFAULT_STEP,
    margin: float = 1.0,
    replicates: int = 16,
    mapper: Callable = map,
) -> TailEstimate:
    """log P(B(-r) >= a theta, B(r) >= b theta | B > -x^2) for the surrogate bridge.

    The bridge runs between the outer tangency points of the hull, ``margin``
    above the parabola.  ``smc`` estimates the joint event and the avoidance
    event separately; ``naive`` counts both on one set of paths.
    """
    handle = _handle(rng)
    grid, y0, ym, jl, jr = two_point_surrogate(spec, grid_step, margin)
    barrier = -grid**2
    floor = barrier.copy()
    floor[0] = floor[-1] = -math.inf
    pins = floor.copy()
    # B >= level is replaced by B > level; they differ on a null set
    pins[jl] = max(pins[jl], spec.a * spec.theta)
    pins[jr] = max(pins[jr], spec.b * spec.theta)
    info = dict(case=geo.classify(spec).value, grid_step=grid_step, margin=margin, note=SURROGATE_NOTE)
    if method == "smc":
        num = smc_estimate(grid, y0, ym, pins, N, handle.child(0), replicates, mapper=mapper)
        den = smc_estimate(grid, y0, ym, floor, N, handle.child(1), replicates, mapper=mapper)
        if num.log_p == -math.inf:
            return TailEstimate(-math.inf, math.inf, N, "smc", extra=info)
        return ratio_estimate(num, den, "smc", **info)
    if method != "naive":
        raise DomainError(f"unknown method {method!r}")
    gen = handle.child(0).generator()
    bspec = BridgeSpec(grid[0], grid[-1], y0, ym)
    avoid = both = 0
    left = N
    while left > 0:
        m = min(20_000, left)
        p = sample_bridges(bspec, grid, m, gen)
        ok = np.all(p[:, 1:-1] > barrier[1:-1], axis=1)
        avoid += int(ok.sum())
        both += int(np.count_nonzero(ok & (p[:, jl] > pins[jl]) & (p[:, jr] > pins[jr])))
        left -= m
    if avoid == 0:
        raise DomainError("no avoiding paths; use method='smc'")
    return binomial_estimate(both, avoid, "naive", avoid=avoid, **info)


def hull_energy_rate(spec: geo.TwoPointSpec, n: int = 200_001) -> float:
    """Dirichlet-energy gap between the hull and the parabola, halved (rate-2 convention).

    For a rate-2 bridge the path density is ``exp(-int f'^2 / 4)``; this is an
    independent numerical route to ``two_point_log_rate``.
    """
    xl, xr = geo.tangency_points(spec)
    if geo.classify(spec) is geo.CaseLabel.ONE_EXTREME:
        xr = geo.inner_tangency_points(spec)[0]
    x = np.linspace(xl, xr, n)
    hv = geo.hull(spec)(x)
    d = np.diff(hv) / np.diff(x)
    mid = 0.5 * (x[1:] + x[:-1])
    return float(np.sum((d**2 - (2 * mid) ** 2) * np.diff(x)) / 4.0)


# -- limit shape -------------------------------------------------------------

def split_rhat(chains: np.ndarray) -> float:
    """Split-R-hat of a scalar; ``chains`` has shape (n_chains, n_draws)."""
    c = np.asarray(chains, dtype=float)
    half = c.shape[1] // 2
    parts = np.concatenate([c[:, :half], c[:, half : 2 * half]])
    n = parts.shape[1]
    means = parts.mean(axis=1)
    W = parts.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    var = (n - 1) / n * W + B / n
    return float(math.sqrt(var / W)) if W > 0 else float("nan")


def effective_sample_size(chains: np.ndarray) -> float:
    """Sum over chains of ``n / tau`` with ``tau`` from Geyer's initial positive sequence."""
    total = 0.0
    for x in np.atleast_2d(np.asarray(chains, dtype=float)):
        n = x.size
        y = x - x.mean()
        f = np.fft.rfft(y, 2 * n)
        ac = np.fft.irfft(f * np.conj(f))[:n]
        if ac[0] <= 0:
            total += n
            continue
        ac = ac / ac[0]
        tau = 1.0
        for k in range(1, n - 1, 2):
            pair = ac[k] + ac[k + 1]
            if pair <= 0:
                break
            tau += 2.0 * pair
        total += n / tau
    return float(total)


def conditioned_shape(
    theta: float,
    sweeps: int,
    rng,
    chains: int = 4,
    L: float = 2.0,
    eps: float = 0.25,
    grid_step: float = 0.05,
    block: float = 1.0,
    burn_in: int | None = None,
    thin: int = 5,
) -> ShapeReport:
    """One curve above ``-x^2`` pinned near ``theta`` at 0, run by the Gibbs chain.

    Endpoints sit on the parabola at ``+-L sqrt(theta)``; the pin window is
    ``[theta - eps, theta + eps]``.  Burn-in defaults to ``sweeps // 2``.
    """
    if theta < 4:
        raise DomainError("conditioned_shape needs theta >= 4")
    handle = _handle(rng)
    r = math.sqrt(theta)
    grid = grid_through(-L * r, L * r, [-r, -r / 2, 0.0, r], grid_step)
    lower = -grid**2
    pin = PinWindow(0.0, theta, eps)
    cfg = ChainConfig(pins=(pin,), proposal_scale=block)
    t = geo.tri(theta, grid)
    start = np.maximum(t, lower) + 0.5
    start[0], start[-1] = lower[0], lower[-1]
    j0 = int(np.argmin(np.abs(grid)))
    start[j0] = theta
    burn = sweeps // 2 if burn_in is None else burn_in
    inner = np.abs(grid) <= r + 1e-9
    outer = (np.abs(grid) >= r - 1e-9)
    jm = int(np.argmin(np.abs(grid + r / 2)))
    ref = np.where(inner, t, lower)
    scale = theta**0.25
    paths, mids, accs = [], [], []
    for c in range(chains):
        gen = handle.child(c).generator()
        st = EnsembleState(grid, start[None, :], lower)
        stats = ChainStats()
        for _ in range(burn):
            st = gibbs_sweep(st, ZERO_TEMPERATURE, cfg, gen, stats)
        rec, mid = [], []
        for s in range(sweeps):
            st = gibbs_sweep(st, ZERO_TEMPERATURE, cfg, gen, stats)
            if s % thin == 0:
                rec.append(st.curves[0].copy())
                mid.append(st.curves[0, jm])
        paths.append(np.array(rec))
        mids.append(np.array(mid))
        accs.append(stats.acceptance)
    allp = np.concatenate(paths)
    dev = allp - ref
    levels = np.array([0.05, 0.25, 0.5, 0.75, 0.95])
    mids_arr = np.array(mids)
    return ShapeReport(
        theta=theta,
        grid=grid,
        quantile_levels=levels,
        quantiles=np.quantile(dev, levels, axis=0),
        inner_sup=np.max(np.abs(dev[:, inner]), axis=1) / scale,
        outer_sup=np.max(np.abs(allp[:, outer] - lower[outer]), axis=1),
        midpoint_low=(t[jm] - allp[:, jm]) / scale,
        rhat=split_rhat(mids_arr),
        ess=effective_sample_size(mids_arr),
        acceptance=float(np.mean(accs)),
        extra={"L": L, "eps": eps, "grid_step": grid_step, "block": block, "sweeps": sweeps, "burn_in": burn,
               "chains": chains, "note": SURROGATE_NOTE},
    )


# -- FKG / BK ----------------------------------------------------------------

@dataclass(frozen=True)
class InequalityRow:
    kind: str  # "fkg" or "bk"
    label: str
    value: float
    stderr: float
    hits: int
    flagged: bool

    @property
    def passed(self) -> bool:
        if self.kind == "fkg":
            return self.value >= -3.0 * self.stderr
        return self.value <= 3.0 * self.stderr


def _cov_stderr(a: np.ndarray, e: np.ndarray) -> tuple[float, float]:
    """``P(A and E) - P(A) P(E)`` and its delta-method stderr."""
    a = a.astype(float)
    e = e.astype(float)
    n = a.size
    ca = a - a.mean()
    ce = e - e.mean()
    infl = ca * ce - np.mean(ca * ce)
    return float(np.mean(ca * ce)), float(infl.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf


def fkg_bk_report(
    k: int,
    w: Sequence[float],
    z: Sequence[float],
    grid,
    thresholds: Sequence[float],
    N: int,
    rng,
    lower=None,
) -> list[InequalityRow]:
    """FKG and BK rows on exact samples of ``k`` non-intersecting bridges.

    Increasing events are threshold events at the midpoint and on the
    supremum.  BK rows compare ``P(curve 2 in A | curve 1 in C)`` with
    ``P(curve 1 in A)`` for conditioning events ``C`` on curve 1 of either
    monotonicity.
    """
    if k < 2:
        raise DomainError("need k >= 2 curves")
    samples, _ = sample_nonintersecting_many(N, w, z, grid, lower, rng)
    mid = samples.shape[2] // 2
    c1m, c2m = samples[:, 0, mid], samples[:, 1, mid]
    c1s, c2s = samples[:, 0].max(axis=1), samples[:, 1].max(axis=1)
    rows: list[InequalityRow] = []
    for s in thresholds:
        for u in thresholds:
            pairs = {
                f"c1mid>{s:g} & c1sup>{u:g}": (c1m > s, c1s > u),
                f"c1mid>{s:g} & c2mid>{u:g}": (c1m > s, c2m > u),
                f"c2sup>{s:g} & c1sup>{u:g}": (c2s > s, c1s > u),
            }
            for label, (A, E) in pairs.items():
                val, se = _cov_stderr(A, E)
                hits = int(np.count_nonzero(A & E))
                rows.append(InequalityRow("fkg", label, val, se, hits, hits < 100))
    for s in thresholds:
        A2, A1 = c2m > s, c1m > s
        conds = {"all": np.ones(N, bool)}
        for q in thresholds:
            conds[f"c1mid>{q:g}"] = c1m > q
            conds[f"c1mid<{q:g}"] = c1m < q
            conds[f"c1sup>{q:g}"] = c1s > q
        for cl, C in conds.items():
            nc = int(C.sum())
            if nc < 0.05 * N:
                continue
            p2 = A2[C].mean()
            p1 = A1.mean()
            se = math.sqrt(p2 * (1 - p2) / nc + p1 * (1 - p1) / N)
            se = max(se, 1.0 / N)
            rows.append(InequalityRow("bk", f"c2mid>{s:g} | {cl}", float(p2 - p1), se, nc, nc < 100))
    return rows


# -- sup over an interval ----------------------------------------------------

@dataclass(frozen=True)
class SupRow:
    theta: float
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * math.hypot(self.lhs_se, self.rhs_se)


def sup_interval_tail_check(
    theta_grid: Sequence[float] | None,
    k: int,
    N: int,
    rng,
    half_width: float = 2.0,
    grid_step: float = 0.02,
) -> tuple[dict, list[SupRow]]:
    """Compare ``P(sup_[-1,1] curve1 + x^2 >= theta)`` with ``4 theta P(curve1(0) >= theta - 2)``.

    Surrogate ensemble: ``k`` non-intersecting rate-2 bridges on
    ``[-half_width, half_width]`` with both ends of curve ``i`` at ``-i``.
    ``theta_grid=None`` picks the 50/90/99% quantiles of the supremum,
    clipped below at 1/4 where the comparison starts to mean something.
    """
    grid = grid_through(-half_width, half_width, [-1.0, 0.0, 1.0], grid_step)
    ends = -np.arange(k, dtype=float)
    samples, _ = sample_nonintersecting_many(N, ends, ends, grid, None, rng)
    c1 = samples[:, 0]
    inside = np.abs(grid) <= 1.0 + 1e-9
    sup = np.max(c1[:, inside] + grid[inside] ** 2, axis=1)
    at0 = c1[:, int(np.argmin(np.abs(grid)))]
    if theta_grid is None:
        theta_grid = [max(0.25, float(q)) for q in np.quantile(sup, [0.5, 0.9, 0.99])]
    rows = []
    for th in theta_grid:
        pl = float(np.mean(sup >= th))
        pr = float(np.mean(at0 >= th - 2.0))
        rows.append(
            SupRow(th, pl, math.sqrt(pl * (1 - pl) / N), 4 * th * pr, 4 * abs(th) * math.sqrt(pr * (1 - pr) / N))
        )
    header = {
        "surrogate": f"{k} non-intersecting rate-2 bridges on [-{half_width}, {half_width}], curve i pinned at -i",
        "k": k,
        "N": N,
    }
    return header, rows


# -- general initial data ----------------------------------------------------

def general_data_value(path: SampledPath, f: SampledPath, t: float) -> float:
    """``t^{-1/3} log int exp(t^{1/3} (path(y) + f(y))) dy`` by trapezoid, in log space."""
    if not t > 0:
        raise DomainError("t must be positive")
    if path.grid.shape != f.grid.shape or not np.allclose(path.grid, f.grid):
        raise DomainError("path and f must share a grid")
    s = t ** (1.0 / 3.0)
    e = s * (path.values + f.values)
    if np.all(e == -np.inf):
        raise DomainError("f is -inf everywhere")
    dx = np.diff(path.grid)
    # trapezoid over cells with both ends finite: a -inf value is a hard cutoff,
    # so cells straddling it contribute nothing rather than a linear ramp
    live = np.isfinite(e[:-1]) & np.isfinite(e[1:])
    if not live.any():
        raise DomainError("f is finite on no grid cell")
    half = np.log(dx[live] / 2)
    terms = np.concatenate([e[:-1][live] + half, e[1:][live] + half])
    return float(special.logsumexp(terms)) / s


def hyp_check(f: SampledPath, params: HypParams) -> HypResult:
    """Check ``f <= x^2 - L|x| + K`` on the grid and ``Leb{|x| <= M, f >= -K} >= delta``."""
    x, v = f.grid, f.values
    cap = x**2 - params.L * np.abs(x) + params.K
    bad = np.flatnonzero(v > cap)
    growth_ok = bad.size == 0
    inside = np.abs(x) <= params.M
    ind = ((v >= -params.K) & inside).astype(float)
    mass = float(np.sum(0.5 * (ind[1:] + ind[:-1]) * np.diff(x)))
    mass_ok = mass >= params.delta - 1e-12
    return HypResult(growth_ok and mass_ok, growth_ok, mass_ok, None if growth_ok else float(x[bad[0]]), mass)
