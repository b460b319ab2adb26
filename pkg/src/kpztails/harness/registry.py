"""Experiment registry.

Each experiment is a parameter schema plus a *point function* that evaluates
one parameter point and returns result rows.  Every row carries an estimate,
its standard error and an analytic interval ``[analytic_lo, analytic_hi]``;
the pass flag is recomputed from those four numbers alone (see
:func:`passes`), so a CSV row can be re-checked without rerunning anything.

Point functions are module-level so that a process pool can run them.  An
experiment either maps its *points* over the worker pool or hands the pool's
``map`` to an estimator that parallelises its own replicates, never both.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .. import estimators as est
from .. import geometry as geo
from ..brownian import SampledPath, uniform_grid
from ..errors import DomainError
from ..gibbs import sample_nonintersecting
from ..rng import RngHandle

BAND = 3.0


def passes(estimate: float, stderr: float, lo: float, hi: float) -> bool:
    """``estimate +- 3 stderr`` overlaps ``[lo, hi]``; non-finite estimates fail."""
    if not (math.isfinite(estimate) and math.isfinite(stderr)):
        return False
    return estimate + BAND * stderr >= lo and estimate - BAND * stderr <= hi


@dataclass(frozen=True)
class Row:
    params: dict
    quantity: str
    estimate: float
    stderr: float
    n: int
    lo: float
    hi: float

    @property
    def pass_flag(self) -> bool:
        return passes(self.estimate, self.stderr, self.lo, self.hi)


@dataclass
class PointResult:
    rows: list[Row]
    # file tag -> (header, rows) tables, or an EnsembleState for curve snapshots
    snapshots: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Param:
    name: str
    kind: type
    default: Any
    help: str
    sweep: bool = False  # accepts a comma-separated list; points are the cartesian product
    choices: tuple | None = None


@dataclass(frozen=True)
class Experiment:
    name: str
    doc: str
    anchor: str
    params: tuple[Param, ...]
    point: Callable[[dict, RngHandle, Callable], PointResult]
    inner_parallel: bool = False
    summary: Callable[[list[PointResult]], list[Row]] | None = None

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def schema(self) -> dict:
        return {
            p.name: {"type": p.kind.__name__, "default": p.default, "sweep": p.sweep, "choices": p.choices,
                     "help": p.help}
            for p in self.params
        }

    def coerce(self, name: str, value) -> Any:
        """Validate one parameter value; sweep parameters come back as lists."""
        try:
            p = self.param(name)
        except KeyError:
            raise DomainError(f"{self.name}: unknown parameter {name!r}") from None
        vals = value if isinstance(value, (list, tuple)) else [value]
        if isinstance(value, str) and p.sweep:
            vals = [v for v in value.split(",") if v.strip()]
        if not p.sweep and len(vals) != 1:
            raise DomainError(f"{self.name}: parameter {name!r} takes a single value")
        try:
            out = [p.kind(v) for v in vals]
        except (TypeError, ValueError):
            raise DomainError(f"{self.name}: {name}={value!r} is not a valid {p.kind.__name__}") from None
        if p.choices is not None and any(v not in p.choices for v in out):
            raise DomainError(f"{self.name}: {name} must be one of {p.choices}")
        return out if p.sweep else out[0]

    def resolve(self, *layers: dict) -> dict:
        """Defaults overridden by each layer in turn (``None`` values are skipped)."""
        params = {p.name: ([p.default] if p.sweep else p.default) for p in self.params}
        for layer in layers:
            for k, v in layer.items():
                if v is not None:
                    params[k] = self.coerce(k, v)
        return params

    def points(self, params: dict) -> list[dict]:
        sweeps = [p.name for p in self.params if p.sweep]
        fixed = {k: v for k, v in params.items() if k not in sweeps}
        out = []
        for combo in itertools.product(*(params[k] for k in sweeps)):
            d = dict(fixed)
            d.update(zip(sweeps, combo))
            out.append({p.name: d[p.name] for p in self.params})
        return out


def _estimate_row(params, quantity, t, lo, hi) -> Row:
    return Row(params, quantity, float(t.log_p), float(t.stderr_log), int(t.n), float(lo), float(hi))


# -- avoid -------------------------------------------------------------------

def _avoid_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    z = p["z"]
    spec = est.AvoidanceSpec.symmetric(z, p["margin"])
    t = est.mc_avoidance(spec, p["grid_step"], p["n"], handle, p["method"], replicates=p["replicates"], mapper=mapper)
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lo = est.analytic_avoidance_lower_bound(-z, z, "closed_form")
    notes += [f"avoid z={z:g}: {w.message}" for w in caught]
    hi = est.analytic_avoidance_upper_bound(z)
    rows = [_estimate_row(p, "log_avoid", t, lo.log_p, hi)]
    try:
        mesh = est.analytic_avoidance_lower_bound(-z, z, "mesh")
    except DomainError as e:
        notes.append(f"avoid z={z:g}: no mesh bound ({e})")
    else:
        rows.append(_estimate_row(p, "log_avoid_vs_mesh_bound", t, mesh.log_p, hi))
    return PointResult(rows, notes=notes)


# -- tail1 -------------------------------------------------------------------

def _tail1_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    th = p["theta"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        t = est.tilted_one_point_tail(th, p["n"], handle, p["grid_step"], replicates=p["replicates"], mapper=mapper)
    rate = geo.one_point_log_rate(th)
    env = p["envelope_c"] * geo.one_point_envelope(th)
    notes = [f"tail1 theta={th:g}: {w.message}" for w in caught]
    return PointResult([_estimate_row(p, "log_tail", t, -rate - env, -rate + env)], notes=notes)


# -- tail2 -------------------------------------------------------------------

def _tail2_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    spec = geo.TwoPointSpec(p["theta"], p["a"], p["b"])
    t = est.mc_two_point(spec, p["n"], handle, "smc", p["grid_step"], p["margin"], p["replicates"], mapper)
    rate = geo.two_point_log_rate(spec)
    env = p["envelope_c"] * geo.two_point_envelope(spec.theta)
    return PointResult([_estimate_row(p, "log_tail", t, -rate - env, -rate + env)])


# -- shape -------------------------------------------------------------------

def _shape_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    th = p["theta"]
    rep = est.conditioned_shape(th, p["sweeps"], handle, chains=p["chains"], eps=p["eps"], grid_step=p["grid_step"])
    n = int(rep.inner_sup.size)
    cap = 3.0 * th**0.25 * math.log(th)
    rows = [
        Row(p, "inner_sup_median", rep.inner_median, 0.0, n, -math.inf, math.inf),
        Row(p, "outer_p95", rep.outer_p95, 0.0, n, -math.inf, cap),
        Row(p, "split_rhat", rep.rhat, 0.0, n, -math.inf, math.inf),
    ]
    g = rep.grid
    ref = np.where(np.abs(g) <= math.sqrt(th) + 1e-9, geo.tri(th, g), -(g**2))
    q = rep.quantiles
    band = [[x, r + q[2, i], r + q[0, i], r + q[-1, i]] for i, (x, r) in enumerate(zip(g, ref))]
    return PointResult(rows, {f"band_theta{th:g}": (["x", "y", "band_lo", "band_hi"], band)})


def _shape_summary(results: list[PointResult]) -> list[Row]:
    meds = [(r.rows[0].params, r.rows[0].estimate) for r in results]
    if len(meds) < 2:
        return []
    (p0, m0), (p1, m1) = meds[0], meds[-1]
    params = {"theta": f"{p1['theta']:g}/{p0['theta']:g}"}
    return [Row(params, "inner_median_ratio", m1 / m0, 0.0, len(meds), 0.5, 2.0)]


# -- fkgbk -------------------------------------------------------------------

def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _fkgbk_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    grid = uniform_grid(0.0, p["length"], p["grid_step"])
    w, z = _floats(p["w"]), _floats(p["z"])
    if len(w) != 2 or len(z) != 2:
        raise DomainError("fkgbk: w and z need two values each")
    rows = []
    for r in est.fkg_bk_report(2, w, z, grid, _floats(p["thresholds"]), p["n"], handle.child(0)):
        lo, hi = (0.0, math.inf) if r.kind == "fkg" else (-math.inf, 0.0)
        rows.append(Row(p, f"{r.kind}:{r.label}", r.value, r.stderr, p["n"], lo, hi))
    snap = sample_nonintersecting(2, w, z, grid, rng=handle.child(1))
    return PointResult(rows, {"ensemble": snap})


# -- supint ------------------------------------------------------------------

def _supint_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    theta = _floats(p["theta"]) if p["theta"] else None
    header, srows = est.sup_interval_tail_check(theta, p["k"], p["n"], handle, p["half_width"], p["grid_step"])
    rows = []
    for r in srows:
        q = dict(p, theta=r.theta)
        rows.append(Row(q, "sup_minus_pointwise", r.lhs - r.rhs, math.hypot(r.lhs_se, r.rhs_se), p["n"],
                        -math.inf, 0.0))
    return PointResult(rows, notes=[header["surrogate"]])


# -- convolve ----------------------------------------------------------------

def _convolve_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    t, half, step = p["t"], p["half_width"], p["grid_step"]
    g = uniform_grid(-half, half, step)
    rows = []
    gauss = est.general_data_value(SampledPath(g, -(g**2) * t ** (-1.0 / 3.0)), SampledPath(g, np.zeros_like(g)), t)
    # path = -y^2 t^{-1/3} makes the integrand exp(-y^2)
    truth = 0.5 * math.log(math.pi) / t ** (1.0 / 3.0)
    rows.append(Row(p, "gaussian_integral", gauss, 0.0, g.size, truth - 1e-3, truth + 1e-3))
    M, c = 1.0, 0.5
    f = np.where(np.abs(g) <= M + 1e-12, 0.0, -np.inf)
    const = est.general_data_value(SampledPath(g, np.full_like(g, c)), SampledPath(g, f), t)
    truth = c + math.log(2 * M) / t ** (1.0 / 3.0)
    rows.append(Row(p, "constant_window", const, 0.0, g.size, truth - 1e-9, truth + 1e-9))
    cases = [
        ("hyp_window_pass", f, est.HypParams(1.0, 1.0, 1.0, 2.0), True),
        ("hyp_quadratic_fail", g**2, est.HypParams(1.0, 1.0, 1.0, 0.5), False),
        ("hyp_empty_fail", np.full_like(g, -np.inf), est.HypParams(1.0, 1.0, 1.0, 0.5), False),
    ]
    for name, vals, hp, expect in cases:
        res = est.hyp_check(SampledPath(g, vals), hp)
        v = float(res.passed)
        rows.append(Row(p, name, v, 0.0, g.size, float(expect), float(expect)))
    return PointResult(rows)


# -- geometry ----------------------------------------------------------------

def _geometry_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    spec = geo.TwoPointSpec(p["theta"], p["a"], p["b"])
    info = geo.describe(spec)
    rate = info["two_point_log_rate"]
    num = est.hull_energy_rate(spec)
    tol = 1e-4 * max(1.0, abs(num))  # quadrature error of the energy integral
    return PointResult([Row(p, "rate_vs_hull_energy", rate, 0.0, 1, num - tol, num + tol)], {"describe": info})


# -- recursion ---------------------------------------------------------------

def _recursion_point(p: dict, handle: RngHandle, mapper) -> PointResult:
    rows = []
    for n in range(p["n_max"] + 1):
        q = dict(p, n=n)
        C, gam, ratio = geo.lower_bound_recursion(n)
        Cc, gc, rc = geo.lower_bound_recursion_closed_form(n)
        rows.append(Row(q, "C_n", C, 0.0, 1, Cc - 1e-9, Cc + 1e-9))
        rows.append(Row(q, "gamma_n", float(gam), 0.0, 1, float(gc), float(gc)))
        rows.append(Row(q, "theta_ratio_n", float(ratio), 0.0, 1, float(rc), float(rc)))
    return PointResult(rows)


_STEP = Param("grid_step", float, 0.01, "grid spacing")
_REPS = Param("replicates", int, 16, "independent estimator replicates (fixed; independent of --replicas)")

EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment(
            "avoid",
            "Probability that a bridge between points 1 above the parabola stays above it, against the analytic sandwich.",
            "parabola avoidance probability bounds",
            (
                Param("z", float, 1.5, "half-width of the symmetric interval", sweep=True),
                Param("n", int, 100_000, "sample / particle budget"),
                _STEP,
                Param("method", str, "naive", "estimator", choices=("naive", "smc")),
                Param("margin", float, 1.0, "endpoint height above the parabola"),
                _REPS,
            ),
            _avoid_point,
            inner_parallel=True,
        ),
        Experiment(
            "tail1",
            "Tilted one-point upper tail against the 4/3 theta^{3/2} rate and its theta^{3/4} envelope.",
            "one-point upper tail asymptotics",
            (
                Param("theta", float, 4.0, "tail level", sweep=True),
                Param("n", int, 100_000, "numerator samples and denominator particles"),
                _STEP,
                _REPS,
                Param("envelope_c", float, 3.0, "constant multiplying the envelope"),
            ),
            _tail1_point,
            inner_parallel=True,
        ),
        Experiment(
            "tail2",
            "Two-point upper tail by guided SMC against the convex-hull rate.",
            "two-point upper tail asymptotics",
            (
                Param("theta", float, 1.0, "tail scale", sweep=True),
                Param("a", float, 0.0, "left level in units of theta"),
                Param("b", float, 0.0, "right level in units of theta (b <= a)"),
                Param("n", int, 100_000, "particles per SMC run"),
                _STEP,
                Param("margin", float, 1.0, "surrogate endpoint height above the parabola"),
                _REPS,
                Param("envelope_c", float, 3.0, "constant multiplying the envelope"),
            ),
            _tail2_point,
            inner_parallel=True,
        ),
        Experiment(
            "shape",
            "Gibbs chain conditioned on a high value at 0: deviation from the tent and the parabola.",
            "one-point conditional limit shape",
            (
                Param("theta", float, 16.0, "pin height", sweep=True),
                Param("sweeps", int, 1000, "recorded sweeps per chain"),
                Param("chains", int, 4, "independent chains"),
                Param("eps", float, 0.25, "pin window half-width"),
                Param("grid_step", float, 0.05, "grid spacing"),
            ),
            _shape_point,
            summary=_shape_summary,
        ),
        Experiment(
            "fkgbk",
            "Positive association and stochastic domination on two non-intersecting bridges.",
            "FKG and BK inequalities for line ensembles",
            (
                Param("n", int, 20_000, "exact ensemble samples"),
                Param("length", float, 1.0, "interval length"),
                Param("grid_step", float, 0.02, "grid spacing"),
                Param("w", str, "1,0", "entrance values, top first"),
                Param("z", str, "1,0", "exit values, top first"),
                Param("thresholds", str, "0.5,1,1.5", "event thresholds"),
            ),
            _fkgbk_point,
        ),
        Experiment(
            "supint",
            "Supremum over [-1,1] of the top curve plus x^2 against 4 theta times a one-point tail.",
            "supremum-over-interval tail comparison",
            (
                Param("theta", str, "", "comma-separated levels (empty: sample quantiles)"),
                Param("k", int, 3, "number of curves"),
                Param("n", int, 20_000, "exact ensemble samples"),
                Param("half_width", float, 2.0, "surrogate interval half-width"),
                Param("grid_step", float, 0.02, "grid spacing"),
            ),
            _supint_point,
        ),
        Experiment(
            "convolve",
            "Log-sum-exp convolution of a path with initial data, and the initial-data hypothesis checks.",
            "convolution formula for general initial data",
            (
                Param("t", float, 1.0, "time parameter", sweep=True),
                Param("half_width", float, 10.0, "grid half-width"),
                Param("grid_step", float, 0.001, "grid spacing"),
            ),
            _convolve_point,
        ),
        Experiment(
            "geometry",
            "Convex hull, tangency points and case label of a two-point spec; rate cross-checked by hull energy.",
            "convex-hull geometry of the two-point problem",
            (
                Param("theta", float, 1.0, "scale"),
                Param("a", float, 0.5, "left level"),
                Param("b", float, -0.9, "right level"),
            ),
            _geometry_point,
        ),
        Experiment(
            "recursion",
            "Iterated lower-bound constants against their closed forms.",
            "lower-tail recursion constants",
            (Param("n_max", int, 20, "largest iteration count"),),
            _recursion_point,
        ),
    ]
}


def list_experiments() -> list[tuple[str, str, str]]:
    return [(e.name, e.doc, e.anchor) for e in EXPERIMENTS.values()]


def get(name: str) -> Experiment:
    try:
        return EXPERIMENTS[name]
    except KeyError:
        raise DomainError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}") from None
