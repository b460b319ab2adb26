"""Brute-force quadrature of small discretised ensembles.

On a grid with a handful of interior points, the target law of a one- or
two-curve ensemble is a density on a low-dimensional box.  Integrating it on
a value mesh by transfer matrices gives marginals that are independent of
every sampler in the package, which is what makes them useful as a check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .brownian import DEFAULT_RATE
from .errors import DomainError
from .gibbs import Hamiltonian, trapezoid_weights


@dataclass(frozen=True)
class Marginal:
    mesh: np.ndarray
    density: np.ndarray  # normalised so that trapezoid(density, mesh) == 1

    def cdf(self, x) -> np.ndarray:
        c = np.concatenate([[0.0], np.cumsum(0.5 * (self.density[1:] + self.density[:-1]) * np.diff(self.mesh))])
        return np.interp(x, self.mesh, c / c[-1])

    def bin_probabilities(self, edges) -> np.ndarray:
        return np.diff(self.cdf(np.asarray(edges, dtype=float)))

    def quantile(self, q) -> np.ndarray:
        c = self.cdf(self.mesh)
        return np.interp(q, c, self.mesh)


def _kernel(u: np.ndarray, v: np.ndarray, var: float) -> np.ndarray:
    return np.exp(-((v[None, :] - u[:, None]) ** 2) / (2.0 * var))


def _site_factor(vals, above, below, h: Hamiltonian, weight: float) -> np.ndarray:
    """Interaction factor of a curve value with fixed neighbours at one site."""
    out = np.ones_like(vals)
    if h.zero_temperature:
        if above is not None:
            out = out * (vals < above)
        if below is not None:
            out = out * (vals > below)
        return out
    pen = np.zeros_like(vals)
    if above is not None:
        pen = pen + h(vals - above)
    if below is not None:
        pen = pen + h(below - vals)
    return np.exp(-weight * pen)


def ensemble_marginals(
    grid,
    left_values,
    right_values,
    lower=None,
    h: Hamiltonian = Hamiltonian(None),
    mesh=None,
    rate: float = DEFAULT_RATE,
    site: int | None = None,
) -> list[Marginal]:
    """Marginal law of each curve at interior grid index ``site``.

    Supports one or two curves.  The mesh is shared by all sites; it must
    cover the bulk of the law (a default of +-8 standard deviations around
    the endpoint range is used when omitted).
    """
    grid = np.asarray(grid, dtype=float)
    w = np.asarray(left_values, dtype=float)
    z = np.asarray(right_values, dtype=float)
    k = w.size
    if k not in (1, 2):
        raise DomainError("quadrature oracle supports one or two curves")
    m = grid.size
    if m < 3:
        raise DomainError("need at least one interior point")
    site = m // 2 if site is None else site
    if not 0 < site < m - 1:
        raise DomainError("site must be interior")
    low = None if lower is None else np.asarray(getattr(lower, "values", lower), dtype=float)
    if mesh is None:
        span = 8.0 * math.sqrt(rate * (grid[-1] - grid[0]) / 4.0)
        top = max(w.max(), z.max()) + span
        bot = min(w.min(), z.min()) - span
        if low is not None:
            bot = max(bot, float(low.min()) - 1.0)
        mesh = np.linspace(bot, top, 241)
    mesh = np.asarray(mesh, dtype=float)
    dv = np.gradient(mesh)
    tw = trapezoid_weights(grid)
    dx = np.diff(grid)

    if k == 1:
        # forward messages over interior sites; values are row vectors over mesh
        def fac(j):
            be = None if low is None else low[j]
            return _site_factor(mesh, None, be, h, tw[j]) * dv

        fwd = np.exp(-((mesh - w[0]) ** 2) / (2.0 * rate * dx[0])) * fac(1)
        for j in range(2, site + 1):
            fwd = (fwd @ _kernel(mesh, mesh, rate * dx[j - 1])) * fac(j)
        bwd = np.exp(-((z[0] - mesh) ** 2) / (2.0 * rate * dx[-1]))
        for j in range(m - 2, site, -1):
            bwd = _kernel(mesh, mesh, rate * dx[j - 1]) @ (fac(j) * bwd)
        dens = fwd * bwd / dv
        dens /= np.trapezoid(dens, mesh)
        return [Marginal(mesh, dens)]

    # two curves: joint state is a (top, bottom) pair on mesh x mesh
    top_v, bot_v = np.meshgrid(mesh, mesh, indexing="ij")
    cell = np.outer(dv, dv)

    def fac2(j):
        order = top_v > bot_v if h.zero_temperature else np.exp(-tw[j] * h(bot_v - top_v))
        be = None if low is None else low[j]
        f = order * _site_factor(bot_v, None, be, h, tw[j])
        return f * cell

    def step(a, var):
        K = _kernel(mesh, mesh, var)
        return K.T @ a @ K

    def stepT(a, var):
        K = _kernel(mesh, mesh, var)
        return K @ a @ K.T

    g0 = np.exp(-((mesh - w[0]) ** 2) / (2 * rate * dx[0]))
    g1 = np.exp(-((mesh - w[1]) ** 2) / (2 * rate * dx[0]))
    fwd = np.outer(g0, g1) * fac2(1)
    for j in range(2, site + 1):
        fwd = step(fwd, rate * dx[j - 1]) * fac2(j)
    h0 = np.exp(-((z[0] - mesh) ** 2) / (2 * rate * dx[-1]))
    h1 = np.exp(-((z[1] - mesh) ** 2) / (2 * rate * dx[-1]))
    bwd = np.outer(h0, h1)
    for j in range(m - 2, site, -1):
        bwd = stepT(fac2(j) * bwd, rate * dx[j - 1])
    joint = fwd * bwd / cell
    top = joint.sum(axis=1) * dv
    bot = joint.sum(axis=0) * dv
    return [Marginal(mesh, top / np.trapezoid(top, mesh)), Marginal(mesh, bot / np.trapezoid(bot, mesh))]
