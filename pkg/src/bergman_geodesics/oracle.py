"""Exact geodesics between S^1-invariant metrics, their certification, and
convergence measurements of Bergman geodesics against them.

Geodesics are straight lines in the symplectic potential: with
u_t = (1 - t) u_0 + t u_1 the fiber potential of the geodesic is the
Legendre transform of u_t.  Along it, at fixed x with p = psi_x,

    psi_t = -(delta_1 - delta_0)(p),   psi_tx = (r_0 - r_1) psi_xx,
    psi_tt = (r_0 - r_1)^2 psi_xx,

so the reduced Monge-Ampere density vanishes identically.  The
certification in ``geodesic_equation_residual`` ignores these formulas and
differentiates the sampled values instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetric, GridMismatch, OutOfDomain
from .geometry import (
    X_MAX,
    default_logit_grid,
    inverse_legendre,
    legendre_transform,
)
from .hmae import PathGrid, default_grid, envelope, sample_path

ORACLE_Y_MAX = X_MAX + 12.0

# central 7-point stencils, sixth order
_D1 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_D2 = np.array([2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0]) / 180.0
MARGIN = 3


def oracle_logit_grid(step=0.02):
    return default_logit_grid(ORACLE_Y_MAX, step)


@dataclass
class GeodesicPath:
    """Sampled exact geodesic.

    ``grid`` holds values only; ``analytic`` carries the same values with
    the closed-form jet from the Legendre representation.
    """

    grid: PathGrid
    analytic: PathGrid
    y_grid: np.ndarray
    roundtrip_error: float

    @property
    def phi0(self):
        return self.grid.phi0

    @property
    def phi1(self):
        return self.grid.phi1


def exact_geodesic(phi0, phi1, t=None, x=None, y_grid=None):
    t0, x0 = default_grid()
    t = t0 if t is None else np.asarray(t, float)
    x = x0 if x is None else np.asarray(x, float)
    y_grid = oracle_logit_grid() if y_grid is None else np.asarray(y_grid, float)
    u0 = legendre_transform(phi0, y_grid=y_grid)
    u1 = legendre_transform(phi1, y_grid=y_grid)
    d0, r0 = u0.interpolants()
    d1, r1 = u1.interpolants()
    shape = (t.size, x.size)
    psi, psi_t, psi_x, psi_xx, psi_tt, psi_tx = (np.empty(shape) for _ in range(6))
    for i, ti in enumerate(t):
        fib, y, slope = inverse_legendre(u0.combine(u1, ti), x, return_jet=True)
        p = np.exp(-np.logaddexp(0.0, -y))
        q = np.exp(-np.logaddexp(0.0, y))
        dxx = p * q / slope
        gap = r0(y) - r1(y)
        psi[i] = fib.psi
        psi_x[i] = p
        psi_xx[i] = dxx
        psi_t[i] = d0(y) - d1(y)
        psi_tx[i] = gap * dxx
        psi_tt[i] = gap**2 * dxx
    err = max(np.abs(psi[0] - phi0.psi(x)).max(), np.abs(psi[-1] - phi1.psi(x)).max())
    meta = {"source": "oracle"}
    grid = PathGrid(t, x, psi, psi_x=psi_x, psi_xx=psi_xx, phi0=phi0, phi1=phi1, meta=meta)
    analytic = PathGrid(t, x, psi, psi_t=psi_t, psi_x=psi_x, psi_xx=psi_xx, psi_tt=psi_tt,
                        psi_tx=psi_tx, phi0=phi0, phi1=phi1, meta=meta)
    return GeodesicPath(grid, analytic, y_grid, float(err))


def _stencil(v, coef, h, axis):
    v = np.moveaxis(v, axis, 0)
    n = v.shape[0]
    out = sum(c * v[j:n - 6 + j] for j, c in enumerate(coef) if c != 0.0)
    return np.moveaxis(out / h, 0, axis)


def _uniform_step(g):
    h = np.diff(g)
    if not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise GridMismatch("sixth-order differences need a uniform grid")
    return float(h[0])


def geodesic_equation_residual(path, return_grid=False):
    """sup over the interior of |phi_tt - phi_tx^2 / psi_xx|.

    Time derivatives are sixth-order centered differences of the sampled
    values.  When the path stores its spatial slope psi_x and density psi_xx
    (as the Legendre construction does) phi_tx is the time difference of
    psi_x; otherwise spatial derivatives are differenced too.  The outer
    three nodes on each side are the stencil margin.
    """
    if isinstance(path, GeodesicPath):
        path = path.grid
    if path.t.size < 2 * MARGIN + 1 or path.x.size < 2 * MARGIN + 1:
        raise GridMismatch("grid too small for the sixth-order stencil")
    ht, hx = _uniform_step(path.t), _uniform_step(path.x)
    phi = path.phi
    phi_tt = _stencil(phi, _D2, ht * ht, 0)[:, MARGIN:-MARGIN]
    inner = (slice(MARGIN, -MARGIN), slice(MARGIN, -MARGIN))
    if path.psi_x is not None:
        phi_tx = _stencil(path.psi_x, _D1, ht, 0)[:, MARGIN:-MARGIN]
    else:
        phi_tx = _stencil(_stencil(phi, _D1, ht, 0), _D1, hx, 1)
    if path.psi_xx is not None:
        psi_xx = path.psi_xx[inner]
    else:
        from .geometry import fs_density

        psi_xx = _stencil(phi, _D2, hx * hx, 1)[MARGIN:-MARGIN] + fs_density(path.x[MARGIN:-MARGIN])
    if np.any(psi_xx <= 0):
        raise DegenerateMetric("psi'' <= 0 on the path")
    res = phi_tt - phi_tx**2 / psi_xx
    sup = float(np.abs(res).max())
    return (sup, res) if return_grid else sup


@dataclass(frozen=True)
class ConvergenceReport:
    k: np.ndarray
    level_errors: np.ndarray
    l: np.ndarray
    envelope_errors: np.ndarray
    level_slope: float
    envelope_slope: float
    t_nodes: int
    x_nodes: int

    @property
    def envelope_nonincreasing(self):
        return bool(np.all(np.diff(self.envelope_errors) <= 0))

    @property
    def envelope_strictly_decreasing(self):
        return bool(np.all(np.diff(self.envelope_errors) < 0))


def _slope(k, e):
    if len(k) < 2 or np.any(np.asarray(e) <= 0):
        return float("nan")
    return float(np.polyfit(np.log(k), np.log(e), 1)[0])


def convergence_study(pair, k_list, l_list, t=None, x=None, shifts=None, oracle=None):
    """Sup-norm distances of Bergman geodesics and their envelopes to the exact geodesic."""
    from .bergman import bergman_geodesic

    phi0, phi1 = pair
    t0, x0 = default_grid()
    t = t0 if t is None else np.asarray(t, float)
    x = x0 if x is None else np.asarray(x, float)
    oracle = exact_geodesic(phi0, phi1, t, x) if oracle is None else oracle
    if not oracle.grid.same_grid(PathGrid(t, x, np.zeros((t.size, x.size)))):
        raise GridMismatch("oracle sampled on a different grid")
    exact = oracle.grid.relative
    k_arr = np.asarray(list(k_list), int)
    paths = [sample_path(bergman_geodesic(phi0, phi1, k), t, x) for k in k_arr]
    e_k = np.array([np.abs(p.relative - exact).max() for p in paths])
    l_arr = np.asarray(list(l_list), int)
    E_l = np.array([np.abs(envelope(paths, l, shifts).values - exact).max() for l in l_arr])
    return ConvergenceReport(k_arr, e_k, l_arr, E_l, _slope(k_arr, e_k), _slope(l_arr, E_l),
                             t.size, x.size)


SPEED_FACTORS = {"dual": np.sqrt(2.0), "half": 0.5}


def arclength(path, speed="dual"):
    """Cumulative spatial arclength S(t_i, x_j) with ds = kappa sqrt(psi_xx) dx."""
    kappa = SPEED_FACTORS[speed] if isinstance(speed, str) else float(speed)
    psi_xx = path.psi_xx if path.psi_xx is not None else path_jet_xx(path)
    v = kappa * np.sqrt(psi_xx)
    seg = 0.5 * (v[:, 1:] + v[:, :-1]) * np.diff(path.x)
    return np.concatenate([np.zeros((path.t.size, 1)), np.cumsum(seg, axis=1)], axis=1)


def path_jet_xx(path):
    from .hmae import path_jet

    return path_jet(path)[1]


def geodesic_distance(path, point_a, point_b, window=8, speed="dual", S=None):
    """Discrete inf over t-monotone grid paths of sum (Delta s)^2 / Delta t.

    Segments move at most ``window`` x-nodes per t-step; a segment's length
    is the mean of its arclength in the metrics at both ends of the step.
    Endpoints snap to the nearest grid nodes.  Returns inf when b is outside
    the reachable cone of a.
    """
    (ta, xa), (tb, xb) = point_a, point_b
    if not ta < tb:
        raise OutOfDomain("need t_a < t_b")
    t, x = path.t, path.x
    for tv, xv in ((ta, xa), (tb, xb)):
        if not (t[0] <= tv <= t[-1] and x[0] <= xv <= x[-1]):
            raise OutOfDomain(f"point ({tv}, {xv}) outside the grid")
    ia, ib = int(np.abs(t - ta).argmin()), int(np.abs(t - tb).argmin())
    ja, jb = int(np.abs(x - xa).argmin()), int(np.abs(x - xb).argmin())
    if ib <= ia:
        ib = ia + 1
        if ib >= t.size:
            raise OutOfDomain("points closer in t than one grid step at the end of the grid")
    S = arclength(path, speed) if S is None else S
    nx = x.size
    cost = np.full(nx, np.inf)
    cost[ja] = 0.0
    for i in range(ia, ib):
        dt = t[i + 1] - t[i]
        new = np.full(nx, np.inf)
        for d in range(-window, window + 1):
            lo, hi = max(0, -d), min(nx, nx - d)
            src = np.arange(lo, hi)
            dst = src + d
            ds = 0.5 * (np.abs(S[i, dst] - S[i, src]) + np.abs(S[i + 1, dst] - S[i + 1, src]))
            new[lo + d:hi + d] = np.minimum(new[lo + d:hi + d], cost[src] + ds**2 / dt)
        cost = new
    return float(cost[jb])


__all__ = [
    "GeodesicPath", "ConvergenceReport", "exact_geodesic", "geodesic_equation_residual",
    "convergence_study", "geodesic_distance", "arclength", "oracle_logit_grid", "SPEED_FACTORS",
]
