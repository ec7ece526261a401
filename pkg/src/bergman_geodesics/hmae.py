"""Monge-Ampere masses, Dirichlet residuals and upper envelopes of paths.

A path of S^1-invariant metrics is stored through its fiber potential
psi(t, x) on a (t, x) grid.  The reduced Monge-Ampere density is the
(t, x)-Hessian determinant

    D = psi_tt psi_xx - psi_tx^2 = psi_xx (phi_tt - phi_tx^2 / psi_xx),

and the total mass is ANGULAR_CONSTANT * int int D dx dt.  Integrating
d/dt int psi_t psi_xx dx by parts shows the constant is 1 with the volume
form dp = psi_xx dx; ``calibrate_angular_constant`` re-derives it on the
linear path, where both sides are known in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import polygamma

from .errors import DegenerateMetric, GridMismatch, NotSummable
from .geometry import (
    X_MAX,
    ConvexCombination,
    build_quadrature,
    default_quadrature,
    fs_density,
    moment_inverse,
    softplus,
)

ANGULAR_CONSTANT = 1.0
DEFAULT_T_NODES = 129
DEFAULT_X_NODES = 801


def default_grid(t_nodes=DEFAULT_T_NODES, x_nodes=DEFAULT_X_NODES, x_max=X_MAX):
    return np.linspace(0.0, 1.0, int(t_nodes)), np.linspace(-x_max, x_max, int(x_nodes))


@dataclass
class PathGrid:
    """Samples psi(t_i, x_j) of a path, with optional analytic derivatives.

    ``phi0`` and ``phi1`` are the prescribed endpoint potentials.  ``k`` is
    the Bergman level, 0 for paths that are not Bergman geodesics.
    """

    t: np.ndarray
    x: np.ndarray
    psi: np.ndarray
    psi_t: np.ndarray | None = None
    psi_x: np.ndarray | None = None
    psi_xx: np.ndarray | None = None
    psi_tt: np.ndarray | None = None
    psi_tx: np.ndarray | None = None
    phi0: object = None
    phi1: object = None
    k: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, float)
        self.x = np.asarray(self.x, float)
        self.psi = np.asarray(self.psi, float)
        if self.psi.shape != (self.t.size, self.x.size):
            raise GridMismatch(f"values of shape {self.psi.shape} on a {self.t.size}x{self.x.size} grid")
        for g in (self.t, self.x):
            if g.size > 1 and np.any(np.diff(g) <= 0):
                raise GridMismatch("grid nodes must be strictly increasing")

    @property
    def phi(self):
        """phi(t) relative to the Fubini-Study metric."""
        return self.psi - softplus(self.x)

    @property
    def relative(self):
        """phi(t) relative to the starting metric h0."""
        return self.psi - self.phi0.psi(self.x)

    @property
    def has_jet(self):
        return all(a is not None for a in (self.psi_t, self.psi_xx, self.psi_tt, self.psi_tx))

    def same_grid(self, other):
        return (self.t.shape == other.t.shape and self.x.shape == other.x.shape
                and np.array_equal(self.t, other.t) and np.array_equal(self.x, other.x))


def sample_path(bg, t=None, x=None):
    """Sample a Bergman geodesic and its analytic jet on a grid."""
    t0, x0 = default_grid()
    t = t0 if t is None else np.asarray(t, float)
    x = x0 if x is None else np.asarray(x, float)
    out = {n: np.empty((t.size, x.size)) for n in ("psi", "psi_t", "psi_x", "psi_xx", "psi_tt", "psi_tx")}
    for i, ti in enumerate(t):
        jet = bg.jet(ti, x)
        for n in out:
            out[n][i] = getattr(jet, n)
    return PathGrid(t, x, phi0=bg.phi0, phi1=bg.phi1, k=bg.k, meta={"source": "bergman"}, **out)


def sample_potentials(slices, t, x, phi0=None, phi1=None, k=0):
    """PathGrid from a callable t -> RadialPotential, derivatives in t left to finite differences."""
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    pots = [slices(ti) for ti in t]
    psi = np.array([p.psi(x) for p in pots])
    psi_xx = np.array([p.ddpsi(x) for p in pots])
    psi_x = np.array([p.dpsi(x) for p in pots])
    return PathGrid(t, x, psi, psi_x=psi_x, psi_xx=psi_xx,
                    phi0=pots[0] if phi0 is None else phi0,
                    phi1=pots[-1] if phi1 is None else phi1, k=k)


class LinearPath:
    """phi_t = (1 - t) phi0 + t phi1, the naive comparison path.

    Its reduced Monge-Ampere density is D = -(phi1' - phi0')^2 <= 0.
    """

    def __init__(self, phi0, phi1):
        self.phi0 = phi0
        self.phi1 = phi1

    def slice(self, t):
        return ConvexCombination(self.phi0, self.phi1, float(t))

    def sample(self, t=None, x=None):
        t0, x0 = default_grid()
        t = t0 if t is None else np.asarray(t, float)
        x = x0 if x is None else np.asarray(x, float)
        p0, p1 = self.phi0, self.phi1
        dphi = p1.phi(x) - p0.phi(x)
        ddphi = p1.dphi(x) - p0.dphi(x)
        T = t[:, None]
        psi = (1 - T) * p0.psi(x) + T * p1.psi(x)
        psi_x = (1 - T) * p0.dpsi(x) + T * p1.dpsi(x)
        psi_xx = (1 - T) * p0.ddpsi(x) + T * p1.ddpsi(x)
        ones = np.ones_like(T)
        return PathGrid(t, x, psi, psi_t=ones * dphi, psi_x=psi_x, psi_xx=psi_xx,
                        psi_tt=np.zeros_like(psi), psi_tx=ones * ddphi,
                        phi0=p0, phi1=p1, meta={"source": "linear"})


def _fd_jet(path):
    """Second-order centered differences of phi = psi - softplus, FS part added analytically."""
    phi = path.phi
    phi_t = np.gradient(phi, path.t, axis=0, edge_order=2)
    phi_tt = np.gradient(phi_t, path.t, axis=0, edge_order=2)
    phi_tx = np.gradient(phi_t, path.x, axis=1, edge_order=2)
    if path.psi_xx is not None:
        psi_xx = path.psi_xx
    else:
        phi_x = np.gradient(phi, path.x, axis=1, edge_order=2)
        psi_xx = np.gradient(phi_x, path.x, axis=1, edge_order=2) + fs_density(path.x)
    return phi_t, psi_xx, phi_tt, phi_tx


def path_jet(path):
    """(psi_t, psi_xx, psi_tt, psi_tx), analytic when stored, else finite differences."""
    if path.has_jet:
        return path.psi_t, path.psi_xx, path.psi_tt, path.psi_tx
    return _fd_jet(path)


def ma_density(path, t=None, x=None):
    """Hessian determinant D = psi_tt psi_xx - psi_tx^2.

    ``path`` is either a PathGrid (returns the full grid) or a Bergman
    geodesic evaluated at (t, x).
    """
    if isinstance(path, PathGrid):
        psi_t, psi_xx, psi_tt, psi_tx = path_jet(path)
    else:
        jet = path.jet(t, x)
        psi_xx, psi_tt, psi_tx = jet.psi_xx, jet.psi_tt, jet.psi_tx
    if np.any(psi_xx <= 0):
        raise DegenerateMetric("psi'' <= 0 on the path")
    return psi_tt * psi_xx - psi_tx**2


def _trapz2(f, t, x):
    return float(np.trapezoid(np.trapezoid(f, x, axis=1), t))


def ma_mass_bulk(path):
    """ANGULAR_CONSTANT * int_0^1 int D dx dt by the trapezoid rule."""
    return ANGULAR_CONSTANT * _trapz2(ma_density(path), path.t, path.x)


def energy_derivative(path, t, quad=None):
    """int phi_dot(t) dp_t, the t-derivative of the Aubin-Yau functional (volume 1).

    For a Bergman geodesic the integral is taken by Gauss-Legendre in the
    moment variable of the slice at t; for a PathGrid ``t`` is a row index.
    """
    if isinstance(path, PathGrid):
        psi_t, psi_xx, _, _ = path_jet(path)
        return float(np.trapezoid(psi_t[t] * psi_xx[t], path.x))
    quad = default_quadrature(path.k) if quad is None else quad
    xs = moment_inverse(path.slice(t), quad.logit_nodes)
    jet = path.jet(float(t), xs)
    return float(quad.weights @ jet.psi_t)


def ma_mass_boundary(bg, quad=None):
    """int phi_dot(1) dp_1 - int phi_dot(0) dp_0, no (t, x) grid involved."""
    return energy_derivative(bg, 1.0, quad) - energy_derivative(bg, 0.0, quad)


def calibrate_angular_constant(phi0, phi1, t=None, x=None):
    """Ratio of boundary to bulk mass on the linear path between phi0 and phi1.

    The boundary side is int (phi1 - phi0) (psi1'' - psi0'') dx and the bulk
    side -int (phi1' - phi0')^2 dx; the two agree after integration by parts.
    """
    path = LinearPath(phi0, phi1).sample(t, x)
    f = phi1.phi(path.x) - phi0.phi(path.x)
    boundary = np.trapezoid(f * (phi1.ddpsi(path.x) - phi0.ddpsi(path.x)), path.x)
    bulk = _trapz2(ma_density(path), path.t, path.x)
    return float(boundary / bulk)


def path_energy(path):
    """int_0^1 int phi_dot^2 dp_t dt on the grid."""
    psi_t, psi_xx, _, _ = path_jet(path)
    return _trapz2(psi_t**2 * psi_xx, path.t, path.x)


@dataclass(frozen=True)
class MAMassReport:
    k: int
    boundary_value: float
    bulk_value: float
    t_nodes: int
    x_nodes: int
    x_max: float

    @property
    def relative_gap(self):
        scale = max(abs(self.boundary_value), abs(self.bulk_value))
        return abs(self.boundary_value - self.bulk_value) / scale if scale > 0 else 0.0


def ma_mass_report(bg, t=None, x=None, quad=None):
    path = sample_path(bg, t, x)
    return MAMassReport(bg.k, ma_mass_boundary(bg, quad), ma_mass_bulk(path),
                        path.t.size, path.x.size, float(path.x[-1]))


@dataclass(frozen=True)
class MassDecayTable:
    k: np.ndarray
    mass: np.ndarray
    slope: float
    k_times_mass_max: float
    k_times_mass_min: float

    @property
    def ratio(self):
        return self.k_times_mass_max / self.k_times_mass_min


def ma_mass_decay_study(pair, k_list, quad=None):
    """Boundary masses per level and the least-squares log-log slope."""
    from .bergman import bergman_geodesic

    k_arr = np.asarray(list(k_list), int)
    if k_arr.size == 0 or np.any(np.diff(k_arr) <= 0):
        raise ValueError("k_list must be nonempty and strictly increasing")
    phi0, phi1 = pair
    mass = np.array([ma_mass_boundary(bergman_geodesic(phi0, phi1, k), quad) for k in k_arr])
    km = k_arr * mass
    if k_arr.size > 1 and np.all(mass > 0):
        slope = float(np.polyfit(np.log(k_arr), np.log(mass), 1)[0])
    else:
        slope = float("nan")
    return MassDecayTable(k_arr, mass, slope, float(km.max()), float(km.min()))


def hessian_min_eigenvalue(psi_tt, psi_tx, psi_xx):
    """Smaller eigenvalue of [[psi_tt, psi_tx], [psi_tx, psi_xx]] without cancellation."""
    half = 0.5 * (psi_tt + psi_xx)
    big = half + np.hypot(0.5 * (psi_tt - psi_xx), psi_tx)
    det = psi_tt * psi_xx - psi_tx**2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(big > 0, det / big, half - np.hypot(0.5 * (psi_tt - psi_xx), psi_tx))


def dirichlet_residual_report(path):
    """Boundary mismatch, minimal Hessian eigenvalue and sup |D| on the interior grid."""
    psi_t, psi_xx, psi_tt, psi_tx = path_jet(path)
    x = path.x
    mismatch0 = np.abs(path.psi[0] - path.phi0.psi(x)).max()
    mismatch1 = np.abs(path.psi[-1] - path.phi1.psi(x)).max()
    inner = (slice(1, -1), slice(1, -1))
    D = psi_tt * psi_xx - psi_tx**2
    lam = hessian_min_eigenvalue(psi_tt, psi_tx, psi_xx)
    return {
        "boundary_mismatch": float(max(mismatch0, mismatch1)),
        "boundary_mismatch_t0": float(mismatch0),
        "boundary_mismatch_t1": float(mismatch1),
        "hessian_min": float(lam[inner].min()),
        "hmae_residual": float(np.abs(D[inner]).max()),
        "region": "interior",
    }


@dataclass(frozen=True)
class ShiftSchedule:
    k: np.ndarray
    a: np.ndarray
    c: np.ndarray
    tail: float


def monotone_shift(boundary_errors, k_values=None, cap=1e6):
    """c_k = 2 sum_{j >= k} a_j for a positive decreasing summable sequence.

    ``k_values`` are consecutive integers by default.  Beyond the last one
    the sequence is continued as C / j^2 with C fixed by the last term, and
    its exact remainder 2 C psi_1(k_max + 1) (trigamma) is included.
    """
    a = np.asarray(boundary_errors, float)
    k = np.arange(1, a.size + 1) if k_values is None else np.asarray(k_values, int)
    if a.size == 0 or a.shape != k.shape:
        raise ValueError("need one error per level")
    if np.any(a <= 0) or np.any(np.diff(a) > 0):
        raise ValueError("boundary errors must be positive and nonincreasing")
    if np.any(np.diff(k) != 1):
        raise ValueError("levels must be consecutive; use inverse_square_shift for sparse lists")
    tail = float(a[-1] * k[-1] ** 2 * polygamma(1, k[-1] + 1))
    suffix = np.cumsum(a[::-1])[::-1]
    if suffix[0] + tail > cap:
        raise NotSummable(f"sum of boundary errors {suffix[0] + tail:.3e} exceeds cap {cap:.1e}")
    return ShiftSchedule(k, a, 2 * (suffix + tail), tail)


def inverse_square_shift(k_list, boundary_errors):
    """Default schedule a_k = C / k^2, C = max measured error * k^2, on a sparse list of levels.

    c_k = 2 C psi_1(k) sums C / j^2 over every integer j >= k.
    """
    k = np.asarray(k_list, int)
    err = np.asarray(boundary_errors, float)
    C = float(np.max(err * k.astype(float) ** 2))
    a = C / k.astype(float) ** 2
    return ShiftSchedule(k, a, 2 * C * polygamma(1, k), 0.0)


def shifted_boundary_decreasing(paths, shifts):
    """True when phi(t;k) + c_k strictly decreases in k on both boundary rows."""
    order = np.argsort([p.k for p in paths])
    c = dict(zip(np.asarray(shifts.k).tolist(), np.asarray(shifts.c).tolist()))
    rows = np.array([[paths[i].relative[0], paths[i].relative[-1]] for i in order])
    rows = rows + np.array([c[paths[i].k] for i in order])[:, None, None]
    return bool(np.all(np.diff(rows, axis=0) < 0))


@dataclass(frozen=True)
class EnvelopeGrid:
    t: np.ndarray
    x: np.ndarray
    values: np.ndarray
    l: int
    k_max: int
    shifts: dict
    usc_identity: bool


def _neighbor_max(v):
    p = np.pad(v, 1, mode="edge")
    n, m = v.shape
    return np.max([p[i:i + n, j:j + m] for i in range(3) for j in range(3)], axis=0)


def envelope(paths, l, shifts=None):
    """Pointwise max over levels k >= l of phi(t;k) + c_k, relative to h0.

    The upper semicontinuous regularisation of a finite max of continuous
    functions is the max itself.  On the grid this is checked by comparing
    the 3x3 neighbourhood excess of the envelope with that of its members.
    """
    part = [p for p in paths if p.k >= l]
    if not part:
        raise ValueError(f"no level >= {l}")
    ref = part[0]
    for p in part[1:]:
        if not p.same_grid(ref):
            raise GridMismatch("participants sampled on different grids")
    c = {} if shifts is None else dict(zip(np.asarray(shifts.k).tolist(), np.asarray(shifts.c).tolist()))
    vals = np.array([p.relative + c.get(p.k, 0.0) for p in part])
    env = vals.max(axis=0)
    excess = _neighbor_max(env) - env
    member_excess = np.max([_neighbor_max(v) - v for v in vals], axis=0)
    usc = bool(np.all(excess <= member_excess))
    return EnvelopeGrid(ref.t, ref.x, env, int(l), max(p.k for p in part), c, usc)


__all__ = [
    "ANGULAR_CONSTANT", "PathGrid", "MAMassReport", "MassDecayTable", "EnvelopeGrid",
    "ShiftSchedule", "LinearPath", "default_grid", "sample_path", "sample_potentials",
    "path_jet", "ma_density", "ma_mass_bulk", "ma_mass_boundary", "ma_mass_report",
    "ma_mass_decay_study", "energy_derivative", "path_energy", "calibrate_angular_constant",
    "dirichlet_residual_report", "hessian_min_eigenvalue", "monotone_shift",
    "inverse_square_shift", "shifted_boundary_decreasing", "envelope",
]
