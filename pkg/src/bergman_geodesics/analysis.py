"""Spectral statistics and auxiliary estimates along Bergman geodesics.

At a point (t, x) the softmax weights of a Bergman geodesic define a law
on the exponents: P(Z = lambda_j) = P_j(t, x).  Then

    phi_dot = (2/k) E[Z],   phi_ddot = (4/k) Var(Z).

The Harnack checks use L = 2 phi_dot.  Pointwise, L_t >= (L')^2 / (2 psi'')
is equivalent to the nonnegative geodesic defect phi_ddot - phi_dot'^2/psi''.
Integrated along a t-monotone curve with spatial speed ds = kappa sqrt(psi'') dx
this gives

    phi_dot(xi, tau) <= phi_dot(X, T) + Delta / (4 kappa^2),

so kappa = sqrt(2) ("dual" speed) yields the constant 1/8 and kappa = 1/2
("half" speed) only the constant 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bergman import bergman_geodesic, geodesic_accel, geodesic_velocity
from .errors import DegenerateMetric
from .geometry import scan_grid
from .hmae import default_grid, sample_path
from .oracle import SPEED_FACTORS, arclength, geodesic_distance

DEFAULT_SEED = 0x5EED


@dataclass(frozen=True)
class SpectralDistribution:
    support: np.ndarray
    probabilities: np.ndarray
    k: int
    t: object
    x: object

    @property
    def total(self):
        return self.probabilities.sum(axis=-1)

    @property
    def mean(self):
        return self.probabilities @ self.support

    @property
    def variance(self):
        dev = self.support - self.mean[..., None]
        return np.einsum("...j,...j->...", self.probabilities, dev * dev)


def spectral_distribution(bg, t, x):
    """Law of Z at (t, x); support ordered like the spectrum (descending)."""
    return SpectralDistribution(bg.lambdas, bg.probabilities(t, x), bg.k, t, x)


def _second_difference(f, h):
    """Five-point centered second derivative of f at 0, fourth order."""
    return (-f(2 * h) + 16 * f(h) - 30 * f(0.0) + 16 * f(-h) - f(-2 * h)) / (12 * h * h)


def _increment(bg, t, x):
    """s -> phi(t + s; k) - phi(t; k) - s * phi_dot(t; k), without cancellation.

    With P_j the weights at (t, x) the increment of the geodesic is
    (1/k) log sum_j P_j e^{L_j s}.  Centering L at its mean removes the
    linear part, which the difference stencil annihilates anyway, and
    log1p / expm1 keep the O(s^2) remainder at full relative precision.
    """
    P = bg.probabilities(t, x)
    L = bg.slopes - (P @ bg.slopes)[..., None]

    def g(s):
        return np.log1p(np.einsum("...j,...j->...", P, np.expm1(L * s))) / bg.k

    return g


def variance_check(bg, t, x, fd_step=1e-2):
    """Compare phi_ddot with (4/k) Var(Z) and with finite differences in t.

    ``t`` and ``x`` broadcast.  The geodesic formula is analytic for all
    real t, so the stencil may reach outside [0, 1].
    """
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    dist = spectral_distribution(bg, t, x)
    accel = geodesic_accel(bg, t, x)
    from_var = 4.0 * dist.variance / bg.k
    fd = _second_difference(_increment(bg, t, x), fd_step)
    scale = np.maximum(np.abs(accel), np.finfo(float).tiny)
    vel = geodesic_velocity(bg, t, x)
    return {
        "k": bg.k,
        "variance_rel_error": float(np.max(np.abs(accel - from_var) / scale)),
        "fd_rel_error": float(np.max(np.abs(accel - fd) / scale)),
        "mean_rel_error": float(np.max(np.abs(0.5 * bg.k * vel - dist.mean)
                                       / np.maximum(np.abs(dist.mean), 1e-300))),
        "accel_sup": float(np.max(accel)),
        "prefactor": "4/k",
    }


def accel_sup_study(pair, k_list, t=None, x=None):
    """sup over the grid of phi_ddot per level, to judge k-uniform boundedness."""
    t0, x0 = default_grid(33, 401)
    t = t0 if t is None else np.asarray(t)
    x = x0 if x is None else np.asarray(x)
    sup = []
    for k in k_list:
        bg = bergman_geodesic(*pair, k)
        sup.append(float(geodesic_accel(bg, t[:, None], x[None, :]).max()))
    return {"k": list(k_list), "accel_sup": sup}


def spacing_check(sp):
    """max_j |lambda_j - lambda_{j+1}| over the sorted spectrum."""
    lam = np.sort(np.asarray(sp.lambdas))
    return float(np.max(np.diff(lam))) if lam.size > 1 else 0.0


def spacing_study(pair, k_list):
    from .bergman import gram_matrix, spectral_pair

    out = []
    for k in k_list:
        sp = spectral_pair(gram_matrix(pair[0], k), gram_matrix(pair[1], k), k)
        out.append(spacing_check(sp))
    return {"k": list(k_list), "spacing": out}


@dataclass(frozen=True)
class HarnackReport:
    k: int
    defect_min: float
    l_residual_min: float
    grid_shape: tuple
    samples: list
    violations: int
    violations_quarter: int
    violations_half_speed: int
    min_margin: float

    @property
    def ok(self):
        return self.violations == 0


def harnack_differential_check(bg, t=None, x=None):
    """Minimum over the grid of phi_ddot - phi_dot'^2 / psi'' (must be >= 0).

    Also reports min of L_t - (L')^2 / psi'' = 2 phi_ddot - 4 phi_dot'^2 / psi''
    for L = 2 phi_dot, which has no fixed sign and is not asserted.
    """
    t0, x0 = default_grid()
    t = t0 if t is None else np.asarray(t, float)
    x = x0 if x is None else np.asarray(x, float)
    dmin, lmin = np.inf, np.inf
    for ti in t:
        j = bg.jet(ti, x)
        if np.any(j.psi_xx <= 0):
            raise DegenerateMetric("psi'' <= 0 on the Bergman geodesic")
        ratio = j.psi_tx**2 / j.psi_xx
        dmin = min(dmin, float((j.psi_tt - ratio).min()))
        lmin = min(lmin, float((2 * j.psi_tt - 4 * ratio).min()))
    return HarnackReport(bg.k, dmin, lmin, (t.size, x.size), [], 0, 0, 0, float("nan"))


def draw_harnack_samples(path, n, seed=DEFAULT_SEED, x_range=(-10.0, 10.0), window=8):
    """Random ((xi, tau), (X, T)) with tau < T and X inside the reachable cone of xi."""
    rng = np.random.default_rng(seed)
    t, x = path.t, path.x
    dx = x[1] - x[0]
    out = []
    while len(out) < n:
        i, j = np.sort(rng.choice(t.size, 2, replace=False))
        xi = rng.uniform(*x_range)
        reach = window * dx * (j - i)
        lo, hi = max(x_range[0], xi - reach), min(x_range[1], xi + reach)
        X = rng.uniform(lo, hi)
        out.append(((float(xi), float(t[i])), (float(X), float(t[j]))))
    return out


def harnack_global_check(bg, samples=None, n_samples=50, seed=DEFAULT_SEED, window=8,
                         t=None, x=None, rel_tol=0.1, abs_tol=1e-8, path=None):
    """phi_dot(xi, tau) <= phi_dot(X, T) + Delta / 8 on sampled point pairs.

    Delta is the discrete path action with the dual spatial speed
    ds = sqrt(2 psi'') dx.  A violation must exceed ``abs_tol`` plus
    ``rel_tol`` times Delta / 8, the refinement uncertainty of the DP.
    Violation counts are also reported for the bound Delta / 4 and for the
    half speed ds = sqrt(psi'') dx / 2, where Delta shrinks by a factor 8.
    """
    path = sample_path(bg, t, x) if path is None else path
    if samples is None:
        samples = draw_harnack_samples(path, n_samples, seed, window=window)
    S = arclength(path, "dual")
    half_ratio = (SPEED_FACTORS["half"] / SPEED_FACTORS["dual"]) ** 2
    rows = []
    bad = bad4 = bad_half = 0
    margins = []
    for a, b in samples:
        delta = geodesic_distance(path, (a[1], a[0]), (b[1], b[0]), window=window, S=S)
        ia, ib = int(np.abs(path.t - a[1]).argmin()), int(np.abs(path.t - b[1]).argmin())
        ja, jb = int(np.abs(path.x - a[0]).argmin()), int(np.abs(path.x - b[0]).argmin())
        lhs = float(path.psi_t[ia, ja])
        rhs = float(path.psi_t[ib, jb]) + delta / 8
        tol = abs_tol + rel_tol * delta / 8
        margin = rhs - lhs
        margins.append(margin)
        bad += margin < -tol
        bad4 += (margin + delta / 8) < -tol
        bad_half += (float(path.psi_t[ib, jb]) + half_ratio * delta / 8 - lhs) < -abs_tol
        rows.append((a, b, lhs, rhs, delta))
    return HarnackReport(bg.k, float("nan"), float("nan"), path.psi.shape, rows, int(bad),
                         int(bad4), int(bad_half), float(min(margins)) if margins else float("nan"))


def sobolev_bound_check(phi, x=None):
    """Dirichlet energy of phi against 2 sup|phi| (volume 1, dimension 1).

    ``dirichlet`` is int phi'^2 dx and ``J`` the Aubin-Yau functional
    int phi (psi_0'' - psi_phi'') dx; they agree after integration by parts.
    """
    x = scan_grid() if x is None else np.asarray(x, float)
    from .geometry import FubiniStudy

    d = np.trapezoid(phi.dphi(x) ** 2, x)
    J = np.trapezoid(phi.phi(x) * (FubiniStudy().ddpsi(x) - phi.ddpsi(x)), x)
    bound = 2.0 * phi.sup_norm(x)
    return {
        "dirichlet": float(d),
        "J": float(J),
        "bound": float(bound),
        "slack": float(bound - J),
        "holds": bool(J <= bound and d <= bound),
    }


def boundary_modulus_report(geodesics, t=None, x=None, edge_rows=2):
    """Tangential and transversal moduli at t in {0, 1} and the boundary data error."""
    t0, x0 = default_grid()
    t = t0 if t is None else np.asarray(t, float)
    x = x0 if x is None else np.asarray(x, float)
    rows = []
    for bg in geodesics:
        path = sample_path(bg, t, x)
        rel = path.relative
        target = bg.phi1.phi(x) - bg.phi0.phi(x)
        dx0 = bg.phi0.dpsi(x)
        tang = max(np.abs(path.psi_x[0] - dx0).max(), np.abs(path.psi_x[-1] - dx0).max())
        edges = np.r_[path.psi_t[:edge_rows].ravel(), path.psi_t[-edge_rows:].ravel()]
        e0 = float(np.abs(rel[0]).max())
        e1 = float(np.abs(rel[-1] - target).max())
        rows.append({
            "k": bg.k,
            "tangential": float(tang),
            "transversal": float(np.abs(edges).max()),
            "transversal_bound": float(2 * np.abs(bg.lambdas).max() / bg.k),
            "boundary_error_0": e0,
            "boundary_error_1": e1,
            "k2_boundary_error": float(bg.k**2 * max(e0, e1)),
        })
    return rows


__all__ = [
    "DEFAULT_SEED", "SpectralDistribution", "HarnackReport", "spectral_distribution",
    "variance_check", "accel_sup_study", "spacing_check", "spacing_study",
    "harnack_differential_check", "draw_harnack_samples", "harnack_global_check",
    "sobolev_bound_check", "boundary_modulus_report",
]
