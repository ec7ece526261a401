"""S^1-invariant metrics on O(1) -> P^1.

A metric h = h_FS * exp(-phi) is described by its relative potential phi(x),
x = log|z|^2, or equivalently by the fiber potential

    psi(x) = log(1 + e^x) + phi(x),

which must be strictly convex (this is the curvature condition).  The moment
map p = psi'(x) is an increasing bijection R -> (0, 1); in that variable the
normalised volume form of the metric is exactly dp, so total volume is 1.

The Legendre dual u(p) = sup_x (p x - psi(x)) is stored as a bounded
correction to the Fubini-Study symplectic potential,

    u(p) = p log p + (1 - p) log(1 - p) + delta(p),

sampled on a grid uniform in y = log(p / (1 - p)).  Working in y keeps both
tails of the moment interval resolved in double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.special import expit, logit

from .errors import ConvexityViolation, PositivityViolation

X_MAX = 40.0
FD_STEP = 1e-4
_SCAN_NODES = 16001


def softplus(x):
    return np.logaddexp(0.0, x)


def fs_density(x):
    """psi_FS''(x) = e^x / (1 + e^x)^2, computed without cancellation."""
    return expit(x) * expit(-x)


def scan_grid(x_max=X_MAX, n=_SCAN_NODES):
    return np.linspace(-x_max, x_max, n)


def solve_increasing(f, fprime, lo, hi, x0=None, xtol=1e-14, maxiter=200):
    """Vectorised root of an increasing function on a bracket.

    Newton steps are taken when they stay strictly inside the current
    bracket and bisection otherwise, so convergence is guaranteed as long as
    ``f(lo) <= 0 <= f(hi)`` elementwise.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    lo, hi = np.broadcast_arrays(lo, hi)
    lo, hi = lo.copy(), hi.copy()
    x = 0.5 * (lo + hi) if x0 is None else np.clip(np.asarray(x0, float), lo, hi)
    x = np.array(x, dtype=float, copy=True)
    for _ in range(maxiter):
        fx = f(x)
        lo = np.where(fx < 0, x, lo)
        hi = np.where(fx > 0, x, hi)
        d = fprime(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            xn = x - fx / d
        bad = ~np.isfinite(xn) | (xn <= lo) | (xn >= hi)
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        xn = np.where(fx == 0, x, xn)
        scale = xtol * (1.0 + np.abs(x))
        done = (np.abs(xn - x) <= scale) | (hi - lo <= scale)
        x = xn
        if np.all(done):
            break
    return x


class RadialPotential:
    """Bounded S^1-invariant relative potential phi(x).

    Subclasses implement :meth:`phi` and, where available, analytic
    derivatives; the base class falls back to centered differences with
    step ``FD_STEP``.
    """

    name = "potential"

    def phi(self, x):
        raise NotImplementedError

    def dphi(self, x):
        x = np.asarray(x, float)
        h = FD_STEP
        return (self.phi(x + h) - self.phi(x - h)) / (2 * h)

    def ddphi(self, x):
        x = np.asarray(x, float)
        h = FD_STEP
        return (self.phi(x + h) - 2 * self.phi(x) + self.phi(x - h)) / h**2

    @property
    def asymptotic_limits(self):
        return float(self.phi(-X_MAX)), float(self.phi(X_MAX))

    def psi(self, x):
        return softplus(x) + self.phi(x)

    def dpsi(self, x):
        return expit(x) + self.dphi(x)

    def dpsi_upper(self, x):
        """1 - psi'(x), accurate when psi' is close to 1."""
        return expit(-np.asarray(x, float)) - self.dphi(x)

    def ddpsi(self, x):
        return fs_density(x) + self.ddphi(x)

    def sup_norm(self, x=None):
        x = scan_grid() if x is None else x
        v = np.abs(self.phi(x))
        return float(max(v.max(), *map(abs, self.asymptotic_limits)))

    def validate(self, x=None):
        """Raise PositivityViolation unless psi'' > 0 at every scan node."""
        x = scan_grid() if x is None else np.asarray(x, float)
        d2 = self.ddpsi(x)
        bad = ~(d2 > 0)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise PositivityViolation(
                f"{self!r}: psi'' = {d2[i]:.3e} <= 0 at x = {x[i]:.4f}")
        return self

    def moment_map(self, x):
        return self.dpsi(x)

    def __repr__(self):
        return f"{type(self).__name__}()"


class FubiniStudy(RadialPotential):
    name = "fs"

    def phi(self, x):
        return np.zeros_like(np.asarray(x, float))

    def dphi(self, x):
        return np.zeros_like(np.asarray(x, float))

    def ddphi(self, x):
        return np.zeros_like(np.asarray(x, float))

    @property
    def asymptotic_limits(self):
        return 0.0, 0.0

    def sup_norm(self, x=None):
        return 0.0


@dataclass(frozen=True, repr=True)
class Dilation(RadialPotential):
    """phi_c(x) = log((1 + e^(x+c)) / (1 + e^x)), the pullback of FS by z -> e^(c/2) z."""

    c: float
    name = "dilation"

    def phi(self, x):
        x = np.asarray(x, float)
        return softplus(x + self.c) - softplus(x)

    def dphi(self, x):
        x = np.asarray(x, float)
        return expit(x + self.c) - expit(x)

    def ddphi(self, x):
        x = np.asarray(x, float)
        return fs_density(x + self.c) - fs_density(x)

    def psi(self, x):
        return softplus(np.asarray(x, float) + self.c)

    def dpsi(self, x):
        return expit(np.asarray(x, float) + self.c)

    def dpsi_upper(self, x):
        return expit(-np.asarray(x, float) - self.c)

    def ddpsi(self, x):
        return fs_density(np.asarray(x, float) + self.c)

    @property
    def asymptotic_limits(self):
        return 0.0, float(self.c)

    def sup_norm(self, x=None):
        return abs(float(self.c))


@dataclass(frozen=True, repr=True)
class Bump(RadialPotential):
    """Gaussian bump a * exp(-(x - center)^2 / (2 width^2))."""

    amplitude: float
    width: float = 1.0
    center: float = 0.0
    name = "bump"

    def _g(self, x):
        s = (np.asarray(x, float) - self.center) / self.width
        return s, np.exp(-0.5 * s * s)

    def phi(self, x):
        _, g = self._g(x)
        return self.amplitude * g

    def dphi(self, x):
        s, g = self._g(x)
        return -self.amplitude * s * g / self.width

    def ddphi(self, x):
        s, g = self._g(x)
        return self.amplitude * (s * s - 1.0) * g / self.width**2

    @property
    def asymptotic_limits(self):
        return 0.0, 0.0

    def sup_norm(self, x=None):
        return abs(float(self.amplitude))


class CallablePotential(RadialPotential):
    """User callable phi; derivatives by centered differences."""

    name = "callable"

    def __init__(self, func, label="callable"):
        self._func = func
        self.label = label

    def phi(self, x):
        return np.asarray(self._func(np.asarray(x, float)), float)

    def __repr__(self):
        return f"CallablePotential({self.label!r})"


class SplinePotential(RadialPotential):
    """Cubic-spline potential through user samples, constant outside them."""

    name = "spline"

    def __init__(self, x, values):
        x = np.asarray(x, float)
        values = np.asarray(values, float)
        if x.ndim != 1 or x.size < 4 or np.any(np.diff(x) <= 0):
            raise ValueError("spline nodes must be >= 4 strictly increasing values")
        self.x = x
        self.values = values
        self._cs = CubicSpline(x, values, bc_type="clamped")
        self._d1 = self._cs.derivative(1)
        self._d2 = self._cs.derivative(2)

    def _eval(self, f, x, outside):
        x = np.asarray(x, float)
        inside = (x >= self.x[0]) & (x <= self.x[-1])
        xc = np.clip(x, self.x[0], self.x[-1])
        return np.where(inside, f(xc), outside(x))

    def phi(self, x):
        x = np.asarray(x, float)
        return self._eval(self._cs, x, lambda z: np.where(z < self.x[0], self.values[0], self.values[-1]))

    def dphi(self, x):
        return self._eval(self._d1, x, np.zeros_like)

    def ddphi(self, x):
        return self._eval(self._d2, x, np.zeros_like)

    @property
    def asymptotic_limits(self):
        return float(self.values[0]), float(self.values[-1])

    @property
    def breakpoints(self):
        return self.x

    def __repr__(self):
        return f"SplinePotential(n={self.x.size})"


class LogSumExpPotential(RadialPotential):
    """psi(x) = (1/k) log sum_j exp(m_j x + b_j).

    This is the shape of every Fubini-Study (Bergman) potential built from
    monomial sections: ``m`` are monomial degrees in [0, k] and ``b`` the
    log-weights.  Derivatives are moments of the softmax distribution over j.
    """

    name = "bergman"

    def __init__(self, m, b, k):
        self.m = np.asarray(m, float)
        self.b = np.asarray(b, float)
        self.k = int(k)

    def stats(self, x):
        x = np.asarray(x, float)
        z = x[..., None] * self.m + self.b
        zmax = z.max(axis=-1, keepdims=True)
        w = np.exp(z - zmax)
        s = w.sum(axis=-1, keepdims=True)
        prob = w / s
        lse = (zmax + np.log(s))[..., 0]
        mean = prob @ self.m
        var = np.einsum("...j,...j->...", prob, (self.m - mean[..., None]) ** 2)
        upper = prob @ (self.k - self.m)
        return lse, mean, var, upper

    def psi(self, x):
        return self.stats(x)[0] / self.k

    def dpsi(self, x):
        return self.stats(x)[1] / self.k

    def dpsi_upper(self, x):
        return self.stats(x)[3] / self.k

    def ddpsi(self, x):
        return self.stats(x)[2] / self.k

    def phi(self, x):
        return self.psi(x) - softplus(x)

    def dphi(self, x):
        return self.dpsi(x) - expit(x)

    def ddphi(self, x):
        return self.ddpsi(x) - fs_density(x)

    @property
    def asymptotic_limits(self):
        lo = self.b[self.m == self.m.min()].max() / self.k
        hi = self.b[self.m == self.m.max()].max() / self.k
        return float(lo), float(hi)

    def __repr__(self):
        return f"LogSumExpPotential(k={self.k}, terms={self.m.size})"


class ConvexCombination(RadialPotential):
    """(1 - t) phi0 + t phi1, the slice of the naive linear path."""

    name = "linear"

    def __init__(self, phi0, phi1, t):
        self.phi0, self.phi1, self.t = phi0, phi1, float(t)

    def _mix(self, a, b):
        return (1.0 - self.t) * a + self.t * b

    def phi(self, x):
        return self._mix(self.phi0.phi(x), self.phi1.phi(x))

    def dphi(self, x):
        return self._mix(self.phi0.dphi(x), self.phi1.dphi(x))

    def ddphi(self, x):
        return self._mix(self.phi0.ddphi(x), self.phi1.ddphi(x))

    def psi(self, x):
        return self._mix(self.phi0.psi(x), self.phi1.psi(x))

    def dpsi(self, x):
        return self._mix(self.phi0.dpsi(x), self.phi1.dpsi(x))

    def dpsi_upper(self, x):
        return self._mix(self.phi0.dpsi_upper(x), self.phi1.dpsi_upper(x))

    def ddpsi(self, x):
        return self._mix(self.phi0.ddpsi(x), self.phi1.ddpsi(x))

    @property
    def asymptotic_limits(self):
        a, b = self.phi0.asymptotic_limits, self.phi1.asymptotic_limits
        return self._mix(a[0], b[0]), self._mix(a[1], b[1])

    def __repr__(self):
        return f"ConvexCombination({self.phi0!r}, {self.phi1!r}, t={self.t})"


def make_fubini_study():
    return FubiniStudy()


def make_dilation_potential(c):
    c = float(c)
    if not np.isfinite(c):
        raise ValueError("dilation parameter must be finite")
    return Dilation(c)


# family id -> (constructor, documented parameter ranges)
FAMILIES = {
    "fs": (lambda: FubiniStudy(), {}),
    "dilation": (Dilation, {"c": (-20.0, 20.0)}),
    "bump": (Bump, {"amplitude": (-5.0, 5.0), "width": (0.05, 20.0),
                    "center": (-20.0, 20.0)}),
}


def make_test_potential(family_id, params=None):
    """Build a potential from a named family and check positivity on the scan grid.

    Parameters
    ----------
    family_id : str
        ``"fs"``, ``"dilation"``, ``"bump"`` or ``"spline"``.  Spline data is
        passed as ``params = {"x": [...], "values": [...]}``.
    params : dict, optional
        Keyword parameters of the family.  Ranges are listed in ``FAMILIES``.

    Raises
    ------
    PositivityViolation
        If psi'' <= 0 anywhere on the scan grid.
    ValueError
        Unknown family, unknown parameter, or a parameter out of range.
    """
    params = dict(params or {})
    if family_id == "spline":
        pot = SplinePotential(params.pop("x"), params.pop("values"))
        if params:
            raise ValueError(f"unexpected spline parameters {sorted(params)}")
        return pot.validate()
    if family_id not in FAMILIES:
        raise ValueError(f"unknown potential family {family_id!r}")
    ctor, ranges = FAMILIES[family_id]
    for key, value in params.items():
        if key not in ranges:
            raise ValueError(f"family {family_id!r} has no parameter {key!r}")
        lo, hi = ranges[key]
        if not (lo <= float(value) <= hi):
            raise ValueError(f"{family_id}.{key} = {value} outside [{lo}, {hi}]")
    pot = ctor(**{k: float(v) for k, v in params.items()})
    return pot.validate()


def moment_map(phi, x):
    return phi.dpsi(x)


def moment_inverse(phi, y, xtol=1e-14):
    """Solve psi'(x) = p for x, where ``y = logit(p)``.

    For p > 1/2 the complementary equation 1 - psi'(x) = 1 - p is solved so
    that the upper tail keeps full relative precision.
    """
    y = np.asarray(y, float)
    lower = y <= 0
    p_lo = expit(y)
    p_hi = expit(-y)

    def f(x):
        return np.where(lower, phi.dpsi(x) - p_lo, p_hi - phi.dpsi_upper(x))

    lo, hi = y - 8.0, y + 8.0
    for _ in range(64):
        need_lo = f(lo) > 0
        need_hi = f(hi) < 0
        if not (need_lo.any() or need_hi.any()):
            break
        width = hi - lo
        lo = np.where(need_lo, lo - width, lo)
        hi = np.where(need_hi, hi + width, hi)
    else:
        raise ConvexityViolation(f"{phi!r}: moment map inversion not bracketed")
    return solve_increasing(f, phi.ddpsi, lo, hi, x0=y, xtol=xtol)


def scalar_curvature(phi, x, h=1e-3):
    """R = -(log psi'')'' / psi'', normalised so that Fubini-Study has R = 2."""
    x = np.asarray(x, float)
    lg = lambda s: np.log(phi.ddpsi(s))
    return -(lg(x + h) - 2 * lg(x) + lg(x - h)) / (h * h) / phi.ddpsi(x)


def total_volume(phi, x=None):
    """Integral of psi'' over the line (trapezoid on the scan grid plus tail masses).

    Equals 1 for every positive metric in the normalisation used here.
    """
    x = scan_grid() if x is None else np.asarray(x, float)
    # psi'' may jump at spline knots; sample both one-sided limits
    knots = getattr(phi, "breakpoints", None)
    if knots is not None:
        knots = knots[(knots > x[0]) & (knots < x[-1])]
        x = np.union1d(x, np.r_[np.nextafter(knots, -np.inf), knots, np.nextafter(knots, np.inf)])
    dens = phi.ddpsi(x)
    if np.any(dens <= 0):
        raise PositivityViolation(f"{phi!r}: non-positive volume density")
    bulk = np.trapezoid(dens, x)
    tails = phi.dpsi(x[:1])[0] + phi.dpsi_upper(x[-1:])[0]
    return float(bulk + tails)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the moment interval (0, 1)."""

    nodes: np.ndarray
    weights: np.ndarray
    complement: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.nodes.size

    @property
    def degree(self):
        return 2 * self.n - 1

    @property
    def logit_nodes(self):
        return np.log(self.nodes) - np.log(self.complement)


def build_quadrature(n_nodes):
    n = int(n_nodes)
    if n < 2:
        raise ValueError("n_nodes must be >= 2")
    s, w = leggauss(n)
    nodes = 0.5 * (1.0 + s)
    complement = 0.5 * (1.0 - s)
    weights = 0.5 * w
    return QuadratureRule(nodes, weights, complement)


def default_quadrature(k):
    """Node count used for Gram assembly at level k (see README for the convergence study)."""
    return build_quadrature(max(256, 2 * int(k) + 128))


@dataclass(frozen=True)
class FiberPotential:
    """Samples of a convex fiber potential psi on an x-grid."""

    x: np.ndarray
    psi: np.ndarray

    @property
    def phi(self):
        return self.psi - softplus(self.x)


def default_logit_grid(y_max=36.0, step=0.02):
    n = int(round(2 * y_max / step)) + 1
    return np.linspace(-y_max, y_max, n)


class QuinticHermite:
    """Piecewise quintic matching values, first and second derivatives at the nodes."""

    def __init__(self, x, f, df, ddf):
        self.x = np.asarray(x, float)
        self.f = np.asarray(f, float)
        self.df = np.asarray(df, float)
        self.ddf = np.asarray(ddf, float)

    def __call__(self, x):
        x = np.asarray(x, float)
        i = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, self.x.size - 2)
        h = self.x[i + 1] - self.x[i]
        s = (x - self.x[i]) / h
        s2 = s * s
        s3 = s2 * s
        s4 = s3 * s
        s5 = s4 * s
        h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
        h01 = 10 * s3 - 15 * s4 + 6 * s5
        h10 = s - 6 * s3 + 8 * s4 - 3 * s5
        h11 = -4 * s3 + 7 * s4 - 3 * s5
        h20 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5)
        h21 = 0.5 * (s3 - 2 * s4 + s5)
        return (h00 * self.f[i] + h01 * self.f[i + 1]
                + h * (h10 * self.df[i] + h11 * self.df[i + 1])
                + h * h * (h20 * self.ddf[i] + h21 * self.ddf[i + 1]))


@dataclass(frozen=True)
class SymplecticPotential:
    """u = u_FS + delta sampled on a grid uniform in y = logit(p).

    ``r = u'(p) - logit(p)`` is the horizontal offset of the inverse moment
    map; ``delta`` and ``r`` are bounded for bounded potentials, which is
    what makes linear interpolation between two of them well behaved.
    """

    y: np.ndarray
    delta: np.ndarray
    r: np.ndarray
    r_y: np.ndarray

    @property
    def p(self):
        return expit(self.y)

    @property
    def _pq(self):
        return expit(self.y) * expit(-self.y)

    @property
    def delta_y(self):
        return self.r * self._pq

    @property
    def delta_yy(self):
        pq = self._pq
        return self.r_y * pq + self.r * pq * (1.0 - 2.0 * self.p)

    def u(self):
        p = self.p
        return p * self.y - softplus(self.y) + self.delta

    def combine(self, other, t):
        """(1 - t) self + t other, on a shared grid."""
        if self.y.shape != other.y.shape or np.any(self.y != other.y):
            raise ValueError("symplectic potentials live on different grids")
        a, b = 1.0 - t, t
        return SymplecticPotential(self.y, a * self.delta + b * other.delta,
                                   a * self.r + b * other.r, a * self.r_y + b * other.r_y)

    def interpolants(self):
        d = QuinticHermite(self.y, self.delta, self.delta_y, self.delta_yy)
        r = CubicHermiteSpline(self.y, self.r, self.r_y)
        return d, r


def legendre_transform(phi, p_grid=None, *, y_grid=None):
    """Symplectic potential u(p) = sup_x (p x - psi(x)).

    Each node is computed by monotone root finding on psi'(x) = p.  Pass
    either moment values ``p_grid`` or their logits ``y_grid`` (preferred;
    default is uniform in y on [-36, 36]).
    """
    if p_grid is not None:
        y = logit(np.asarray(p_grid, float))
    else:
        y = default_logit_grid() if y_grid is None else np.asarray(y_grid, float)
    x = moment_inverse(phi, y)
    p = expit(y)
    pq = p * expit(-y)
    r = x - y
    dens = phi.ddpsi(x)
    if np.any(dens <= 0):
        raise ConvexityViolation(f"{phi!r}: psi not strictly convex at a node")
    r_y = pq / dens - 1.0
    delta = p * r - phi.phi(x) - (softplus(x) - softplus(y))
    return SymplecticPotential(y, delta, r, r_y)


def inverse_legendre(u, x_grid, *, return_jet=False):
    """psi(x) = sup_p (p x - u(p)) for a sampled symplectic potential.

    The maximiser is found from the stationarity condition y + r(y) = x;
    the value then only depends on delta to first order.

    With ``return_jet`` also returns (y, 1 + r'(y)) at the maximisers, from
    which psi' = expit(y) and psi'' = p (1 - p) / (1 + r'(y)).
    """
    x = np.asarray(x_grid, float)
    slope = 1.0 + u.r_y
    if np.any(slope <= 0):
        raise ConvexityViolation("symplectic potential is not convex")
    d_int, r_int = u.interpolants()
    lo_y, hi_y = u.y[0], u.y[-1]
    g_lo = lo_y + u.r[0]
    g_hi = hi_y + u.r[-1]
    if np.any(x < g_lo) or np.any(x > g_hi):
        raise ConvexityViolation(
            f"x outside the range [{g_lo:.2f}, {g_hi:.2f}] covered by the p-grid")
    dr = r_int.derivative()
    y = solve_increasing(lambda s: s + r_int(s) - x, lambda s: 1.0 + dr(s),
                         np.full_like(x, lo_y), np.full_like(x, hi_y), x0=x - r_int(np.clip(x, lo_y, hi_y)))
    p = expit(y)
    psi = p * (x - y) + softplus(y) - d_int(y)
    out = FiberPotential(x, psi)
    if return_jet:
        return out, y, 1.0 + dr(y)
    return out


def legendre_roundtrip_error(phi, x_max=20.0, n=801, y_grid=None):
    x = np.linspace(-x_max, x_max, n)
    back = inverse_legendre(legendre_transform(phi, y_grid=y_grid), x)
    return float(np.max(np.abs(back.psi - phi.psi(x))))


__all__ = [
    "X_MAX", "RadialPotential", "FubiniStudy", "Dilation", "Bump", "CallablePotential",
    "SplinePotential", "LogSumExpPotential", "ConvexCombination", "FiberPotential",
    "QuadratureRule", "SymplecticPotential", "make_fubini_study", "make_dilation_potential",
    "make_test_potential", "moment_map", "moment_inverse", "build_quadrature",
    "default_quadrature", "scalar_curvature", "legendre_transform", "inverse_legendre", "total_volume",
    "solve_increasing", "softplus", "fs_density", "scan_grid",
]
