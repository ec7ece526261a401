"""Gram matrices, orthonormal sections, Bergman densities and Bergman geodesics.

Sections of O(k) are spanned by the monomials z^j, j = 0..k.  For a radial
metric the Gram matrix is diagonal, and with x = log|z|^2

    |z^j|^2_{h^k} = exp(j x - k psi(x)),      dV_h = psi''(x) dx = dp.

Everything is assembled in the log domain: at k = 256 individual entries
span hundreds of orders of magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from .errors import (
    ConditioningError,
    EigenFailure,
    NonPositiveEntry,
    NotPositiveDefinite,
)
from .geometry import LogSumExpPotential, default_quadrature, moment_inverse

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class GramMatrix:
    """Hermitian Gram matrix of the monomial sections at level k.

    ``log_diag`` is kept for diagonal (radial) matrices so that downstream
    code never has to take logs of tiny entries.
    """

    k: int
    entries: np.ndarray
    log_diag: np.ndarray | None = None

    @property
    def is_diagonal(self):
        if self.log_diag is not None:
            return True
        off = self.entries - np.diag(np.diag(self.entries))
        return not np.any(off)

    def logdiag(self):
        if self.log_diag is not None:
            return self.log_diag
        return np.log(np.real(np.diag(self.entries)))


def gram_matrix(phi, k, quad=None):
    """Diagonal Gram matrix of z^0..z^k for the metric h_FS e^{-phi}.

    The integral over the sphere is taken in the moment variable of phi
    itself, where the volume form is dp, using Gauss-Legendre nodes p_i and
    x_i = (psi')^{-1}(p_i).
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    quad = default_quadrature(k) if quad is None else quad
    if quad.degree < 2 * k:
        raise ValueError(f"quadrature of degree {quad.degree} too low for k = {k}")
    x = moment_inverse(phi, quad.logit_nodes)
    j = np.arange(k + 1, dtype=float)
    logw = np.log(quad.weights) - k * phi.psi(x)
    log_diag = logsumexp(j[:, None] * x[None, :] + logw[None, :], axis=1)
    diag = np.exp(log_diag)
    if not np.all(np.isfinite(log_diag)) or np.any(diag <= 0):
        raise NonPositiveEntry(f"Gram diagonal underflow or non-finite entry at k = {k}")
    return GramMatrix(k, np.diag(diag), log_diag)


@dataclass(frozen=True)
class SectionBasis:
    """Rows of ``coeffs`` are sections s_j = sum_i coeffs[j, i] z^i."""

    k: int
    coeffs: np.ndarray
    normalization: str = "raw"

    def is_monomial(self, rtol=1e-12):
        a = np.abs(self.coeffs)
        big = a > rtol * a.max(axis=1, keepdims=True)
        return bool(np.all(big.sum(axis=1) == 1))

    def monomials(self):
        return np.argmax(np.abs(self.coeffs), axis=1)


def orthonormal_basis(G, normalization="raw"):
    """A with A G A* = I (``"raw"``) or k^{-1} I (``"hat"``).

    Returns the lower-triangular Cholesky representative; any unitary
    multiple U A is equally orthonormal.
    """
    if normalization not in ("raw", "hat"):
        raise ValueError("normalization must be 'raw' or 'hat'")
    if G.is_diagonal:
        A = np.diag(np.exp(-0.5 * G.logdiag()))
    else:
        try:
            L = np.linalg.cholesky(G.entries)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        A = sla.solve_triangular(L, np.eye(G.k + 1), lower=True)
    if normalization == "hat":
        A = A / np.sqrt(G.k)
    return SectionBasis(G.k, A, normalization)


def _section_log_norms(basis, x):
    """log |s_j(z)|^2 without the metric factor, at z = e^{x/2} (angle 0)."""
    x = np.asarray(x, float)
    if basis.is_monomial():
        m = basis.monomials()
        c = np.abs(basis.coeffs[np.arange(basis.k + 1), m])
        return 2 * np.log(c) + x[..., None] * m
    i = np.arange(basis.k + 1)
    expo = 0.5 * x[..., None] * i
    top = expo.max(axis=-1, keepdims=True)
    s = np.einsum("ji,...i->...j", basis.coeffs, np.exp(expo - top))
    with np.errstate(divide="ignore"):
        return 2 * top + np.log(np.abs(s) ** 2)


def bergman_density(basis, phi, k, x):
    """rho_k(x) = sum_j |s_j(z)|^2_{h^k} for an h-orthonormal basis.

    A ``"hat"`` basis gives rho_k / k.
    """
    x = np.asarray(x, float)
    logs = _section_log_norms(basis, x) - k * phi.psi(x)[..., None]
    return np.exp(logsumexp(logs, axis=-1))


def projected_potential(phi, k, quad=None):
    """Potential of h(k) = (i_s^* h_FS)^{1/k} for the hat-normalised basis.

    phi(k) = phi + (1/k) log(rho_k / k), returned exactly as a log-sum-exp
    over monomials.
    """
    G = gram_matrix(phi, k, quad)
    m = np.arange(k + 1, dtype=float)
    return LogSumExpPotential(m, -G.logdiag() - np.log(k), k)


@dataclass(frozen=True)
class SpectralPair:
    """Exponents lambda_j (descending) of the change of basis and the joint basis.

    Rows of ``basis.coeffs`` are h0-orthonormal; the same rows scaled by
    e^{lambda_j} are h1-orthonormal.
    """

    k: int
    lambdas: np.ndarray
    basis: SectionBasis

    def residuals(self, G0, G1):
        X = self.basis.coeffs
        r0 = X @ G0.entries @ X.conj().T - np.eye(self.k + 1)
        r1 = X @ G1.entries @ X.conj().T - np.diag(np.exp(-2 * self.lambdas))
        return float(np.abs(r0).max()), float(np.abs(r1).max())


def _scaled_condition(entries):
    diag = np.real(np.diag(entries))
    if not np.all(diag > 0):
        raise NotPositiveDefinite("non-positive diagonal")
    d = np.sqrt(diag)
    return np.linalg.cond(entries / np.outer(d, d))


def spectral_pair(G0, G1, k=None, *, method="auto"):
    """Solve G0 x = e^{2 lambda} G1 x jointly with x* G0 x = 1.

    ``method="auto"`` takes the closed form lambda_j = (log G0_jj - log G1_jj) / 2
    when both matrices are diagonal; ``"general"`` always goes through the
    Cholesky-reduced Hermitian eigenproblem.
    """
    k = G0.k if k is None else int(k)
    if G0.k != k or G1.k != k:
        raise ValueError("Gram matrices at different levels")
    if method not in ("auto", "general"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and G0.is_diagonal and G1.is_diagonal:
        l0, l1 = G0.logdiag(), G1.logdiag()
        lam = 0.5 * (l0 - l1)
        order = np.argsort(-lam, kind="stable")
        X = np.zeros((k + 1, k + 1))
        X[np.arange(k + 1), order] = np.exp(-0.5 * l0[order])
        return SpectralPair(k, lam[order], SectionBasis(k, X))

    for G in (G0, G1):
        cond = _scaled_condition(G.entries)
        if not np.isfinite(cond) or cond > CONDITION_LIMIT:
            raise ConditioningError(f"scaled condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    try:
        L0 = np.linalg.cholesky(G0.entries)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    Linv = sla.solve_triangular(L0, np.eye(k + 1), lower=True)
    C = Linv @ G1.entries @ Linv.conj().T
    C = 0.5 * (C + C.conj().T)
    try:
        mu, V = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if np.any(mu <= 0):
        raise NotPositiveDefinite("G1 is not positive definite")
    X = V.conj().T @ Linv
    return SpectralPair(k, -0.5 * np.log(mu), SectionBasis(k, X))


class Jet(NamedTuple):
    """Fiber potential psi(t, x) and its derivatives up to order two."""

    psi: np.ndarray
    psi_t: np.ndarray
    psi_x: np.ndarray
    psi_xx: np.ndarray
    psi_tt: np.ndarray
    psi_tx: np.ndarray
    psi_x_upper: np.ndarray


class BergmanGeodesic:
    """phi(t; k)(x) = (1/k) log sum_j e^{2 lambda_j t} |s_j^(0)(z)|^2_{h0^k}, s = hat-normalised.

    In fiber form psi(t, x) = psi0(x) + phi(t; k)(x) is a log-sum-exp of the
    affine functions 2 lambda_j t + m_j x + b_j, so all derivatives are
    moments of the softmax weights P_j(t, x), the law of the random
    variable Z with P(Z = lambda_j) = P_j.
    """

    def __init__(self, spectral, base_potential, phi1=None):
        if not spectral.basis.is_monomial():
            raise ValueError("Bergman geodesics need a monomial joint basis (radial data)")
        k = spectral.k
        self.spectral = spectral
        self.k = k
        self.phi0 = base_potential
        self.phi1 = phi1
        self.lambdas = np.asarray(spectral.lambdas, float)
        m = spectral.basis.monomials()
        coef = np.abs(spectral.basis.coeffs[np.arange(k + 1), m])
        self.m = m.astype(float)
        self.b = 2 * np.log(coef) - np.log(k)
        self.slopes = 2 * self.lambdas

    def __repr__(self):
        return f"BergmanGeodesic(k={self.k}, phi0={self.phi0!r}, phi1={self.phi1!r})"

    def _weights(self, t, x):
        x = np.asarray(x, float)
        z = np.asarray(t, float)[..., None] * self.slopes + x[..., None] * self.m + self.b
        zmax = z.max(axis=-1, keepdims=True)
        w = np.exp(z - zmax)
        s = w.sum(axis=-1, keepdims=True)
        return (zmax + np.log(s))[..., 0], w / s

    def probabilities(self, t, x):
        return self._weights(t, x)[1]

    def jet(self, t, x):
        lse, P = self._weights(t, x)
        k = self.k
        mean_m = P @ self.m
        mean_l = P @ self.slopes
        dm = self.m - mean_m[..., None]
        dl = self.slopes - mean_l[..., None]
        return Jet(
            psi=lse / k,
            psi_t=mean_l / k,
            psi_x=mean_m / k,
            psi_xx=np.einsum("...j,...j->...", P, dm * dm) / k,
            psi_tt=np.einsum("...j,...j->...", P, dl * dl) / k,
            psi_tx=np.einsum("...j,...j->...", P, dl * dm) / k,
            psi_x_upper=(P @ (k - self.m)) / k,
        )

    def value(self, t, x):
        """phi(t; k)(x), relative to h0."""
        lse, _ = self._weights(t, x)
        return lse / self.k - self.phi0.psi(x)

    def slice(self, t):
        return LogSumExpPotential(self.m, self.b + self.slopes * float(t), self.k)


def bergman_geodesic(phi0, phi1, k, quad=None):
    quad = default_quadrature(k) if quad is None else quad
    G0 = gram_matrix(phi0, k, quad)
    G1 = gram_matrix(phi1, k, quad)
    return BergmanGeodesic(spectral_pair(G0, G1, k), phi0, phi1)


def geodesic_eval(bg, t, x):
    return bg.value(t, x)


def geodesic_velocity(bg, t, x):
    """(1/k) sum 2 lambda_j P_j = (2/k) E[Z_t]."""
    _, P = bg._weights(t, x)
    return (P @ bg.slopes) / bg.k


def geodesic_accel(bg, t, x):
    """Second t-derivative of phi(t; k): (1/k)(sum L^2 P - (sum L P)^2), L = 2 lambda.

    Raw moments are taken about the most probable exponent, which leaves the
    derivative unchanged and keeps the difference of moments well scaled.
    """
    _, P = bg._weights(t, x)
    L = bg.slopes - bg.slopes[P.argmax(axis=-1)][..., None]
    m1 = np.einsum("...j,...j->...", P, L)
    m2 = np.einsum("...j,...j->...", P, L * L)
    return np.maximum(m2 - m1 * m1, 0.0) / bg.k


def lambda_bounds_report(sp, phi0, phi1, bg=None, t=None, x=None):
    """Spectral bounds against the oscillation of log(h0 / h1) = phi1 - phi0.

    The asymptotic interval check is lambda_max in [C1 k / 2, 3 C1 k] with
    C1 = sup log(h0/h1), and likewise -lambda_min in [C2 k / 2, 3 C2 k] with
    C2 = -inf log(h0/h1); it is only claimed for large k.  The finite-k upper
    bounds lambda_max <= 2 C1 k + log(k + 1) (and its mirror) are reported as
    ``*_finite``.  With a geodesic, the exact inequality
    2 lambda_max / k >= sup (phi(1;k) - phi(0;k)) is checked as well.
    The ``paper_sign`` entries restate C1, C2 for log(h1/h0).
    """
    from .geometry import scan_grid

    k = sp.k
    lam = np.asarray(sp.lambdas)
    xs = scan_grid(n=4001)
    diff = phi1.phi(xs) - phi0.phi(xs)
    lim0, lim1 = phi0.asymptotic_limits, phi1.asymptotic_limits
    ends = [lim1[0] - lim0[0], lim1[1] - lim0[1]]
    C1 = float(max(diff.max(), *ends))
    C2 = float(-min(diff.min(), *ends))
    lmax, lmin = float(lam.max()), float(lam.min())
    slack = 1e-9 * max(1.0, abs(lmax), abs(lmin))
    report = {
        "k": k,
        "lambda_max": lmax,
        "lambda_min": lmin,
        "max_abs_over_k": max(abs(lmax), abs(lmin)) / k,
        "C1": C1,
        "C2": C2,
        "paper_sign": {"C1": C2, "C2": C1},
        "upper_in_interval": bool(C1 * k / 2 - slack <= lmax <= 3 * C1 * k + slack),
        "lower_in_interval": bool(C2 * k / 2 - slack <= -lmin <= 3 * C2 * k + slack),
        "upper_finite": bool(lmax <= 2 * C1 * k + np.log(k + 1) + slack),
        "lower_finite": bool(-lmin <= 2 * C2 * k + np.log(k + 1) + slack),
    }
    if bg is not None:
        t = np.linspace(0, 1, 33) if t is None else np.asarray(t)
        x = np.linspace(-20, 20, 401) if x is None else np.asarray(x)
        vals = np.array([bg.value(ti, x) for ti in t])
        end_gap = bg.value(1.0, x) - bg.value(0.0, x)
        bound = 2 * max(abs(lmax), abs(lmin)) / k
        report["sup_phi"] = float(np.abs(vals).max())
        report["lemma_c_bound"] = float(bound + np.abs(vals[0]).max())
        report["lemma_c_holds"] = bool(report["sup_phi"] <= report["lemma_c_bound"] + 1e-12)
        report["endpoint_gap_max"] = float(end_gap.max())
        report["upper_exact_holds"] = bool(2 * lmax / k >= end_gap.max() - 1e-12)
        report["lower_exact_holds"] = bool(2 * lmin / k <= end_gap.min() + 1e-12)
    return report


__all__ = [
    "GramMatrix", "SectionBasis", "SpectralPair", "BergmanGeodesic", "Jet",
    "gram_matrix", "orthonormal_basis", "bergman_density", "projected_potential",
    "spectral_pair", "bergman_geodesic", "geodesic_eval", "geodesic_velocity",
    "geodesic_accel", "lambda_bounds_report", "CONDITION_LIMIT",
]
