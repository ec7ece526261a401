"""Acceptance criteria, shared by ``bergeo suite`` and the test-suite.

Each criterion returns a :class:`CriterionResult` with the measured numbers
and a pass flag.  Numerical tolerances are multiplied by ``tol_scale``;
structural thresholds (ratios, slope windows, runtimes) are not.  The
pair-specific criteria always use the shipped pairs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln

from .analysis import (
    harnack_differential_check,
    harnack_global_check,
    sobolev_bound_check,
    variance_check,
)
from .bergman import (
    BergmanGeodesic,
    bergman_density,
    geodesic_accel,
    gram_matrix,
    orthonormal_basis,
    spectral_pair,
)
from .config import DEFAULT_PAIRS, ExperimentConfig, parse_potential
from .errors import PositivityViolation
from .geometry import (
    Bump,
    FubiniStudy,
    build_quadrature,
    default_quadrature,
    scalar_curvature,
    total_volume,
)
from .hmae import (
    LinearPath,
    default_grid,
    ma_mass_boundary,
    ma_mass_bulk,
    ma_mass_decay_study,
    path_energy,
    sample_path,
)
from .oracle import convergence_study, exact_geodesic, geodesic_equation_residual


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    measured: dict
    seconds: float = 0.0
    note: str = ""

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        parts = []
        for key, val in self.measured.items():
            if isinstance(val, float):
                parts.append(f"{key}={val:.3g}")
            elif isinstance(val, (bool, int, str)):
                parts.append(f"{key}={val}")
        text = f"[{flag}] criterion {self.id:2d} {self.name} ({self.seconds:.1f}s): " + ", ".join(parts)
        return text + (f"  -- {self.note}" if self.note else "")


@dataclass
class Context:
    """Caches Bergman geodesics, sampled paths and oracle paths across criteria."""

    config: ExperimentConfig = field(default_factory=ExperimentConfig)
    _bg: dict = field(default_factory=dict)
    _path: dict = field(default_factory=dict)
    _oracle: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pairs = {n: (parse_potential(a), parse_potential(b)) for n, (a, b) in DEFAULT_PAIRS.items()}
        self.t, self.x = default_grid(self.config.t_nodes, self.config.x_nodes, self.config.x_max)
        self.k_list = (8, 16, 32, 64, 128)
        self.tol = self.config.tol_scale

    def quad(self, k):
        n = self.config.quad_nodes
        return build_quadrature(n) if n else default_quadrature(k)

    def bg(self, pair, k):
        key = (pair, k)
        if key not in self._bg:
            phi0, phi1 = self.pairs[pair]
            q = self.quad(k)
            sp = spectral_pair(gram_matrix(phi0, k, q), gram_matrix(phi1, k, q), k)
            self._bg[key] = BergmanGeodesic(sp, phi0, phi1)
        return self._bg[key]

    def path(self, pair, k):
        key = (pair, k)
        if key not in self._path:
            self._path[key] = sample_path(self.bg(pair, k), self.t, self.x)
        return self._path[key]

    def oracle(self, pair):
        if pair not in self._oracle:
            self._oracle[pair] = exact_geodesic(*self.pairs[pair], self.t, self.x)
        return self._oracle[pair]


def c01_gram_closed_form(ctx):
    fs = FubiniStudy()
    start = time.perf_counter()
    err = 0.0
    for k in range(1, 65):
        G = gram_matrix(fs, k, ctx.quad(k))
        j = np.arange(k + 1)
        exact = betaln(j + 1, k - j + 1)
        err = max(err, float(np.abs(np.diag(G.entries) / np.exp(exact) - 1).max()))
    secs = time.perf_counter() - start
    ok = err <= 1e-10 * ctx.tol and secs < 1.0
    return ok, {"max_rel_error": err, "runtime_s": secs}, ""


def c02_bergman_density(ctx):
    fs = FubiniStudy()
    x = np.linspace(-ctx.config.x_max, ctx.config.x_max, 100)
    err = 0.0
    for k in range(1, 65):
        basis = orthonormal_basis(gram_matrix(fs, k, ctx.quad(k)))
        rho = bergman_density(basis, fs, k, x)
        err = max(err, float(np.abs(rho / (k + 1) - 1).max()))
    bump = ctx.pairs["bump"][1]
    corr, central = [], []
    for k in (16, 32, 64):
        rho = bergman_density(orthonormal_basis(gram_matrix(bump, k, ctx.quad(k))), bump, k, x)
        a = np.abs(k * (rho / k - 1))
        corr.append(float(a.max()))
        central.append(float(a[np.abs(x) <= 3].max()))
    ratio = max(corr) / min(corr)
    curv = float(scalar_curvature(bump, np.linspace(-15, 15, 3001)).min())
    ok = err <= 1e-10 * ctx.tol and ratio <= 2.0
    note = "" if ratio <= 2.0 else (
        f"first correction still growing: curvature reaches {curv:.0f} near |x|=7, "
        f"so the k-expansion is pre-asymptotic there; ratio on |x|<=3 is {max(central) / min(central):.2f}")
    return ok, {"fs_max_rel_error": err, "bump_correction_ratio": ratio,
                "bump_correction_16": corr[0], "bump_correction_64": corr[2],
                "central_ratio": max(central) / min(central), "min_curvature": curv}, note


def c03_spectrum(ctx):
    dil = 0.0
    same = 0.0
    bump = ctx.pairs["bump"][1]
    for k in range(1, 129):
        lam = ctx.bg("dilation", k).lambdas if k in ctx.k_list else spectral_pair(
            gram_matrix(FubiniStudy(), k, ctx.quad(k)),
            gram_matrix(ctx.pairs["dilation"][1], k, ctx.quad(k)), k).lambdas
        dil = max(dil, float(np.abs(np.abs(np.diff(lam)) - 0.5).max()))
        G = gram_matrix(bump, k, ctx.quad(k))
        same = max(same, float(np.abs(spectral_pair(G, G, k).lambdas).max()))
    ok = dil <= 1e-10 * ctx.tol and same <= 1e-10 * ctx.tol
    return ok, {"dilation_spacing_error": dil, "identical_pair_max": same}, ""


def c04_closed_form_geodesic(ctx):
    t, x = ctx.t[:, None], ctx.x[None, :]
    exact = np.logaddexp(0, x + t) - np.logaddexp(0, x)
    err = 0.0
    for k in ctx.k_list:
        shift = np.log((k + 1) / k) / k
        err = max(err, float(np.abs(ctx.path("dilation", k).relative - exact - shift).max()))
    return err <= 1e-9 * ctx.tol, {"max_error": err}, ""


def c05_velocity_bound(ctx):
    bad, worst = 0, -np.inf
    for pair in ctx.pairs:
        for k in ctx.k_list:
            bg = ctx.bg(pair, k)
            bound = 2 * np.abs(bg.lambdas).max() / k
            v = np.abs(ctx.path(pair, k).psi_t)
            bad += int(np.sum(v > bound * (1 + 1e-12) + 1e-15))
            worst = max(worst, float(v.max() - bound))
    return bad == 0, {"violations": bad, "max_excess": worst}, ""


def c06_mass_decay(ctx):
    start = time.perf_counter()
    tab = ma_mass_decay_study(ctx.pairs["bump"], ctx.k_list)
    secs = time.perf_counter() - start
    ok = (tab.ratio <= 3 and -1.7 <= tab.slope <= -0.7 and secs < 60
          and bool(np.all(tab.mass >= -1e-8 * ctx.tol)))
    return ok, {"slope": tab.slope, "k_mass_ratio": tab.ratio, "mass_128": float(tab.mass[-1]),
                "runtime_s": secs}, ""


def c07_boundary_bulk(ctx):
    bg = ctx.bg("bump", 32)
    boundary = ma_mass_boundary(bg, ctx.quad(32))
    gaps = []
    for refine in (1, 2):
        t, x = default_grid(refine * (ctx.t.size - 1) + 1, refine * (ctx.x.size - 1) + 1, ctx.config.x_max)
        bulk = ma_mass_bulk(sample_path(bg, t, x))
        gaps.append(abs(bulk - boundary) / abs(boundary))
    ok = gaps[0] <= 0.05 * ctx.tol and gaps[1] <= 0.015 * ctx.tol
    return ok, {"boundary": boundary, "gap_default": gaps[0], "gap_refined": gaps[1]}, ""


def c08_convergence(ctx):
    ls = (8, 16, 32, 64)
    out, ok = {}, True
    for pair in ctx.pairs:
        rep = convergence_study(ctx.pairs[pair], ctx.k_list, ls, ctx.t, ctx.x, oracle=ctx.oracle(pair))
        ok &= rep.envelope_strictly_decreasing
        out[f"{pair}_E8"] = float(rep.envelope_errors[0])
        out[f"{pair}_E64"] = float(rep.envelope_errors[-1])
        if pair == "dilation":
            exact = np.array([np.log((l + 1) / l) / l for l in ls])
            dev = float(np.abs(rep.envelope_errors - exact).max())
            out["dilation_formula_error"] = dev
            ok &= dev <= 1e-9 * ctx.tol
        if pair == "bump":
            out["bump_E64_over_E8"] = float(rep.envelope_errors[-1] / rep.envelope_errors[0])
            ok &= rep.envelope_errors[-1] < rep.envelope_errors[0] / 3
    return bool(ok), out, ""


def c09_oracle(ctx):
    res = end = 0.0
    strict = True
    gaps = {}
    for pair in ctx.pairs:
        g = ctx.oracle(pair)
        res = max(res, geodesic_equation_residual(g))
        end = max(end, g.roundtrip_error)
        e_or = path_energy(g.analytic)
        e_lin = path_energy(LinearPath(*ctx.pairs[pair]).sample(ctx.t, ctx.x))
        gaps[f"{pair}_energy_gap"] = e_lin - e_or
        strict &= e_or < e_lin
    ok = res <= 1e-6 * ctx.tol and end <= 1e-8 * ctx.tol and strict
    return bool(ok), {"residual": res, "endpoint_error": end, **gaps}, ""


def c10_variance(ctx):
    rng = np.random.default_rng(ctx.config.seed)
    t = rng.uniform(0, 1, 200)
    x = rng.uniform(-10, 10, 200)
    var_err = fd_err = 0.0
    for pair in ctx.pairs:
        for k in ctx.k_list:
            rep = variance_check(ctx.bg(pair, k), t, x)
            var_err = max(var_err, rep["variance_rel_error"])
            fd_err = max(fd_err, rep["fd_rel_error"])
    sup = 0.0
    for k in ctx.k_list:
        bg = ctx.bg("dilation", k)
        sup = max(sup, max(float(geodesic_accel(bg, ti, ctx.x).max()) for ti in ctx.t))
    ok = var_err <= 1e-10 * ctx.tol and fd_err <= 1e-6 * ctx.tol and sup <= 0.25 + 1e-9 * ctx.tol
    return ok, {"variance_rel_error": var_err, "fd_rel_error": fd_err, "dilation_accel_sup": sup}, ""


def c11_harnack(ctx):
    dmin = np.inf
    for pair in ctx.pairs:
        for k in ctx.k_list:
            dmin = min(dmin, harnack_differential_check(ctx.bg(pair, k), ctx.t, ctx.x).defect_min)
    bad = bad4 = bad_half = 0
    n = ctx.config.harnack_samples
    margin = np.inf
    for pair in ctx.pairs:
        if n == 0:
            break
        rep = harnack_global_check(ctx.bg(pair, 32), n_samples=n, seed=ctx.config.seed,
                                   window=ctx.config.dp_window, abs_tol=1e-8 * ctx.tol,
                                   path=ctx.path(pair, 32))
        bad += rep.violations
        bad4 += rep.violations_quarter
        bad_half += rep.violations_half_speed
        margin = min(margin, rep.min_margin)
    ok = dmin >= -1e-8 * ctx.tol and bad == 0
    note = "global check skipped (zero samples)" if n == 0 else ""
    return ok, {"defect_min": float(dmin), "violations": bad, "violations_quarter": bad4,
                "violations_half_speed": bad_half, "min_margin": float(margin)}, note


def random_bumps(seed, n=10):
    """n valid bump potentials drawn with a fixed seed (invalid draws are skipped)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        b = Bump(rng.uniform(-0.15, 0.4), rng.uniform(0.8, 3.0), rng.uniform(-2.0, 2.0))
        try:
            out.append(b.validate())
        except PositivityViolation:
            continue
    return out


def _shipped_potentials(ctx):
    seen = {}
    for phi0, phi1 in ctx.pairs.values():
        for p in (phi0, phi1):
            seen[repr(p)] = p
    return list(seen.values())


def c12_sobolev(ctx):
    pots = _shipped_potentials(ctx) + random_bumps(ctx.config.seed)
    reps = [sobolev_bound_check(p) for p in pots]
    bad = sum(not r["holds"] for r in reps)
    return bad == 0, {"potentials": len(pots), "violations": bad,
                      "min_slack": min(r["slack"] for r in reps)}, ""


def c13_volume(ctx):
    pots = _shipped_potentials(ctx) + random_bumps(ctx.config.seed)
    for pair in ctx.pairs:
        for k in ctx.k_list:
            bg = ctx.bg(pair, k)
            pots += [bg.slice(t) for t in (0.0, 0.5, 1.0)]
    err = max(abs(total_volume(p) - 1) for p in pots)
    return err <= 1e-10 * ctx.tol, {"potentials": len(pots), "max_volume_error": float(err)}, ""


CRITERIA = [
    (1, "gram closed form", c01_gram_closed_form),
    (2, "bergman density", c02_bergman_density),
    (3, "spectrum exactness", c03_spectrum),
    (4, "closed-form geodesic", c04_closed_form_geodesic),
    (5, "velocity bound", c05_velocity_bound),
    (6, "mass decay", c06_mass_decay),
    (7, "boundary-bulk consistency", c07_boundary_bulk),
    (8, "envelope convergence", c08_convergence),
    (9, "oracle certification", c09_oracle),
    (10, "acceleration and variance", c10_variance),
    (11, "harnack", c11_harnack),
    (12, "sobolev bound", c12_sobolev),
    (13, "volume conservation", c13_volume),
]


def run_criterion(cid, ctx):
    for i, name, fn in CRITERIA:
        if i == cid:
            start = time.perf_counter()
            ok, measured, note = fn(ctx)
            return CriterionResult(i, name, bool(ok), measured, time.perf_counter() - start, note)
    raise KeyError(cid)


def run_acceptance(config=None, only=None, ctx=None):
    ctx = Context(config or ExperimentConfig()) if ctx is None else ctx
    ids = [i for i, _, _ in CRITERIA] if only is None else list(only)
    return [run_criterion(i, ctx) for i in ids]


__all__ = ["CriterionResult", "Context", "CRITERIA", "run_criterion", "run_acceptance", "random_bumps"]
