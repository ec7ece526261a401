import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bergman_geodesics.bergman import bergman_geodesic
from bergman_geodesics.errors import DegenerateMetric, GridMismatch, NotSummable
from bergman_geodesics.geometry import Bump, Dilation, FubiniStudy
from bergman_geodesics.hmae import (
    ANGULAR_CONSTANT,
    LinearPath,
    PathGrid,
    calibrate_angular_constant,
    default_grid,
    dirichlet_residual_report,
    energy_derivative,
    envelope,
    hessian_min_eigenvalue,
    inverse_square_shift,
    ma_density,
    ma_mass_boundary,
    ma_mass_bulk,
    ma_mass_decay_study,
    ma_mass_report,
    monotone_shift,
    path_energy,
    sample_path,
    shifted_boundary_decreasing,
)
from bergman_geodesics.oracle import exact_geodesic

FS, DIL, BUMP = FubiniStudy(), Dilation(1.0), Bump(0.3, 1.5)
T, X = default_grid(33, 201, 20.0)


@pytest.fixture(scope="module")
def bump_bg():
    return bergman_geodesic(FS, BUMP, 32)


# ---- grids ---------------------------------------------------------------------

def test_path_grid_validation():
    with pytest.raises(GridMismatch):
        PathGrid(T, X, np.zeros((3, 3)))
    with pytest.raises(GridMismatch):
        PathGrid(T[::-1], X, np.zeros((T.size, X.size)))


# ---- densities and masses -------------------------------------------------------------

def test_constant_path_is_flat():
    bg = bergman_geodesic(BUMP, BUMP, 16)
    path = sample_path(bg, T, X)
    assert np.all(ma_density(path) == 0)
    assert ma_mass_bulk(path) == 0
    assert ma_mass_boundary(bg) == 0
    assert energy_derivative(bg, 0.5) == 0
    assert path_energy(path) == 0


@pytest.mark.parametrize("k", [8, 64])
def test_dilation_geodesic_is_flat(k):
    bg = bergman_geodesic(FS, DIL, k)
    path = sample_path(bg, T, X)
    assert np.abs(ma_density(path)).max() <= 1e-9
    assert abs(ma_mass_bulk(path)) <= 1e-8
    assert abs(ma_mass_boundary(bg)) <= 1e-10
    for t in (0.0, 0.3, 1.0):
        assert energy_derivative(bg, t) == pytest.approx(0.5, abs=1e-12)


def test_generic_density_nonnegative(bump_bg):
    t, x = default_grid(65, 801)
    for ti in t:
        assert ma_density(bump_bg, ti, x).min() >= -1e-8


def test_angular_constant_calibration():
    assert ANGULAR_CONSTANT == 1.0
    for pair in ((FS, BUMP), (Bump(0.25, 2.0, -1.0), Bump(0.2, 1.5, 1.0))):
        assert calibrate_angular_constant(*pair) == pytest.approx(1.0, abs=1e-9)


def test_linear_path_density():
    path = LinearPath(FS, BUMP).sample(T, X)
    assert np.allclose(ma_density(path), -BUMP.dphi(X)[None, :] ** 2, atol=1e-15)
    rep = dirichlet_residual_report(path)
    assert rep["hmae_residual"] > 1e-3 and rep["hessian_min"] < 0


def test_boundary_matches_bulk(bump_bg):
    rep = ma_mass_report(bump_bg)
    assert rep.relative_gap <= 0.05
    assert rep.boundary_value > 0


def test_mass_halves_with_k():
    m16 = ma_mass_boundary(bergman_geodesic(FS, BUMP, 16))
    m32 = ma_mass_boundary(bergman_geodesic(FS, BUMP, 32))
    assert 1.7 <= m16 / m32 <= 2.3


def test_decay_study():
    tab = ma_mass_decay_study((FS, BUMP), [8, 16, 32, 64, 128])
    assert -1.7 <= tab.slope <= -0.7
    assert np.all(tab.mass >= -1e-8)
    assert np.all(tab.mass[1:] <= 1.1 * tab.mass[:-1])
    with pytest.raises(ValueError):
        ma_mass_decay_study((FS, BUMP), [16, 8])


def test_energy_derivative_nondecreasing(bump_bg):
    vals = [energy_derivative(bump_bg, t) for t in np.linspace(0, 1, 11)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_dilation_oracle_energy():
    t, x = default_grid(129, 1601, 40.0)
    g = exact_geodesic(FS, DIL, t, x)
    assert path_energy(g.analytic) == pytest.approx(1 / 3, abs=1e-5)


def test_oracle_energy_below_linear():
    g = exact_geodesic(FS, BUMP, T, X)
    assert path_energy(g.analytic) < path_energy(LinearPath(FS, BUMP).sample(T, X))


def test_degenerate_metric_raises():
    path = PathGrid(T[:3], X[:3], np.zeros((3, 3)), psi_t=np.zeros((3, 3)), psi_xx=-np.ones((3, 3)),
                    psi_tt=np.zeros((3, 3)), psi_tx=np.zeros((3, 3)))
    with pytest.raises(DegenerateMetric):
        ma_density(path)


# ---- Dirichlet residuals --------------------------------------------------------------

def test_oracle_residual_report():
    rep = dirichlet_residual_report(exact_geodesic(FS, BUMP, T, X).analytic)
    assert rep["boundary_mismatch"] <= 1e-6
    assert rep["hessian_min"] >= -1e-8
    assert rep["hmae_residual"] <= 1e-6
    assert rep["region"] == "interior"


def test_bergman_residual_report():
    rep = dirichlet_residual_report(sample_path(bergman_geodesic(FS, BUMP, 64), T, X))
    assert rep["hessian_min"] >= -1e-8
    assert rep["boundary_mismatch"] <= 0.01
    assert 0 < rep["hmae_residual"] <= 0.01


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 5))
def test_hessian_min_eigenvalue(a, b, c):
    ref = np.linalg.eigvalsh(np.array([[a, b], [b, c]]))[0]
    assert hessian_min_eigenvalue(a, b, c) == pytest.approx(ref, abs=1e-10)


# ---- shifts and envelopes -------------------------------------------------------------

def test_monotone_shift_inverse_square():
    k = np.arange(1, 201)
    sched = monotone_shift(1.0 / k**2)
    assert sched.c[0] == pytest.approx(np.pi**2 / 3, rel=1e-13)
    assert np.allclose(sched.c[:-1] - sched.c[1:], 2 * sched.a[:-1], rtol=0, atol=1e-15)


@settings(max_examples=30)
@given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=30))
def test_monotone_shift_telescopes(vals):
    a = np.sort(vals)[::-1]
    s = monotone_shift(a)
    assert np.allclose(np.diff(s.c), -2 * a[:-1], rtol=1e-12, atol=1e-15)
    assert np.all(s.c > 0)


def test_monotone_shift_errors():
    with pytest.raises(ValueError):
        monotone_shift([0.1, 0.2])
    with pytest.raises(ValueError):
        monotone_shift([0.1, 0.05], k_values=[8, 16])
    with pytest.raises(NotSummable):
        monotone_shift(np.full(10, 1e6))


def test_inverse_square_shift_orders_boundaries():
    ks = [8, 16, 32, 64]
    paths = [sample_path(bergman_geodesic(FS, BUMP, k), T, X) for k in ks]
    errs = [max(np.abs(p.relative[0]).max(), np.abs(p.relative[-1] - BUMP.phi(X)).max()) for p in paths]
    sched = inverse_square_shift(ks, errs)
    assert shifted_boundary_decreasing(paths, sched)
    assert np.all(np.diff(sched.c) < 0)


def test_envelope_single_member():
    p = sample_path(bergman_geodesic(FS, BUMP, 16), T, X)
    env = envelope([p], 16)
    assert np.array_equal(env.values, p.relative)
    assert env.usc_identity


def test_envelope_dilation_closed_form():
    paths = [sample_path(bergman_geodesic(FS, DIL, k), T, X) for k in (16, 32, 64, 128)]
    env = envelope(paths, 32)
    exact = np.logaddexp(0, X[None, :] + T[:, None]) - np.logaddexp(0, X)[None, :]
    assert np.abs(env.values - exact - np.log(33 / 32) / 32).max() < 1e-12
    assert env.k_max == 128 and env.usc_identity
    with pytest.raises(ValueError):
        envelope(paths, 256)


def test_envelope_grid_mismatch():
    a = sample_path(bergman_geodesic(FS, DIL, 8), T, X)
    b = sample_path(bergman_geodesic(FS, DIL, 16), T, X[:-1])
    with pytest.raises(GridMismatch):
        envelope([a, b], 8)
