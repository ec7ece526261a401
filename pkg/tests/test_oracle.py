import numpy as np
import pytest

from bergman_geodesics.errors import GridMismatch, OutOfDomain
from bergman_geodesics.geometry import Bump, Dilation, FubiniStudy
from bergman_geodesics.hmae import LinearPath, PathGrid, default_grid, sample_potentials
from bergman_geodesics.oracle import (
    convergence_study,
    exact_geodesic,
    geodesic_distance,
    geodesic_equation_residual,
)

from oracles import geodesic_value

FS, DIL, BUMP = FubiniStudy(), Dilation(1.0), Bump(0.3, 1.5)
B0, B1 = Bump(0.25, 2.0, -1.0), Bump(0.2, 1.5, 1.0)
T, X = default_grid(33, 201, 20.0)

# frozen from oracles.geodesic_value at t = 1/2, relative to phi0
XS = np.array([-6.0, -2.0, -0.5, 0.0, 1.0, 3.0, 8.0])
BUMP_MID = np.array([4.70929360e-05, 5.01302228e-02, 1.39150421e-01, 1.50000000e-01,
                     1.11870331e-01, 1.51342675e-02, 9.96880143e-08])
BUMP2_MID = np.array([-8.28372419e-03, -9.72188783e-02, -6.78509816e-02, -3.95367831e-02,
                      1.95115652e-02, 2.15962891e-02, -3.18132067e-06])


@pytest.mark.parametrize("pair,frozen", [((FS, BUMP), BUMP_MID), ((B0, B1), BUMP2_MID)])
def test_oracle_against_frozen_values(pair, frozen):
    g = exact_geodesic(*pair, np.array([0.0, 0.5, 1.0]), XS)
    assert np.abs(g.grid.relative[1] - frozen).max() < 1e-8


@pytest.mark.parametrize("pair", [(FS, BUMP), (B0, B1)])
def test_oracle_against_scalar_maximisation(pair):
    t = np.array([0.0, 0.3, 0.8, 1.0])
    x = np.array([-9.0, -1.0, 0.25, 2.0, 7.5])
    g = exact_geodesic(*pair, t, x)
    ref = np.array([[geodesic_value(*pair, ti, xi) for xi in x] for ti in t])
    assert np.abs(g.grid.psi - ref).max() < 1e-11


def test_constant_pair():
    g = exact_geodesic(BUMP, BUMP, T, X)
    assert np.abs(g.grid.psi - BUMP.psi(X)[None, :]).max() < 1e-12
    assert geodesic_equation_residual(g) < 1e-9


def test_dilation_oracle_exact():
    g = exact_geodesic(FS, DIL, T, X)
    exact = np.logaddexp(0, X[None, :] + T[:, None]) - np.logaddexp(0, X)[None, :]
    assert np.abs(g.grid.relative - exact).max() < 1e-9
    assert geodesic_equation_residual(g) <= 1e-9


@pytest.mark.parametrize("pair", [(FS, BUMP), (B0, B1)])
def test_oracle_validity(pair):
    g = exact_geodesic(*pair)
    assert geodesic_equation_residual(g) <= 1e-6
    assert g.roundtrip_error <= 1e-8


def test_residual_on_values_only():
    # differencing values alone (no stored psi_x / psi_xx) still certifies the oracle
    g = exact_geodesic(FS, BUMP, T, X)
    bare = PathGrid(T, X, g.grid.psi)
    assert geodesic_equation_residual(bare) < 1e-4


def test_linear_path_residual_positive():
    lin = sample_potentials(LinearPath(FS, BUMP).slice, T, X, FS, BUMP)
    assert geodesic_equation_residual(lin) > 1e-3


def test_residual_grid_checks():
    with pytest.raises(GridMismatch):
        geodesic_equation_residual(PathGrid(T[:5], X, np.zeros((5, X.size))))
    t = np.r_[0.0, np.cumsum(np.linspace(0.01, 0.1, 10))]
    with pytest.raises(GridMismatch):
        geodesic_equation_residual(PathGrid(t, X, np.zeros((t.size, X.size))))


# ---- convergence -----------------------------------------------------------------

def test_dilation_level_errors():
    rep = convergence_study((FS, DIL), [8, 16, 32], [8, 16, 32], T, X)
    exact = np.log((rep.k + 1) / rep.k) / rep.k
    assert np.allclose(rep.level_errors, exact, rtol=1e-9)
    assert rep.level_errors[2] == pytest.approx(9.6161e-4, rel=1e-4)
    assert rep.envelope_nonincreasing


def test_bump_convergence():
    ks = [8, 16, 32, 64, 128]
    rep = convergence_study((FS, BUMP), ks, ks, T, X)
    assert np.all(np.diff(rep.level_errors) < 0)
    assert rep.envelope_nonincreasing
    for i in range(len(ks)):
        assert rep.envelope_errors[i] <= rep.level_errors[i:].max() + 1e-15


def test_convergence_grid_mismatch():
    g = exact_geodesic(FS, DIL, T, X[:-2])
    with pytest.raises(GridMismatch):
        convergence_study((FS, DIL), [8], [8], T, X, oracle=g)


# ---- discrete distance ------------------------------------------------------------

@pytest.fixture(scope="module")
def static_path():
    t, x = default_grid(33, 401, 10.0)
    return sample_potentials(lambda _: BUMP, t, x, BUMP, BUMP)


def test_distance_zero_on_straight_path(static_path):
    assert geodesic_distance(static_path, (0.0, 1.0), (0.5, 1.0)) == 0.0


def test_distance_symmetric(static_path):
    d1 = geodesic_distance(static_path, (0.0, -1.0), (1.0, 1.5))
    d2 = geodesic_distance(static_path, (0.0, 1.5), (1.0, -1.0))
    assert d1 > 0
    assert d1 == pytest.approx(d2, rel=1e-12)


def test_distance_refinement():
    pts = ((0.0, -1.0), (1.0, 1.5))
    d = []
    for r in (1, 2):
        t, x = default_grid(32 * r + 1, 400 * r + 1, 10.0)
        path = sample_potentials(lambda s: LinearPath(FS, BUMP).slice(s), t, x, FS, BUMP)
        d.append(geodesic_distance(path, *pts))
    assert abs(d[1] - d[0]) <= 0.1 * d[0]


def test_distance_errors(static_path):
    with pytest.raises(OutOfDomain):
        geodesic_distance(static_path, (0.5, 0.0), (0.5, 0.0))
    with pytest.raises(OutOfDomain):
        geodesic_distance(static_path, (0.0, 0.0), (0.5, 50.0))
    assert geodesic_distance(static_path, (0.0, -9.0), (1 / 32, 9.0)) == np.inf
