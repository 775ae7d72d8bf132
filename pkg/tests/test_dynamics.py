import math

import numpy as np
import pytest
from oracles import exponential_sum_1d, ode_solution

from dnls.analysis import energy, mass
from dnls.dynamics import (
    SolverConfig,
    continuum_solve,
    free_gaussian,
    gaussian,
    kernel_factor_1d,
    kernel_K,
    kernel_matrix,
    kernel_sup,
    linear_flow,
    linear_flow_samples,
    nls_solve,
    small_amplitude_rescale,
    tail_mass_fraction,
)
from dnls.lattice import ContinuumGrid, GridFunction, LatticeSpec, PeriodicLattice
from dnls.spectral import SpectralCoeffs, inverse, symbol_grid


def _rand(dom, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return GridFunction(dom, scale * (rng.normal(size=dom.shape) + 1j * rng.normal(size=dom.shape)))


def _norm(f):
    return math.sqrt(f.weight * np.sum(np.abs(f.values) ** 2))


# -- linear flow -------------------------------------------------------------------


def test_flow_at_zero_is_identity():
    f = _rand(LatticeSpec(2, 4, 1))
    np.testing.assert_allclose(linear_flow(f, 0.0).values, f.values, atol=1e-13)


def test_mode_picks_up_phase():
    s = LatticeSpec(2, 4, 2)
    c = np.zeros(s.shape)
    c[3, 10] = 1.0
    e = inverse(SpectralCoeffs(s, c))
    t = 0.37
    P = symbol_grid(s)[3, 10]
    np.testing.assert_allclose(linear_flow(e, t).values, np.exp(-1j * t * P) * e.values, atol=1e-12)


@pytest.mark.parametrize("dom", [LatticeSpec(2, 8, 1), PeriodicLattice(2, 0.3, 24), ContinuumGrid(1, 0.1, 2.0)])
def test_flow_unitary_and_group_law(dom):
    f = _rand(dom, 1)
    g = linear_flow(f, 1.3)
    assert _norm(g) == pytest.approx(_norm(f), rel=1e-12)
    np.testing.assert_allclose(linear_flow(linear_flow(f, 0.4), 0.9).values, g.values, atol=1e-11)
    np.testing.assert_allclose(linear_flow(g, -1.3).values, f.values, atol=1e-11)


def test_sampled_flow_matches_single_calls():
    f = _rand(LatticeSpec(2, 4, 2), 2)
    times = np.linspace(0, 2, 37)
    for t, v in linear_flow_samples(f, times, batch=5):
        np.testing.assert_allclose(v, linear_flow(f, t).values, atol=1e-12)


def test_sampled_flow_rejects_periodic():
    with pytest.raises(TypeError):
        list(linear_flow_samples(_rand(PeriodicLattice(1, 0.5, 8)), [0.0]))


# -- kernel ------------------------------------------------------------------------


def test_kernel_at_time_zero_is_delta():
    s = LatticeSpec(2, 2, 1)
    Km = kernel_matrix(s, 0.0, 1.0)
    np.testing.assert_allclose(Km, np.eye(s.size) / s.h**2, atol=1e-10)
    assert kernel_sup(s, 1e-12, 1.0) == pytest.approx(1 / s.h**2, rel=1e-9)


def test_kernel_symmetric():
    s = LatticeSpec(2, 3, 1)
    Km = kernel_matrix(s, 0.7, 0.5)
    np.testing.assert_allclose(Km, Km.T, atol=1e-12)


@pytest.mark.parametrize("K,R", [(2, 2), (4, 2), (8, 2)])
def test_factorized_equals_direct(K, R):
    s = LatticeSpec(2, K, R)
    assert s.n <= 31
    for N in (0.25, 1.0):
        a = kernel_sup(s, 0.8, N, "factorized")
        b = kernel_sup(s, 0.8, N, "direct")
        assert abs(a - b) < 1e-10 * max(1.0, b)
    x = s.coords()
    v1 = kernel_K(s, 0.8, 0.5, [x[1], x[-2]], [x[3], x[0]])
    v2 = kernel_K(s, 0.8, 0.5, [x[1], x[-2]], [x[3], x[0]], "direct")
    assert abs(v1 - v2) < 1e-10


def test_kernel_vanishes_on_boundary_and_rejects_outside():
    s = LatticeSpec(1, 2, 1)
    assert kernel_K(s, 0.5, 1.0, [math.pi], [0.0]) == 0
    with pytest.raises(ValueError):
        kernel_K(s, 0.5, 1.0, [4.0], [0.0])


def test_one_axis_kernel_is_exponential_sum():
    K, R, t, N = 8, 2, 0.9, 0.5
    s = LatticeSpec(1, K, R)
    k1 = kernel_factor_1d(s, t, N)
    x = s.coords()
    centre = s.n // 2
    assert x[centre] == pytest.approx(0.0, abs=1e-14)
    np.testing.assert_allclose(k1[:, centre], exponential_sum_1d(K, R, t, N, x), atol=1e-12)


def test_one_axis_kernel_bounded_by_free_sum():
    K, R, t, N = 8, 2, 0.6, 1.0
    s = LatticeSpec(1, K, R)
    k1 = kernel_factor_1d(s, t, N)
    h = s.h
    m = np.arange(-s.M * N, s.M * N + 1)
    xi = m / (2 * R)
    ph = np.exp(-2j * t / h**2 * (1 - np.cos(h * xi)))

    def free(y):
        return np.abs((ph * np.exp(1j * np.asarray(y)[..., None] * xi)).sum(-1)) / (4 * math.pi * R)

    x = s.coords()
    X, Xp = np.meshgrid(x, x, indexing="ij")
    bound = free(X - Xp) + free(X + Xp + 2 * math.pi * R)
    assert np.all(np.abs(k1) <= bound + 1e-12)


# -- nonlinear solver --------------------------------------------------------------


def test_zero_datum_stays_zero():
    s = LatticeSpec(2, 2, 1)
    traj = nls_solve(GridFunction(s, np.zeros(s.shape)), SolverConfig(tau=0.1, T=1.0))
    assert np.all(traj.final.values == 0)


def test_tiny_datum_follows_linear_flow():
    f = _rand(LatticeSpec(2, 4, 1), 3, scale=1e-6)
    w = nls_solve(f, SolverConfig(tau=0.01, T=0.5)).final
    np.testing.assert_allclose(w.values, linear_flow(f, 0.5).values, atol=1e-15)


def test_ode_oracle_single_site():
    s = LatticeSpec(1, 5, 1)
    assert s.n == 9
    v = np.zeros(s.shape, complex)
    v[4] = 1.0
    f = GridFunction(s, v)
    w = nls_solve(f, SolverConfig(tau=1e-4, T=0.5)).final
    ref = ode_solution(f.values, 1, 5, 1, 0.5)
    assert math.sqrt(s.h * np.sum(np.abs(w.values.ravel() - ref) ** 2)) < 1e-8


@pytest.mark.parametrize("sigma", [1.0, -1.0])
def test_mass_conserved_energy_drift_second_order(sigma):
    s = LatticeSpec(2, 4, 1)
    f = _rand(s, 5, scale=0.5)
    m0, e0 = mass(f), energy(f, sigma)
    drift = []
    for tau in (0.02, 0.01):
        w = nls_solve(f, SolverConfig(tau=tau, T=1.0, sigma=sigma)).final
        assert mass(w) == pytest.approx(m0, rel=1e-12)
        drift.append(abs(energy(w, sigma) - e0))
    assert 3.0 < drift[0] / drift[1] < 5.0


def test_time_reversal():
    f = _rand(LatticeSpec(2, 4, 1), 6, scale=0.5)
    w = nls_solve(f, SolverConfig(tau=1e-3, T=0.5)).final
    back = nls_solve(w, SolverConfig(tau=1e-3, T=-0.5)).final
    assert np.abs(back.values - f.values).max() < 1e-8


def test_snapshots_recorded():
    f = _rand(LatticeSpec(1, 2, 1), 7)
    traj = nls_solve(f, SolverConfig(tau=0.1, T=1.0, snapshots=(0.3,), snapshot_every=5))
    np.testing.assert_allclose(traj.times, [0.0, 0.3, 0.5, 1.0])
    assert traj.values().shape == (4, 3)


@pytest.mark.parametrize("bad", [dict(tau=0.0), dict(tau=0.6), dict(tau=0.3, T=1.0)])
def test_solver_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_periodic_tail_monitor():
    lat = PeriodicLattice(1, 0.25, 256)
    f = GridFunction(lat, gaussian()(*lat.mesh()))
    traj = nls_solve(f, SolverConfig(tau=0.01, T=0.1))
    assert max(traj.diagnostics["tail_mass"]) < 1e-8
    edge = np.zeros(lat.shape)
    edge[0] = 1.0
    assert tail_mass_fraction(GridFunction(lat, edge)) == 1.0


def test_continuum_linear_gaussian_closed_form():
    grid = ContinuumGrid(1, math.pi / 32, 8 * math.pi)
    u = continuum_solve(gaussian(), 1.0, grid, tau_ref=0.1, nonlinear=False)
    exact = free_gaussian(1.0, 1.0, 1.0)(*grid.mesh())
    assert np.abs(u.values - exact).max() < 1e-8


def test_continuum_rejects_wide_datum():
    with pytest.raises(ValueError):
        continuum_solve(gaussian(3.0), 0.1, ContinuumGrid(1, 0.1, 4.0), tau_ref=0.05)


# -- small-amplitude rescaling ------------------------------------------------------


def test_rescale_round_trip_and_bridge():
    s = LatticeSpec(1, 4, 1)
    f = _rand(s, 8, scale=0.3)
    traj = nls_solve(f, SolverConfig(tau=0.01, T=0.2))
    unit = small_amplitude_rescale(traj)
    assert unit.domain.unit_spacing
    np.testing.assert_allclose(unit.times[-1], 0.2 / s.h**2)
    back = small_amplitude_rescale(unit, "from_unit")
    np.testing.assert_allclose(back.final.values, traj.final.values, atol=1e-15)
    # the rescaled field solves the unit-lattice equation
    v = nls_solve(unit.states[0], SolverConfig(tau=0.01 / s.h**2, T=0.2 / s.h**2)).final
    np.testing.assert_allclose(v.values, unit.final.values, atol=1e-12)


def test_rescale_rejects_wrong_direction():
    traj = nls_solve(_rand(LatticeSpec(1, 2, 1)), SolverConfig(tau=0.1, T=0.1))
    with pytest.raises(ValueError):
        small_amplitude_rescale(traj, "from_unit")
