import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import dense_laplacian

from dnls.calculus import (
    LocalizationKernel,
    SeamContaminationError,
    commutator_hZ,
    discretize,
    divergence_left,
    extend,
    gradient_adjoint,
    gradient_omega,
    gradient_omega_adjoint,
    gradient_right,
    interpolate,
    laplacian_commutator,
    laplacian_h,
    laplacian_omega,
    localize,
    phi,
    reduced_radius,
    restrict,
    weight_shift_identity_residual,
)
from dnls.dynamics import gaussian
from dnls.lattice import GridFunction, LatticeSpec, PeriodicLattice
from dnls.spectral import SpectralCoeffs, inverse, symbol_grid


def _rand(dom, seed=0):
    rng = np.random.default_rng(seed)
    return GridFunction(dom, rng.normal(size=dom.shape) + 1j * rng.normal(size=dom.shape))


def _ip(f, g):
    return f.weight * np.sum(f.values * np.conj(g.values))


def test_laplacian_single_node():
    s = LatticeSpec(1, 1, 1)
    out = laplacian_omega(GridFunction(s, [1.0]))
    assert out.values[0] == pytest.approx(-2 / math.pi**2)


def test_laplacian_zero():
    s = LatticeSpec(2, 2, 1)
    assert np.all(laplacian_omega(GridFunction(s, np.zeros(s.shape))).values == 0)


@pytest.mark.parametrize("d,K,R", [(1, 4, 2), (2, 3, 1), (3, 2, 1)])
def test_laplacian_matches_dense(d, K, R):
    s = LatticeSpec(d, K, R)
    f = _rand(s)
    np.testing.assert_allclose(laplacian_omega(f).values.ravel(), dense_laplacian(d, K, R) @ f.values.ravel(), atol=1e-10)


def test_eigen_equation():
    s = LatticeSpec(2, 4, 1)
    P = symbol_grid(s)
    worst = 0.0
    for m in np.ndindex(*s.shape):
        c = np.zeros(s.shape)
        c[m] = 1
        e = inverse(SpectralCoeffs(s, c))
        worst = max(worst, np.abs(laplacian_omega(e).values + P[m] * e.values).max())
    assert worst < 1e-10


def test_periodic_gradient_of_constant():
    lat = PeriodicLattice(2, 0.5, 8)
    assert np.all(gradient_right(GridFunction(lat, np.full(lat.shape, 3.0))) == 0)


def test_periodic_gradient_of_exponential():
    n = 32
    h = 2 * math.pi / n
    lat = PeriodicLattice(1, h, n)
    x = lat.coords()
    g = gradient_right(GridFunction(lat, np.exp(1j * x)))
    np.testing.assert_allclose(np.abs(g[0]), abs(np.exp(1j * h) - 1) / h, rtol=1e-12)


def test_periodic_adjoint_and_divergence():
    lat = PeriodicLattice(2, 0.3, 10)
    f = _rand(lat, 1)
    g = np.stack([_rand(lat, 2).values, _rand(lat, 3).values])
    lhs = lat.h**2 * np.sum(gradient_right(f) * np.conj(g))
    rhs = _ip(f, gradient_adjoint(g, lat))
    assert lhs == pytest.approx(rhs, rel=1e-12)
    np.testing.assert_allclose(divergence_left(gradient_right(f), lat).values, laplacian_h(f).values, atol=1e-10)


@pytest.mark.parametrize("d,K,R", [(1, 1, 1), (1, 3, 2), (2, 2, 2), (3, 2, 1)])
def test_omega_gradient_energy_identity(d, K, R):
    s = LatticeSpec(d, K, R)
    f = _rand(s, 4)
    lhs = s.h**d * np.sum(np.abs(gradient_omega(f)) ** 2)
    rhs = -_ip(laplacian_omega(f), f).real
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_omega_gradient_adjoint():
    s = LatticeSpec(2, 2, 2)
    f = _rand(s, 5)
    rng = np.random.default_rng(6)
    g = rng.normal(size=(2,) + s.full_shape) + 1j * rng.normal(size=(2,) + s.full_shape)
    G = gradient_omega(f)
    lhs = s.h**2 * np.sum(G * np.conj(g))
    rhs = _ip(f, gradient_omega_adjoint(g, s))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_discretize_constant_and_linear():
    s = LatticeSpec(1, 4, 1)
    np.testing.assert_allclose(discretize(lambda x: np.full_like(x, 2.5), s).values, 2.5)
    np.testing.assert_allclose(discretize(lambda x: x, s).values, s.coords() + s.h / 2, atol=1e-14)


def test_discretize_l2_contraction():
    lat = PeriodicLattice(2, math.pi / 4, 64)
    u0 = gaussian(0.7, 1.3)
    d = discretize(u0, lat)
    lat_norm = math.sqrt(d.weight * np.sum(np.abs(d.values) ** 2))
    cont_norm = 1.3 * math.sqrt(math.pi * 0.7**2)
    assert lat_norm <= cont_norm


def test_localize_identity_on_support():
    s = LatticeSpec(2, 4, 3)
    v = np.zeros(s.shape)
    v[s.n // 2, s.n // 2] = 1.0
    f = GridFunction(s, v)
    np.testing.assert_array_equal(localize(f, LocalizationKernel(s.R)).values, f.values)


def test_localization_kernel_profile():
    k = LocalizationKernel(2.0)
    r = np.array([0.0, 2.0, 3.0, 4.0, 5.0])
    out = k(r, np.zeros_like(r))
    assert out[0] == 1 and out[1] == 1 and out[3] == 0 and out[4] == 0
    assert 0 < out[2] < 1


def test_extend_restrict_round_trip_and_norm():
    s = LatticeSpec(2, 3, 2)
    f = _rand(s, 7)
    lat = PeriodicLattice.around(s, 4)
    E = extend(f, lat)
    np.testing.assert_array_equal(restrict(E, s).values, f.values)
    for p in (1, 2, 3.5):
        assert np.sum(np.abs(E.values) ** p) == pytest.approx(np.sum(np.abs(f.values) ** p))
    # coordinates line up
    i = np.unravel_index(np.argmax(np.abs(E.values)), lat.shape)
    j = np.unravel_index(np.argmax(np.abs(f.values)), s.shape)
    np.testing.assert_allclose([g[i] for g in lat.mesh()], [g[j] for g in s.mesh()])


def test_interpolate_evaluator():
    s = LatticeSpec(1, 2, 1)
    f = GridFunction(s, [1.0, 2.0, 3.0])
    ev = interpolate(f)
    assert ev(np.array([0.0]))[0] == pytest.approx(2.0)


def test_phi_examples():
    s = LatticeSpec(1, 1, 1)
    assert phi(s)[0] == pytest.approx(0.0)
    for form in ("difference", "sum"):
        assert weight_shift_identity_residual(s, [0.5], 0, form) < 1e-15


@pytest.mark.parametrize("d,K,R", [(1, 5, 3), (2, 4, 2), (3, 2, 1)])
def test_phi_comparable_to_x(d, K, R):
    s = LatticeSpec(d, K, R)
    x = s.coords()
    assert np.all(np.abs(phi(s)) >= 2 / math.pi * np.abs(x) - 1e-12)
    assert np.all(np.abs(phi(s)) <= np.abs(x) + 1e-12)


@pytest.mark.parametrize("d,K,R", [(1, 8, 2), (2, 4, 2), (2, 16, 1)])
def test_sum_form_shift_identity_every_frequency(d, K, R):
    s = LatticeSpec(d, K, R)
    xi = s.frequencies()
    worst = 0.0
    for m in np.ndindex(*s.shape):
        for j in range(d):
            worst = max(worst, weight_shift_identity_residual(s, [xi[k] for k in m], j, "sum"))
    assert worst < 1e-12


def test_difference_form_shift_identity_holds_only_next_to_zero_frequency():
    s = LatticeSpec(1, 4, 1)
    xi = s.frequencies()
    assert weight_shift_identity_residual(s, [xi[0]], 0, "difference") < 1e-14
    assert weight_shift_identity_residual(s, [xi[3]], 0, "difference") > 0.5


def test_hz_commutator_identity():
    lat = PeriodicLattice(2, math.pi / 8, 128)
    mesh = lat.mesh()
    f = GridFunction(lat, gaussian()(*mesh) * LocalizationKernel(2.0)(*mesh))
    assert lat.side == pytest.approx(16 * math.pi)
    D = commutator_hZ(f, 0.1)
    assert math.sqrt(lat.h**2 * np.sum(np.abs(D) ** 2)) < 1e-9
    assert np.abs(commutator_hZ(f, 0.0)).max() < 1e-12


def test_hz_commutator_detects_seam():
    lat = PeriodicLattice(1, 0.5, 32)
    x = lat.coords()
    f = GridFunction(lat, np.exp(1j * lat.frequencies()[3] * x))
    with pytest.raises(SeamContaminationError):
        commutator_hZ(f, 0.5)


def test_laplacian_commutator_is_local():
    lat = PeriodicLattice(2, 0.25, 64)
    f = _rand(lat, 8)
    k = LocalizationKernel(2.0)
    out = laplacian_commutator(f, k)
    r = np.sqrt(sum(g**2 for g in lat.mesh()))
    assert np.abs(out.values[r < 2.0 - 2 * lat.h]).max() < 1e-10
    assert np.abs(out.values[r > 4.0 + 2 * lat.h]).max() < 1e-10


@given(st.integers(1, 200))
def test_reduced_radius(R):
    assert reduced_radius(R) == max(1, R // 4)
