"""Eigenbasis of the zero-boundary lattice Laplacian and Fourier tools.

On the finite lattice the eigenfunctions are products of sines,

    e(x, xi) = (pi R)^(-d/2) prod_j sin((x_j + pi R) xi_j),   xi_j = m_j / (2R),

with eigenvalue ``P_h(xi) = (4/h^2) sum_j sin^2(h xi_j / 2)``.  Writing
``x_j + pi R = h n_j`` the argument becomes ``pi n_j m_j / (2KR)``, so the
expansion is a separable type-I discrete sine transform.  The inner product is
``<f, g> = h^d sum f conj(g)``, under which the basis is orthonormal.

The periodic side uses the usual DFT with the ``h^d`` normalisation of the
Fourier transform on ``hZ^d``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import GridFunction, LatticeSpec, PeriodicLattice

__all__ = [
    "SpectralCoeffs",
    "eigenfunction",
    "basis_matrix_1d",
    "basis_matrix",
    "symbol_Ph",
    "symbol_grid",
    "dst1",
    "forward",
    "inverse",
    "n_star",
    "dyadic_levels",
    "band_mask",
    "leq_mask",
    "project_band",
    "project_leq",
    "periodic_transform",
    "inverse_periodic_transform",
    "MultiplierSymbol",
    "smooth_step",
    "psi_tilde",
    "lp_pieces",
    "apply_multiplier",
]


@dataclass
class SpectralCoeffs:
    """Coefficients ``<f, e(., xi)>`` indexed like the interior points."""

    spec: LatticeSpec
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex).reshape(self.spec.shape)


def _require_lattice(f: GridFunction) -> LatticeSpec:
    if not isinstance(f.domain, LatticeSpec):
        raise TypeError(f"expected a finite-lattice function, got {type(f.domain).__name__}")
    return f.domain


def _require_periodic(f: GridFunction) -> PeriodicLattice:
    if not isinstance(f.domain, PeriodicLattice):
        raise TypeError(f"expected a periodic-lattice function, got {type(f.domain).__name__}")
    return f.domain


def eigenfunction(spec: LatticeSpec, x, xi) -> float:
    """Value of ``e(x, xi)``; zero for frequencies with a component at 0 or pi/h."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if x.shape[-1] != spec.d or xi.shape[-1] != spec.d:
        raise ValueError("x and xi need d components")
    if np.any(np.abs(x) > spec.half_side * (1 + 1e-12)):
        raise ValueError("x lies outside the lattice")
    L = spec.half_side
    val = np.prod(np.sin((x + L) * xi), axis=-1) / L ** (spec.d / 2)
    return float(val) if np.ndim(val) == 0 else val


def basis_matrix_1d(spec: LatticeSpec) -> np.ndarray:
    """``B[i, m] = e_1d(x_i, xi_m)``: rows are interior points, columns frequencies."""
    M = spec.M
    k = np.arange(1, M)
    return np.sin(np.pi * np.outer(k, k) / M) / math.sqrt(spec.half_side)


def basis_matrix(spec: LatticeSpec) -> np.ndarray:
    """Full ``size x size`` matrix of ``e(x, xi)`` from explicit evaluation.

    Intended for small lattices only; this is the brute-force oracle.
    """
    xs = np.stack([g.ravel() for g in spec.mesh()], axis=-1)
    xi1 = spec.frequencies()
    xis = np.stack(
        [g.ravel() for g in np.meshgrid(*([xi1] * spec.d), indexing="ij")], axis=-1
    )
    L = spec.half_side
    out = np.ones((xs.shape[0], xis.shape[0]))
    for j in range(spec.d):
        out *= np.sin(np.outer(xs[:, j] + L, xis[:, j]))
    return out / L ** (spec.d / 2)


def symbol_Ph(h: float, xi) -> np.ndarray | float:
    """``(4/h^2) sum_j sin^2(h xi_j / 2)`` over the last axis of ``xi``."""
    xi = np.asarray(xi, dtype=float)
    val = (4.0 / h**2) * np.sum(np.sin(h * xi / 2) ** 2, axis=-1)
    return float(val) if np.ndim(val) == 0 else val


def symbol_grid(spec: LatticeSpec) -> np.ndarray:
    """``P_h`` on the frequency set, shaped like the interior."""
    p1 = (4.0 / spec.h**2) * np.sin(spec.h * spec.frequencies() / 2) ** 2
    out = np.zeros(spec.shape)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = -1
        out = out + p1.reshape(shape)
    return out


def dst1(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalised type-I sine transform ``sum_n a_n sin(pi n m / M)`` along ``axis``.

    ``M = len + 1``.  Computed from the FFT of the odd extension of length
    ``2M``; works for complex input.
    """
    a = np.moveaxis(np.asarray(a), axis, -1)
    n = a.shape[-1]
    M = n + 1
    ext = np.zeros(a.shape[:-1] + (2 * M,), dtype=complex)
    ext[..., 1:M] = a
    ext[..., M + 1 :] = -a[..., ::-1]
    G = np.fft.fft(ext, axis=-1)
    # G_m = -2i sum_n a_n sin(pi n m / M)
    out = 0.5j * G[..., 1:M]
    return np.moveaxis(out, -1, axis)


def _forward_fast(values: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    out = values.astype(complex)
    for ax in range(spec.d):
        out = dst1(out, axis=ax)
    return out * (spec.h / math.sqrt(spec.half_side)) ** spec.d


def _inverse_fast(coeffs: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    out = coeffs.astype(complex)
    for ax in range(spec.d):
        out = dst1(out, axis=ax)
    return out / spec.half_side ** (spec.d / 2)


def forward(f: GridFunction, method: str = "fast") -> SpectralCoeffs:
    """Coefficients ``h^d sum_x f(x) e(x, xi)`` for every frequency.

    ``method="direct"`` forms the full basis matrix and is O(size^2); it is
    kept as an independent check of the FFT path.
    """
    spec = _require_lattice(f)
    if method == "fast":
        c = _forward_fast(f.values, spec)
    elif method == "direct":
        E = basis_matrix(spec)
        c = spec.h**spec.d * (E.T @ f.values.ravel())
    else:
        raise ValueError(f"unknown method {method!r}")
    return SpectralCoeffs(spec, c)


def inverse(c: SpectralCoeffs, method: str = "fast") -> GridFunction:
    spec = c.spec
    if method == "fast":
        v = _inverse_fast(c.coeffs, spec)
    elif method == "direct":
        v = basis_matrix(spec) @ c.coeffs.ravel()
    else:
        raise ValueError(f"unknown method {method!r}")
    return GridFunction(spec, v)


# -- dyadic decomposition on the finite lattice ---------------------------------


def n_star(spec: LatticeSpec) -> float:
    """Lowest dyadic level ``2^(ceil(log2(h/pi)) - 1)`` (``h/pi = 1/K``)."""
    return 2.0 ** (math.ceil(math.log2(1.0 / spec.K) - 1e-12) - 1)


def dyadic_levels(spec: LatticeSpec) -> list[float]:
    """``[N_*, 2 N_*, ..., 1]``."""
    levels, N = [], n_star(spec)
    while N <= 1.0 + 1e-12:
        levels.append(N)
        N *= 2
    return levels


def _max_freq(spec: LatticeSpec) -> np.ndarray:
    xi = spec.frequencies()
    out = np.zeros(spec.shape)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = -1
        out = np.maximum(out, xi.reshape(shape))
    return out


def _is_dyadic(N: float) -> bool:
    e = math.log2(N)
    return abs(e - round(e)) < 1e-9


def leq_mask(spec: LatticeSpec, N: float) -> np.ndarray:
    """Frequencies with ``max_j xi_j <= pi N / h``."""
    # m / (2R) <= K N  <=>  m <= 2 K R N, compared in index space to dodge rounding
    cutoff = spec.M * N * (1 + 1e-12)
    m = np.arange(1, spec.M)
    mmax = np.zeros(spec.shape)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = -1
        mmax = np.maximum(mmax, m.reshape(shape))
    return mmax <= cutoff


def band_mask(spec: LatticeSpec, N: float) -> np.ndarray:
    """Shell ``pi N/(2h) < max xi_j <= pi N/h``; at ``N = N_*`` the whole low ball.

    The lowest level collects every frequency below the next shell, so the
    bands over ``dyadic_levels(spec)`` partition the frequency set.
    """
    ns = n_star(spec)
    if not _is_dyadic(N) or N < ns * (1 - 1e-12) or N > 1 + 1e-12:
        raise ValueError(f"band level must be dyadic in [{ns}, 1], got {N}")
    if abs(N - ns) < 1e-12 * ns:
        return leq_mask(spec, N)
    return leq_mask(spec, N) & ~leq_mask(spec, N / 2)


def project_band(f: GridFunction, N: float) -> GridFunction:
    spec = _require_lattice(f)
    c = forward(f).coeffs * band_mask(spec, N)
    return inverse(SpectralCoeffs(spec, c))


def project_leq(f: GridFunction, N: float) -> GridFunction:
    spec = _require_lattice(f)
    c = forward(f).coeffs * leq_mask(spec, N)
    return inverse(SpectralCoeffs(spec, c))


# -- periodic lattice --------------------------------------------------------------


def _centre_phase(lat: PeriodicLattice) -> np.ndarray:
    # x_k = h (k - n//2): the shift contributes exp(i h (n//2) xi) per axis
    xi = lat.frequencies()
    ph1 = np.exp(1j * lat.h * (lat.n // 2) * xi)
    out = np.ones(lat.shape, dtype=complex)
    for j in range(lat.d):
        shape = [1] * lat.d
        shape[j] = -1
        out = out * ph1.reshape(shape)
    return out


def periodic_transform(f: GridFunction) -> np.ndarray:
    """``h^d sum_x exp(-i x.xi) f(x)`` on the discrete frequency grid (FFT order)."""
    lat = _require_periodic(f)
    return lat.h**lat.d * np.fft.fftn(f.values) * _centre_phase(lat)


def inverse_periodic_transform(fhat: np.ndarray, lat: PeriodicLattice) -> GridFunction:
    """Inverse of :func:`periodic_transform` (the Riemann sum of the inversion integral)."""
    vals = np.fft.ifftn(fhat / _centre_phase(lat)) / lat.h**lat.d
    return GridFunction(lat, vals)


def smooth_step(s) -> np.ndarray:
    """C-infinity transition equal to 1 for ``s <= 0`` and 0 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)

    def g(t):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    a, b = g(1.0 - s), g(s)
    return a / (a + b)


def psi_tilde(xi) -> np.ndarray:
    """Product bump: 1 on ``[-1, 1]^d``, 0 off ``[-2, 2]^d``; last axis is the vector index."""
    xi = np.asarray(xi, dtype=float)
    return np.prod(smooth_step(np.abs(xi) - 1.0), axis=-1)


@dataclass(frozen=True)
class MultiplierSymbol:
    """A function of the frequency vector, evaluated on the periodic frequency grid.

    ``func`` takes an array whose last axis holds the d frequency components
    and returns the symbol values.
    """

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        return self.func(xi)

    def on_grid(self, lat: PeriodicLattice) -> np.ndarray:
        k = lat.frequencies()
        grids = np.meshgrid(*([k] * lat.d), indexing="ij")
        return np.asarray(self.func(np.stack(grids, axis=-1)))

    @classmethod
    def laplacian(cls, h: float) -> "MultiplierSymbol":
        return cls(lambda xi: symbol_Ph(h, xi), "P_h")

    @classmethod
    def propagator(cls, h: float, t: float) -> "MultiplierSymbol":
        return cls(lambda xi: np.exp(-1j * t * symbol_Ph(h, xi)), f"exp(-i{t}P_h)")

    @classmethod
    def cutoff(cls, h: float, N: float, residual: bool = False) -> "MultiplierSymbol":
        """``psi(h xi / (pi N))``; with ``residual=True`` the low-pass ``psi_tilde`` instead."""

        def func(xi):
            s = h * np.asarray(xi) / (math.pi * N)
            if residual:
                return psi_tilde(s)
            return psi_tilde(s) - psi_tilde(2 * s)

        return cls(func, f"psi_{N}")

    @classmethod
    def grad_tilde(cls, h: float, j: int) -> "MultiplierSymbol":
        """j-th component of ``(i/2) grad P_h``, i.e. ``(i/h) sin(h xi_j)``."""
        return cls(lambda xi: 1j * np.sin(h * np.asarray(xi)[..., j]) / h, f"grad~_{j}")


def lp_pieces(lat: PeriodicLattice) -> list[tuple[float, MultiplierSymbol]]:
    """Smooth Littlewood-Paley pieces summing to one on the frequency grid.

    Shells ``psi_N`` for dyadic ``N_low < N <= 1`` plus the low-pass residual
    ``psi_tilde(h xi / (pi N_low))`` at ``N_low``, chosen below the smallest
    nonzero grid frequency.
    """
    n_low = 2.0 ** math.floor(math.log2(1.0 / lat.n))
    pieces = [(n_low, MultiplierSymbol.cutoff(lat.h, n_low, residual=True))]
    N = 2 * n_low
    while N <= 1.0 + 1e-12:
        pieces.append((N, MultiplierSymbol.cutoff(lat.h, N)))
        N *= 2
    return pieces


def apply_multiplier(f: GridFunction, symbol: MultiplierSymbol | np.ndarray) -> GridFunction:
    """Fourier multiplier on the periodic lattice: transform, multiply, invert."""
    lat = _require_periodic(f)
    m = symbol.on_grid(lat) if isinstance(symbol, MultiplierSymbol) else np.asarray(symbol)
    return GridFunction(lat, np.fft.ifftn(m * np.fft.fftn(f.values)))
