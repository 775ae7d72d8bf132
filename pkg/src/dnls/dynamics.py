"""Linear propagators, the propagator kernel, and split-step NLS solvers.

All three domains share one Strang step for ``i w_t + Lap w - sigma |w|^2 w = 0``::

    w <- exp(-i sigma tau/2 |w|^2) w      (exact pointwise phase rotation)
    w <- exp(i tau Lap) w                 (exact in the eigen/Fourier basis)
    w <- exp(-i sigma tau/2 |w|^2) w

``sigma = +1`` is the defocusing equation.  Both substeps preserve the L2
norm exactly, and the step is symmetric, so a run with ``T < 0`` undoes a run
with ``T > 0``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lattice import ContinuumGrid, GridFunction, LatticeSpec, PeriodicLattice
from .spectral import _forward_fast, _inverse_fast, basis_matrix, dst1, leq_mask, symbol_grid, symbol_Ph

__all__ = [
    "PropagatorPlan",
    "SolverConfig",
    "Trajectory",
    "linear_flow",
    "linear_flow_samples",
    "kernel_K",
    "kernel_matrix",
    "kernel_factor_1d",
    "kernel_sup",
    "nls_solve",
    "continuum_solve",
    "fourier_resample",
    "free_gaussian",
    "gaussian",
    "small_amplitude_rescale",
    "tail_mass_fraction",
]

log = logging.getLogger(__name__)


def _symbol(domain) -> np.ndarray:
    """Nonnegative multiplier of ``-Lap`` on ``domain`` in its natural basis."""
    if isinstance(domain, LatticeSpec):
        return symbol_grid(domain)
    k = domain.frequencies()
    grids = np.meshgrid(*([k] * domain.d), indexing="ij")
    if isinstance(domain, PeriodicLattice):
        return symbol_Ph(domain.h, np.stack(grids, axis=-1))
    return sum(g**2 for g in grids)


@dataclass
class PropagatorPlan:
    """Precomputed phases ``exp(-i t P)`` for one domain and one time ``t``."""

    domain: object
    t: float
    phase: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.phase = np.exp(-1j * self.t * _symbol(self.domain))

    def apply(self, values: np.ndarray) -> np.ndarray:
        if isinstance(self.domain, LatticeSpec):
            c = _forward_fast(values, self.domain)
            return _inverse_fast(self.phase * c, self.domain)
        return np.fft.ifftn(self.phase * np.fft.fftn(values))

    def __call__(self, f: GridFunction) -> GridFunction:
        if f.domain != self.domain:
            raise ValueError("plan built for a different domain")
        return f.with_values(self.apply(f.values))


def linear_flow(f: GridFunction, t: float) -> GridFunction:
    """``exp(i t Lap) f`` on a finite lattice, periodic lattice or continuum grid."""
    return PropagatorPlan(f.domain, t)(f)


def linear_flow_samples(f: GridFunction, times, batch: int = 32):
    """Yield ``(t, exp(i t Lap) f)`` values for each ``t`` on a finite lattice.

    The eigen-coefficients are computed once and the inverse transforms are
    done ``batch`` times at a time.
    """
    spec = f.domain
    if not isinstance(spec, LatticeSpec):
        raise TypeError("sampled flow is implemented on finite lattices")
    times = np.asarray(times, dtype=float)
    c = _forward_fast(f.values, spec)
    P = symbol_grid(spec)
    scale = spec.half_side ** (-spec.d / 2)
    for start in range(0, times.size, batch):
        ts = times[start:start + batch]
        shape = (-1,) + (1,) * spec.d
        out = np.exp(-1j * ts.reshape(shape) * P) * c
        for ax in range(1, spec.d + 1):
            out = dst1(out, axis=ax)
        out *= scale
        for t, v in zip(ts, out):
            yield float(t), v


# -- kernel ------------------------------------------------------------------------


def kernel_factor_1d(spec: LatticeSpec, t: float, N: float) -> np.ndarray:
    """One-axis factor ``(1/pi R) sum_{0 < xi <= pi N/h} phase(xi) sin sin`` as an n x n matrix."""
    M = spec.M
    k = np.arange(1, M)
    keep = k <= M * N * (1 + 1e-12)
    m = k[keep]
    S = np.sin(np.pi * np.outer(k, m) / M)
    p = (4.0 / spec.h**2) * np.sin(np.pi * m / (2 * M)) ** 2
    return (S * np.exp(-1j * t * p)) @ S.T / spec.half_side


def kernel_matrix(spec: LatticeSpec, t: float, N: float) -> np.ndarray:
    """Full kernel ``K_{t,N}(x, x')`` by direct summation over the frequency set."""
    E = basis_matrix(spec)
    keep = leq_mask(spec, N).ravel()
    P = symbol_grid(spec).ravel()[keep]
    Ek = E[:, keep]
    return (Ek * np.exp(-1j * t * P)) @ Ek.T


def kernel_K(spec: LatticeSpec, t: float, N: float, x, xp, method: str = "factorized") -> complex:
    """``K_{t,N}(x, x') = sum_{max xi_j <= pi N/h} exp(-i t P_h(xi)) e(x, xi) e(x', xi)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    L = spec.half_side
    for p in (x, xp):
        if p.shape != (spec.d,) or np.any(np.abs(p) > L * (1 + 1e-12)):
            raise ValueError(f"point {p} is outside the lattice")
    # full-grid positions; boundary points give a zero row
    idx = np.rint((x + L) / spec.h).astype(int)
    idxp = np.rint((xp + L) / spec.h).astype(int)
    if np.any((idx == 0) | (idx == spec.M)) or np.any((idxp == 0) | (idxp == spec.M)):
        return 0j
    if method == "factorized":
        k1 = kernel_factor_1d(spec, t, N)
        return complex(np.prod([k1[a - 1, b - 1] for a, b in zip(idx, idxp)]))
    if method == "direct":
        Kmat = kernel_matrix(spec, t, N)
        i = spec.linear_index(idx - 1)
        ip = spec.linear_index(idxp - 1)
        return complex(Kmat[i, ip])
    raise ValueError(f"unknown method {method!r}")


def kernel_sup(spec: LatticeSpec, t: float, N: float, method: str = "factorized") -> float:
    """``sup_{x, x'} |K_{t,N}(x, x')|``; the factorised form is ``(sup |k_1|)^d``."""
    if method == "factorized":
        return float(np.abs(kernel_factor_1d(spec, t, N)).max() ** spec.d)
    return float(np.abs(kernel_matrix(spec, t, N)).max())


# -- nonlinear solver --------------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Strang splitting parameters.

    ``T`` may be negative (backward run).  ``snapshots`` lists the times to
    record besides 0 and ``T``; they are rounded to the step grid.
    ``sigma=+1`` is defocusing, ``-1`` focusing.
    """

    tau: float = 1e-3
    T: float = 1.0
    sigma: float = 1.0
    snapshots: tuple[float, ...] = ()
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if self.tau > 0.5:
            raise ValueError(f"time step {self.tau} exceeds 0.5")
        steps = abs(self.T) / self.tau
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"tau={self.tau} does not divide T={self.T}")

    @property
    def n_steps(self) -> int:
        return int(round(abs(self.T) / self.tau))


@dataclass
class Trajectory:
    times: np.ndarray
    states: list[GridFunction]
    diagnostics: dict = field(default_factory=dict)

    @property
    def domain(self):
        return self.states[0].domain

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])

    @property
    def final(self) -> GridFunction:
        return self.states[-1]


def tail_mass_fraction(f: GridFunction) -> float:
    """Fraction of the L2 mass with some coordinate beyond half the box half-width."""
    dom = f.domain
    x = dom.coords()
    half = (x.max() - x.min()) / 4
    far = np.zeros(dom.shape, dtype=bool)
    for g in dom.mesh():
        far |= np.abs(g) > half
    tot = np.sum(np.abs(f.values) ** 2)
    return float(np.sum(np.abs(f.values[far]) ** 2) / tot) if tot > 0 else 0.0


def _strang(w0: GridFunction, cfg: SolverConfig, record: set[int]) -> Trajectory:
    dom = w0.domain
    n = cfg.n_steps
    tau = math.copysign(cfg.tau, cfg.T) if cfg.T != 0 else cfg.tau
    half = 0.5 * tau * cfg.sigma
    plan = PropagatorPlan(dom, tau)
    w = w0.values.astype(complex)
    times, states = [0.0], [w0.copy()]
    for step in range(1, n + 1):
        w = w * np.exp(-1j * half * np.abs(w) ** 2)
        w = plan.apply(w)
        w = w * np.exp(-1j * half * np.abs(w) ** 2)
        if step in record or step == n:
            if not np.all(np.isfinite(w)):
                raise FloatingPointError(
                    f"non-finite values after step {step} (t={step * tau:g}); reduce tau"
                )
            times.append(step * tau)
            states.append(GridFunction(dom, w.copy()))
    return Trajectory(np.array(times), states)


def nls_solve(w0: GridFunction, cfg: SolverConfig) -> Trajectory:
    """Integrate the lattice NLS from ``w0`` with Strang splitting.

    On a periodic box (the stand-in for ``hZ^d``) the fraction of mass beyond
    half the box is recorded per snapshot in ``diagnostics["tail_mass"]``.
    """
    if isinstance(w0.domain, ContinuumGrid):
        raise TypeError("use continuum_solve for continuum grids")
    record = set()
    for s in cfg.snapshots:
        record.add(int(round(abs(s) / cfg.tau)))
    if cfg.snapshot_every:
        record.update(range(cfg.snapshot_every, cfg.n_steps + 1, cfg.snapshot_every))
    traj = _strang(w0, cfg, record)
    if isinstance(w0.domain, PeriodicLattice):
        tails = [tail_mass_fraction(s) for s in traj.states]
        traj.diagnostics["tail_mass"] = tails
        if max(tails) > 1e-8:
            log.warning("periodic box tail mass %.3g exceeds 1e-8", max(tails))
    return traj


def gaussian(sigma: float = 1.0, amplitude: float = 1.0, centre=None) -> Callable[..., np.ndarray]:
    """``amplitude * exp(-|x - centre|^2 / (2 sigma^2))`` as a callable of coordinates."""

    def u0(*coords):
        c = centre if centre is not None else [0.0] * len(coords)
        r2 = sum((np.asarray(x) - cj) ** 2 for x, cj in zip(coords, c))
        return amplitude * np.exp(-r2 / (2 * sigma**2)) + 0j

    return u0


def free_gaussian(sigma: float, amplitude: float, t: float) -> Callable[..., np.ndarray]:
    """Closed-form ``exp(i t Lap)`` of the centred Gaussian on ``R^d``."""
    z = 1 + 2j * t / sigma**2

    def u(*coords):
        r2 = sum(np.asarray(x) ** 2 for x in coords)
        return amplitude * z ** (-len(coords) / 2) * np.exp(-r2 / (2 * sigma**2 * z))

    return u


def continuum_solve(
    u0, T: float, grid: ContinuumGrid, tau_ref: float = 1e-3, sigma: float = 1.0,
    nonlinear: bool = True, tail_tol: float = 1e-10,
) -> GridFunction:
    """Fourier pseudospectral Strang solution of the NLS on ``R^d`` at time ``T``.

    ``u0`` is a callable of coordinates or a :class:`GridFunction` on ``grid``.
    Raises ``ValueError`` if ``u0`` carries more than ``tail_tol`` of its mass
    beyond half the box.
    """
    if callable(u0):
        u0 = GridFunction(grid, u0(*grid.mesh()))
    if u0.domain != grid:
        raise ValueError("initial datum is not on the reference grid")
    if tail_mass_fraction(u0) > tail_tol:
        raise ValueError("initial datum does not decay inside the reference box")
    cfg = SolverConfig(tau=tau_ref, T=T, sigma=sigma if nonlinear else 0.0)
    return _strang(u0, cfg, set()).final


def fourier_resample(g: GridFunction, target: ContinuumGrid) -> GridFunction:
    """Trigonometric interpolation of ``g`` onto a finer (or shifted) grid of the same box."""
    src = g.domain
    if not isinstance(src, ContinuumGrid) or target.d != src.d or not math.isclose(target.L, src.L):
        raise ValueError("resampling needs continuum grids on the same box")
    if target.n < src.n:
        raise ValueError("target grid must not be coarser")
    n, m = src.n, target.n
    k = src.frequencies()
    shift = target.offset * target.h_ref - src.offset * src.h_ref
    spec = np.fft.fftn(g.values)
    ph = np.exp(1j * k * shift)
    for ax in range(src.d):
        shape = [1] * src.d
        shape[ax] = -1
        spec = spec * ph.reshape(shape)
    # zero-pad each axis in FFT order
    pos = (n + 1) // 2
    for ax in range(src.d):
        spec = np.moveaxis(spec, ax, -1)
        big = np.zeros(spec.shape[:-1] + (m,), dtype=complex)
        big[..., :pos] = spec[..., :pos]
        big[..., m - (n - pos):] = spec[..., pos:]
        spec = np.moveaxis(big, -1, ax)
    return GridFunction(target, np.fft.ifftn(spec) * (m / n) ** src.d)


def small_amplitude_rescale(traj: Trajectory, direction: str = "to_unit") -> Trajectory:
    """Map ``w(t, x)`` on spacing h to ``h w(h^2 t, h x)`` on the unit lattice, or back."""
    spec = traj.domain
    if not isinstance(spec, LatticeSpec):
        raise TypeError("rescaling is defined on finite lattices")
    h = math.pi / spec.K
    if direction == "to_unit":
        if spec.unit_spacing:
            raise ValueError("trajectory is already on the unit lattice")
        new, amp, tscale = spec.rescaled(), h, 1.0 / h**2
    elif direction == "from_unit":
        if not spec.unit_spacing:
            raise ValueError("trajectory is not on the unit lattice")
        new = LatticeSpec(spec.d, spec.K, spec.R, spec.alpha)
        amp, tscale = 1.0 / h, h**2
    else:
        raise ValueError(f"unknown direction {direction!r}")
    states = [GridFunction(new, s.values * amp) for s in traj.states]
    return Trajectory(traj.times * tscale, states, dict(traj.diagnostics))
