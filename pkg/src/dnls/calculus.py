"""Difference operators, sampling/extension maps, the weight phi and commutators.

Vector-valued results (gradients, commutator defects) are plain ndarrays with
the component index first.  Gradients on the finite lattice live on the full
grid ``(2KR + 1)^d``: the j-th right difference is kept on every edge
``x -> x + h e_j`` that touches the interior, which includes the edges leaving
the left boundary face.  With that support ``||grad f||^2 = <-Lap f, f>`` holds
exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lattice import ContinuumGrid, GridFunction, LatticeSpec, PeriodicLattice, interpolate_at
from .spectral import MultiplierSymbol, apply_multiplier, smooth_step

__all__ = [
    "SeamContaminationError",
    "laplacian_omega",
    "laplacian_h",
    "gradient_right",
    "gradient_left",
    "divergence_left",
    "gradient_adjoint",
    "gradient_omega",
    "gradient_omega_adjoint",
    "discretize",
    "LocalizationKernel",
    "localize",
    "extend",
    "restrict",
    "interpolate",
    "phi",
    "weight_multiply",
    "weight_shift_identity_residual",
    "commutator_hZ",
    "laplacian_commutator",
    "reduced_radius",
]


class SeamContaminationError(ValueError):
    """Raised when data on a periodic box come too close to the wrap-around seam."""


def _lattice(f: GridFunction) -> LatticeSpec:
    if not isinstance(f.domain, LatticeSpec):
        raise TypeError("expected a finite-lattice function")
    return f.domain


def _periodic(f: GridFunction) -> PeriodicLattice:
    if not isinstance(f.domain, PeriodicLattice):
        raise TypeError("expected a periodic-lattice function")
    return f.domain


def laplacian_omega(f: GridFunction) -> GridFunction:
    """Second difference with implicit zero boundary (interior values only)."""
    spec = _lattice(f)
    g = spec.pad(f.values)
    inner = (slice(1, -1),) * spec.d
    out = -2 * spec.d * g[inner]
    for j in range(spec.d):
        up = list(inner)
        dn = list(inner)
        up[j] = slice(2, None)
        dn[j] = slice(None, -2)
        out = out + g[tuple(up)] + g[tuple(dn)]
    return GridFunction(spec, out / spec.h**2)


def laplacian_h(f: GridFunction) -> GridFunction:
    lat = _periodic(f)
    v = f.values
    out = -2 * lat.d * v
    for j in range(lat.d):
        out = out + np.roll(v, 1, axis=j) + np.roll(v, -1, axis=j)
    return GridFunction(lat, out / lat.h**2)


def gradient_right(f: GridFunction) -> np.ndarray:
    lat = _periodic(f)
    return np.stack([(np.roll(f.values, -1, axis=j) - f.values) / lat.h for j in range(lat.d)])


def gradient_left(f: GridFunction) -> np.ndarray:
    lat = _periodic(f)
    return np.stack([(f.values - np.roll(f.values, 1, axis=j)) / lat.h for j in range(lat.d)])


def divergence_left(g: np.ndarray, lat: PeriodicLattice) -> GridFunction:
    """``sum_j (g_j(x) - g_j(x - h e_j)) / h``; ``divergence_left(gradient_right(f)) = Lap f``."""
    out = sum((g[j] - np.roll(g[j], 1, axis=j)) / lat.h for j in range(lat.d))
    return GridFunction(lat, out)


def gradient_adjoint(g: np.ndarray, lat: PeriodicLattice) -> GridFunction:
    """L2 adjoint of :func:`gradient_right`."""
    return divergence_left(g, lat) * -1.0


def _edge_mask(spec: LatticeSpec, j: int) -> np.ndarray:
    # edges x -> x + h e_j with x_j < pi R and all other coordinates interior
    mask = np.zeros(spec.full_shape, dtype=bool)
    idx = [slice(1, -1)] * spec.d
    idx[j] = slice(0, -1)
    mask[tuple(idx)] = True
    return mask


def gradient_omega(f: GridFunction) -> np.ndarray:
    """Right differences on the full grid, shape ``(d, 2KR+1, ...)``."""
    spec = _lattice(f)
    g = spec.pad(f.values)
    out = np.zeros((spec.d,) + spec.full_shape, dtype=complex)
    for j in range(spec.d):
        diff = (np.roll(g, -1, axis=j) - g) / spec.h
        out[j] = np.where(_edge_mask(spec, j), diff, 0.0)
    return out


def gradient_omega_adjoint(g: np.ndarray, spec: LatticeSpec) -> GridFunction:
    """Adjoint of :func:`gradient_omega` (fields off the edge set are ignored)."""
    inner = (slice(1, -1),) * spec.d
    out = np.zeros(spec.shape, dtype=complex)
    for j in range(spec.d):
        gj = np.where(_edge_mask(spec, j), g[j], 0.0)
        back = np.roll(gj, 1, axis=j)
        out -= (gj[inner] - back[inner]) / spec.h
    return GridFunction(spec, out)


# Gauss-Legendre order 4 on [0, 1]
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def discretize(
    u0: Callable[..., np.ndarray], target: LatticeSpec | PeriodicLattice
) -> GridFunction:
    """Cell averages ``h^-d int_{[0,h)^d} u0(x + y) dy`` at every node of ``target``.

    ``u0`` is called with d coordinate arrays.  Each cell uses a tensor
    Gauss-Legendre rule with 4 nodes per axis (exact for cubics).
    """
    h, d = target.h, target.d
    x = target.coords()
    out = np.zeros(target.shape, dtype=complex)
    for nodes in np.ndindex(*([4] * d)):
        w = np.prod([_GL_WEIGHTS[k] for k in nodes])
        pts = np.meshgrid(*[x + h * _GL_NODES[k] for k in nodes], indexing="ij")
        out += w * np.asarray(u0(*pts))
    return GridFunction(target, out)


@dataclass(frozen=True)
class LocalizationKernel:
    """Radial cutoff ``eta_R(x) = eta(|x| / R)``: 1 for ``|x| <= R``, 0 for ``|x| >= 2R``."""

    R: float

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        r = np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in coords))
        return smooth_step(r / self.R - 1.0)

    def on(self, domain) -> np.ndarray:
        return self(*domain.mesh())


def localize(f: GridFunction, kernel: LocalizationKernel) -> GridFunction:
    return f.with_values(f.values * kernel.on(f.domain))


def extend(f: GridFunction, target: PeriodicLattice) -> GridFunction:
    """Zero extension of a finite-lattice function onto a periodic box."""
    spec = _lattice(f)
    if target.d != spec.d or not math.isclose(target.h, spec.h, rel_tol=1e-12):
        raise ValueError("extension target must share dimension and spacing")
    lo = target.n // 2 - (spec.K * spec.R - 1)
    if lo < 1 or lo + spec.n >= target.n:
        raise ValueError("extension target is smaller than the source lattice")
    out = np.zeros(target.shape, dtype=complex)
    out[(slice(lo, lo + spec.n),) * spec.d] = f.values
    return GridFunction(target, out)


def restrict(g: GridFunction, spec: LatticeSpec) -> GridFunction:
    """Interior values of a periodic-box function on ``spec`` (inverse of :func:`extend`)."""
    lat = _periodic(g)
    lo = lat.n // 2 - (spec.K * spec.R - 1)
    if lo < 0 or lo + spec.n > lat.n:
        raise ValueError("lattice does not fit in the periodic box")
    return GridFunction(spec, g.values[(slice(lo, lo + spec.n),) * spec.d])


def interpolate(f: GridFunction, kind: str = "cellwise") -> Callable[..., np.ndarray]:
    """Evaluator ``(x_1, ..., x_d) -> (l_h E f)(x)``."""
    _lattice(f)
    return lambda *coords: interpolate_at(f, list(coords), kind)


def _rho(spec: LatticeSpec) -> float:
    # R on the h-lattice; KR on the unit lattice
    return spec.half_side / math.pi


def phi(spec: LatticeSpec) -> np.ndarray:
    """Per-axis weight ``2R sin(x / (2R))`` at the interior coordinates."""
    rho = _rho(spec)
    return 2 * rho * np.sin(spec.coords() / (2 * rho))


def weight_multiply(f: GridFunction, j: int) -> GridFunction:
    spec = _lattice(f)
    shape = [1] * spec.d
    shape[j] = -1
    return f.with_values(f.values * phi(spec).reshape(shape))


def _e_on_grid(spec: LatticeSpec, m) -> np.ndarray:
    """``e(., xi)`` on the interior for integer frequency index ``m`` (zero at 0 or M)."""
    k = np.arange(1, spec.M)
    out = np.ones(spec.shape)
    for j, mj in enumerate(m):
        if mj <= 0 or mj >= spec.M:
            return np.zeros(spec.shape)
        shape = [1] * spec.d
        shape[j] = -1
        out = out * np.sin(np.pi * k * mj / spec.M).reshape(shape)
    return out / spec.half_side ** (spec.d / 2)


def _freq_index(spec: LatticeSpec, xi) -> np.ndarray:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    m = xi * spec.M * spec.h / math.pi
    mi = np.rint(m).astype(int)
    if xi.shape != (spec.d,) or np.any(np.abs(m - mi) > 1e-9) or np.any(mi < 1) or np.any(mi >= spec.M):
        raise ValueError(f"{xi} is not in the frequency set")
    return mi


def weight_shift_identity_residual(spec: LatticeSpec, xi, j: int, form: str = "difference") -> float:
    """Sup-norm residual of a frequency-shift formula for ``phi_j e(., xi)``.

    ``form="difference"`` tests ``phi_j e(xi) = R [e(xi - e_j/2R) - e(xi + e_j/2R)]``.
    ``form="sum"`` tests ``phi_j e(xi) = -R [e(xi - e_j/2R) + e(xi + e_j/2R)]``,
    which is what the product-to-sum rule gives for the sine eigenfunctions
    (``sin(x/2R) = -cos((x + pi R)/2R)``).  The two agree only when
    ``xi - e_j/2R`` lies on the boundary.
    """
    if form not in ("difference", "sum"):
        raise ValueError(f"unknown form {form!r}")
    m = _freq_index(spec, xi)
    shape = [1] * spec.d
    shape[j] = -1
    lhs = phi(spec).reshape(shape) * _e_on_grid(spec, m)
    lo, hi = m.copy(), m.copy()
    lo[j] -= 1
    hi[j] += 1
    e_lo, e_hi = _e_on_grid(spec, lo), _e_on_grid(spec, hi)
    if form == "difference":
        rhs = _rho(spec) * (e_lo - e_hi)
    else:
        rhs = -_rho(spec) * (e_lo + e_hi)
    return float(np.max(np.abs(lhs - rhs)))


def _check_seam(f: GridFunction, margin: float, tol: float = 1e-14):
    lat = f.domain
    amp = np.abs(f.values)
    big = amp > tol * amp.max() if amp.max() > 0 else np.zeros_like(amp, dtype=bool)
    if not big.any():
        return
    half = lat.side / 2
    for x in lat.mesh():
        if np.any(np.abs(x[big]) > half - margin):
            raise SeamContaminationError(
                f"data reach within {margin} of the periodic seam; the defect would be "
                "dominated by periodisation"
            )


def commutator_hZ(f: GridFunction, t: float, seam_margin: float = 4.0) -> np.ndarray:
    """Defect ``[x, exp(it Lap_h)] f + 2it grad~ exp(it Lap_h) f``, shape ``(d, ...)``.

    ``grad~`` is the multiplier with symbol ``(i/2) grad P_h``.  The defect
    vanishes on ``hZ^d``; on a periodic box it measures periodisation only.
    Raises :class:`SeamContaminationError` if ``f`` or its evolution reaches
    within ``seam_margin`` of the box edge.
    """
    lat = _periodic(f)
    _check_seam(f, seam_margin)
    U = MultiplierSymbol.propagator(lat.h, t)
    uf = apply_multiplier(f, U)
    # the evolved data must also stay clear of the seam
    _check_seam(uf, seam_margin, tol=1e-12)
    out = []
    for j, xj in enumerate(lat.mesh()):
        comm = xj * uf.values - apply_multiplier(f.with_values(xj * f.values), U).values
        grad = apply_multiplier(uf, MultiplierSymbol.grad_tilde(lat.h, j)).values
        out.append(comm + 2j * t * grad)
    return np.stack(out)


def laplacian_commutator(v: GridFunction, kernel: LocalizationKernel) -> GridFunction:
    """``[Lap_h, eta] v = Lap_h(eta v) - eta Lap_h v`` on a periodic box."""
    _periodic(v)
    eta = kernel.on(v.domain)
    return laplacian_h(v.with_values(eta * v.values)) - v.with_values(eta * laplacian_h(v).values)


def reduced_radius(R: int) -> int:
    """Inner cutoff radius ``R / 4`` rounded down, at least 1."""
    return max(1, R // 4)
