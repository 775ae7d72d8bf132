"""Norms, conserved quantities, space-time norms and exponent bookkeeping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .calculus import gradient_omega, gradient_right, phi
from .lattice import ContinuumGrid, GridFunction, LatticeSpec, PeriodicLattice
from .spectral import band_mask, dyadic_levels, forward, periodic_transform, symbol_grid, symbol_Ph

__all__ = [
    "lp_norm",
    "hs_norm",
    "hs_norm_bands",
    "h1_norm",
    "h11_norm",
    "weighted_norm",
    "mass",
    "energy",
    "strichartz_norm",
    "AdmissiblePair",
    "admissible_pairs",
    "loss_exponent",
    "linfty_exponent",
    "bernstein_ratio",
    "japanese",
]

INF = math.inf


def _weight(f: GridFunction) -> float:
    return f.weight


def lp_norm(f: GridFunction, p: float) -> float:
    """``(h^d sum |f|^p)^(1/p)``, or the sup for ``p = inf``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    return float((_weight(f) * np.sum(a**p)) ** (1.0 / p))


def _fourier_weights(f: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Squared coefficients and ``-Lap`` symbol, normalised so that sum(c2) = ||f||^2."""
    dom = f.domain
    if isinstance(dom, LatticeSpec):
        return np.abs(forward(f).coeffs) ** 2, symbol_grid(dom)
    if isinstance(dom, PeriodicLattice):
        fhat = periodic_transform(f)
        k = dom.frequencies()
        grids = np.meshgrid(*([k] * dom.d), indexing="ij")
        P = symbol_Ph(dom.h, np.stack(grids, axis=-1))
        # (2 pi)^-d times the Riemann sum over the torus
        c2 = np.abs(fhat) ** 2 / (dom.n * dom.h) ** dom.d
        return c2, P
    if isinstance(dom, ContinuumGrid):
        k = dom.frequencies()
        grids = np.meshgrid(*([k] * dom.d), indexing="ij")
        c2 = np.abs(np.fft.fftn(f.values)) ** 2 * dom.cell_volume / dom.size
        return c2, sum(g**2 for g in grids)
    raise TypeError(f"unsupported domain {type(dom).__name__}")


def hs_norm(f: GridFunction, s: float) -> float:
    """``||(1 - Lap)^(s/2) f||_2`` through the eigen/Fourier expansion."""
    if not -2 <= s <= 2:
        raise ValueError("s must lie in [-2, 2]")
    c2, P = _fourier_weights(f)
    return float(math.sqrt(np.sum((1 + P) ** s * c2)))


def hs_norm_bands(f: GridFunction, s: float) -> float:
    """Dyadic form ``(sum_N (1 + (N/h)^2)^s ||P_N f||^2)^(1/2)`` on the finite lattice."""
    spec = f.domain
    if not isinstance(spec, LatticeSpec):
        raise TypeError("band form is defined on the finite lattice")
    c2 = np.abs(forward(f).coeffs) ** 2
    total = 0.0
    for N in dyadic_levels(spec):
        total += (1 + (N / spec.h) ** 2) ** s * np.sum(c2[band_mask(spec, N)])
    return float(math.sqrt(total))


def h1_norm(f: GridFunction) -> float:
    return hs_norm(f, 1.0)


def weighted_norm(f: GridFunction, weight: str = "x") -> float:
    """``||x f||_2`` (or ``||phi f||_2`` on the finite lattice with ``weight="phi"``)."""
    dom = f.domain
    if weight == "phi":
        if not isinstance(dom, LatticeSpec):
            raise TypeError("the phi weight lives on the finite lattice")
        p = phi(dom)
        grids = np.meshgrid(*([p] * dom.d), indexing="ij")
    elif weight == "x":
        grids = dom.mesh()
    else:
        raise ValueError(f"unknown weight {weight!r}")
    w2 = sum(g**2 for g in grids)
    return float(math.sqrt(_weight(f) * np.sum(w2 * np.abs(f.values) ** 2)))


def h11_norm(f: GridFunction, weight: str = "x") -> float:
    return math.sqrt(h1_norm(f) ** 2 + weighted_norm(f, weight) ** 2)


def mass(f: GridFunction) -> float:
    return lp_norm(f, 2) ** 2


def _grad_sq(f: GridFunction) -> float:
    dom = f.domain
    if isinstance(dom, LatticeSpec):
        return float(_weight(f) * np.sum(np.abs(gradient_omega(f)) ** 2))
    if isinstance(dom, PeriodicLattice):
        return float(_weight(f) * np.sum(np.abs(gradient_right(f)) ** 2))
    c2, P = _fourier_weights(f)
    return float(np.sum(P * c2))


def energy(f: GridFunction, sigma: float = 1.0) -> float:
    """``(1/2) ||grad f||^2 + (sigma/4) ||f||_4^4`` with the domain's right differences."""
    return 0.5 * _grad_sq(f) + 0.25 * sigma * lp_norm(f, 4) ** 4


def strichartz_norm(times, states, q: float, r: float, interval=(0.0, 1.0)) -> float:
    """``|| ||u(t)||_r ||_{L^q_t(interval)}`` by the trapezoid rule on uniform samples."""
    a, b = interval
    if not b > a:
        raise ValueError("empty time interval")
    times = np.asarray(times, dtype=float)
    sel = (times >= a - 1e-12) & (times <= b + 1e-12)
    ts = times[sel]
    if ts.size < 2:
        raise ValueError("need at least two samples in the interval")
    dt = np.diff(ts)
    if np.ptp(dt) > 1e-9 * dt.mean():
        raise ValueError("time samples must be uniform")
    norms = np.array([lp_norm(s, r) for s, keep in zip(states, sel) if keep])
    if math.isinf(q):
        return float(norms.max())
    return float(np.trapezoid(norms**q, ts) ** (1.0 / q))


def _recip(x) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


@dataclass(frozen=True)
class AdmissiblePair:
    """Lattice-admissible ``(q, r)``: ``3/q + d/r = d/2``, ``2 <= q, r <= inf``, not ``(2, inf, 3)``."""

    q: float
    r: float
    d: int

    def __post_init__(self):
        if not (2 <= self.q <= INF and 2 <= self.r <= INF):
            raise ValueError("exponents must lie in [2, inf]")
        if abs(3 * _recip(self.q) + self.d * _recip(self.r) - self.d / 2) > 1e-12:
            raise ValueError(f"({self.q}, {self.r}) is not admissible in d={self.d}")
        if self.q == 2 and math.isinf(self.r) and self.d == 3:
            raise ValueError("(2, inf) is excluded in three dimensions")


def admissible_pairs(d: int, count: int) -> list[AdmissiblePair]:
    """``count`` pairs spaced evenly in ``1/q`` along the admissible line.

    Both endpoints are included in d = 2 (``(inf, 2)`` and ``(3, inf)``); in
    d = 3 the excluded endpoint ``(2, inf)`` is left out.
    """
    if d not in (2, 3):
        raise ValueError("admissible pairs are enumerated for d = 2, 3")
    if count < 2:
        raise ValueError("count must be at least 2")
    out = []
    for k in range(count):
        if d == 2:
            inv_q = Fraction(k, 3 * (count - 1))
        else:
            inv_q = Fraction(k, 2 * count)
        inv_r = (Fraction(d, 2) - 3 * inv_q) / d
        q = INF if inv_q == 0 else float(1 / inv_q)
        r = INF if inv_r == 0 else float(1 / inv_r)
        out.append(AdmissiblePair(q, r, d))
    return out


def loss_exponent(q: float, alpha: float, eps: float = 0.05) -> float:
    """Derivative loss ``s``: ``1/q + eps`` (alpha >= 1), ``(2 - alpha)/q`` (0 < alpha < 1), ``2/q + eps`` (alpha = 0)."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if eps <= 0:
        raise ValueError("eps must be positive")
    iq = 0.0 if math.isinf(q) else 1.0 / q
    if alpha >= 1:
        return iq + eps
    if alpha > 0:
        return (2 - alpha) * iq
    return 2 * iq + eps


def linfty_exponent(d: int, alpha: float, delta: float) -> float:
    """Time exponent ``2 (1 + min(alpha, 1)) / (d - 2 + delta)`` of the averaged sup bound."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 2 * (1 + min(alpha, 1.0)) / (d - 2 + delta)


def japanese(t: float) -> float:
    return math.sqrt(1 + t * t)


def bernstein_ratio(f: GridFunction, N: float, p: float, q: float) -> float:
    """``||P_N f||_q / ((N/h)^(d(1/p - 1/q)) ||f||_p)`` for ``q >= 2 >= p``."""
    from .spectral import project_band

    spec = f.domain
    if not (q >= 2 >= p >= 1):
        raise ValueError("need q >= 2 >= p >= 1")
    iq = 0.0 if math.isinf(q) else 1.0 / q
    scale = (N / spec.h) ** (spec.d * (1.0 / p - iq))
    den = scale * lp_norm(f, p)
    return lp_norm(project_band(f, N), q) / den if den > 0 else 0.0
