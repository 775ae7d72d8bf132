"""Lattice geometry and grid-function containers.

Three kinds of domain are supported:

* :class:`LatticeSpec` -- the finite cube ``{x in hZ^d : |x_j| <= pi R}`` with
  ``h = pi / K``.  Only the ``(2KR - 1)^d`` interior values are stored, the
  boundary is an implicit zero.
* :class:`PeriodicLattice` -- a periodic box of ``n`` points per axis with
  spacing ``h``, standing in for the infinite lattice ``hZ^d``.
* :class:`ContinuumGrid` -- a fine periodic box ``[-L, L)^d`` used for the
  continuum reference solution and for L2 error quadrature.

Interior values are kept as ndarrays of shape ``(n,) * d``; flattening them in
C (row-major) order gives the canonical linear ordering used everywhere else,
including the binary format in :mod:`dnls.io`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeSpec",
    "PeriodicLattice",
    "ContinuumGrid",
    "GridFunction",
    "make_lattice",
    "choose_R_for_alpha",
    "resample_to_continuum",
    "interpolate_at",
]


@dataclass(frozen=True)
class LatticeSpec:
    """Finite cubic lattice with zero boundary values.

    ``unit_spacing`` switches to the rescaled lattice ``{-KR, ..., KR}^d`` with
    spacing 1, used by the small-amplitude reformulation.
    """

    d: int
    K: int
    R: int
    alpha: float = 0.0
    unit_spacing: bool = False

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K}")
        if int(self.R) != self.R or self.R < 1:
            raise ValueError(f"R must be a positive integer, got {self.R}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")

    @property
    def h(self) -> float:
        return 1.0 if self.unit_spacing else math.pi / self.K

    @property
    def M(self) -> int:
        """Number of lattice steps across one axis, ``2KR``."""
        return 2 * self.K * self.R

    @property
    def half_side(self) -> float:
        return self.K * self.R * self.h

    @property
    def n(self) -> int:
        """Interior points per axis."""
        return self.M - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def full_shape(self) -> tuple[int, ...]:
        return (self.M + 1,) * self.d

    @property
    def n_frequencies(self) -> int:
        return self.n**self.d

    def coords(self) -> np.ndarray:
        """Interior coordinates along one axis, ``-pi R + h, ..., pi R - h``."""
        return self.h * (np.arange(1, self.M) - self.K * self.R)

    def full_coords(self) -> np.ndarray:
        return self.h * (np.arange(self.M + 1) - self.K * self.R)

    def frequencies(self) -> np.ndarray:
        """Frequencies ``xi = m / (2R)`` along one axis (scaled by 1/h on unit lattices)."""
        m = np.arange(1, self.M)
        return math.pi * m / (self.M * self.h)

    def mesh(self) -> list[np.ndarray]:
        x = self.coords()
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def multi_index(self, linear: int | np.ndarray) -> tuple:
        return np.unravel_index(linear, self.shape)

    def linear_index(self, multi) -> int | np.ndarray:
        return np.ravel_multi_index(tuple(multi), self.shape)

    def boundary_mask(self) -> np.ndarray:
        """Boolean mask on the full grid marking points with some coordinate at +-pi R."""
        mask = np.zeros(self.full_shape, dtype=bool)
        for j in range(self.d):
            idx = [slice(None)] * self.d
            idx[j] = 0
            mask[tuple(idx)] = True
            idx[j] = -1
            mask[tuple(idx)] = True
        return mask

    def pad(self, values: np.ndarray) -> np.ndarray:
        """Embed interior values into the full grid with zeros on the boundary."""
        return np.pad(values, 1)

    def rescaled(self) -> "LatticeSpec":
        """The same index set with unit spacing."""
        return LatticeSpec(self.d, self.K, self.R, self.alpha, unit_spacing=True)


@dataclass(frozen=True)
class PeriodicLattice:
    """Periodic box of ``n`` points per axis and spacing ``h``.

    Coordinates are centred: ``x_k = h (k - n // 2)``.
    """

    d: int
    h: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 2 or self.h <= 0:
            raise ValueError("periodic lattice needs n >= 2 and h > 0")

    @property
    def side(self) -> float:
        return self.n * self.h

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    def coords(self) -> np.ndarray:
        return self.h * (np.arange(self.n) - self.n // 2)

    def frequencies(self) -> np.ndarray:
        """Discrete frequencies in the periodic box ``[-pi/h, pi/h)``, FFT order."""
        return 2 * math.pi * np.fft.fftfreq(self.n, d=self.h)

    def mesh(self) -> list[np.ndarray]:
        x = self.coords()
        return np.meshgrid(*([x] * self.d), indexing="ij")

    @classmethod
    def around(cls, spec: LatticeSpec, factor: int = 4) -> "PeriodicLattice":
        """Box of side ``factor * 2 pi R`` at the spacing of ``spec``."""
        return cls(spec.d, spec.h, factor * spec.M)


@dataclass(frozen=True)
class ContinuumGrid:
    """Periodic box ``[-L, L)^d`` sampled at ``x_k = -L + (k + offset) h_ref``."""

    d: int
    h_ref: float
    L: float
    offset: float = 0.0

    def __post_init__(self):
        n = 2 * self.L / self.h_ref
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError("2 L must be an integer multiple of h_ref")

    @property
    def n(self) -> int:
        return int(round(2 * self.L / self.h_ref))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    def coords(self) -> np.ndarray:
        return -self.L + (np.arange(self.n) + self.offset) * self.h_ref

    def frequencies(self) -> np.ndarray:
        return 2 * math.pi * np.fft.fftfreq(self.n, d=self.h_ref)

    def mesh(self) -> list[np.ndarray]:
        x = self.coords()
        return np.meshgrid(*([x] * self.d), indexing="ij")

    @property
    def cell_volume(self) -> float:
        return self.h_ref**self.d


Domain = LatticeSpec | PeriodicLattice | ContinuumGrid


@dataclass
class GridFunction:
    """Complex field on one of the three domain kinds."""

    domain: Domain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.domain.shape:
            if self.values.size == self.domain.size:
                self.values = self.values.reshape(self.domain.shape)
            else:
                raise ValueError(
                    f"value count {self.values.size} does not match domain "
                    f"cardinality {self.domain.size}"
                )

    @property
    def weight(self) -> float:
        """Volume element ``h^d`` of the domain."""
        dom = self.domain
        h = dom.h_ref if isinstance(dom, ContinuumGrid) else dom.h
        return h**dom.d

    def copy(self) -> "GridFunction":
        return GridFunction(self.domain, self.values.copy())

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.domain, values)

    def __add__(self, other):
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


def _check_same(a: GridFunction, b: GridFunction):
    if a.domain != b.domain:
        raise ValueError("grid functions live on different domains")


def make_lattice(d: int, K: int, R: int, alpha: float = 0.0) -> LatticeSpec:
    return LatticeSpec(d, K, R, alpha)


def choose_R_for_alpha(K: int, alpha: float, c: float = 1.0) -> int:
    """Integer half-side ``R = max(1, round(c (K / pi)^alpha))``, i.e. ``R ~ h^-alpha``."""
    if K < 1 or alpha < 0 or c <= 0:
        raise ValueError("need K >= 1, alpha >= 0, c > 0")
    return max(1, int(round(c * (K / math.pi) ** alpha)))


def interpolate_at(
    f: GridFunction, points: list[np.ndarray], kind: str = "cellwise"
) -> np.ndarray:
    """Evaluate the interpolant of the zero-extended lattice function at ``points``.

    ``kind="cellwise"`` is ``g(y) + sum_j (g(y + h e_j) - g(y)) (x_j - y_j) / h`` on
    the cell ``y + [0, h)^d`` (exact at nodes, piecewise linear per axis but not
    continuous across cell faces when d > 1).  ``kind="multilinear"`` is the
    continuous tensor-product interpolant.  Both agree in one dimension.
    """
    spec = f.domain
    if not isinstance(spec, LatticeSpec):
        raise TypeError("interpolation is defined for finite-lattice functions")
    if kind not in ("cellwise", "multilinear"):
        raise ValueError(f"unknown interpolation kind {kind!r}")
    h, d = spec.h, spec.d
    # full grid padded by one extra zero layer so y + h e_j is always addressable
    g = np.pad(f.values, 2)
    offset = spec.K * spec.R + 1  # index of x = 0 in the padded array
    base, frac = [], []
    inside = np.ones(np.broadcast(*points).shape, dtype=bool)
    for p in points:
        s = np.asarray(p, dtype=float) / h
        k = np.floor(s + 1e-9)
        t = np.clip(s - k, 0.0, 1.0)
        idx = k.astype(np.int64) + offset
        ok = (idx >= 0) & (idx < g.shape[0] - 1)
        inside &= ok
        base.append(np.where(ok, idx, 0))
        frac.append(t)
    base = [np.broadcast_to(b, inside.shape) for b in base]
    frac = [np.broadcast_to(t, inside.shape) for t in frac]
    g0 = g[tuple(base)]
    if kind == "cellwise":
        out = g0.copy()
        for j in range(d):
            shifted = list(base)
            shifted[j] = base[j] + 1
            out += (g[tuple(shifted)] - g0) * frac[j]
    else:
        out = np.zeros(inside.shape, dtype=complex)
        for corner in np.ndindex(*([2] * d)):
            idx = tuple(b + c for b, c in zip(base, corner))
            w = np.ones(inside.shape)
            for j, c in enumerate(corner):
                w = w * (frac[j] if c else 1.0 - frac[j])
            out += w * g[idx]
    return np.where(inside, out, 0.0)


def resample_to_continuum(
    f: GridFunction, target: ContinuumGrid, kind: str = "cellwise"
) -> GridFunction:
    """Values of the interpolated zero extension of ``f`` at the nodes of ``target``."""
    spec = f.domain
    if not isinstance(spec, LatticeSpec):
        raise TypeError("resampling is defined for finite-lattice functions")
    if target.d != spec.d:
        raise ValueError("dimension mismatch")
    if target.L < spec.half_side - 1e-12:
        raise ValueError("target box is smaller than the lattice box")
    return GridFunction(target, interpolate_at(f, target.mesh(), kind))
