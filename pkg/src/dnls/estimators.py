"""scikit-learn style wrappers around the lattice operators.

Each transformer takes a batch of lattice fields ``X`` with shape
``(n_samples, (2KR-1)^d)`` (flattened, row-major) or
``(n_samples, 2KR-1, ..., 2KR-1)`` and returns a batch of the same kind.
Complex input is accepted, which is why the validation is done here rather
than with ``sklearn.utils.check_array``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import analysis as an
from .dynamics import SolverConfig, linear_flow, nls_solve
from .lattice import GridFunction, LatticeSpec
from .spectral import SpectralCoeffs, band_mask, forward, inverse

__all__ = [
    "check_lattice_array",
    "EigenTransform",
    "LinearPropagator",
    "NLSEvolver",
    "BandProjector",
    "NormFeatures",
]


def check_lattice_array(X, spec: LatticeSpec, allow_single: bool = True) -> np.ndarray:
    """Validate ``X`` as a batch of fields on ``spec``; returns complex ``(n, *spec.shape)``.

    A single field (shape ``spec.shape`` or ``(spec.size,)``) is promoted to
    a batch of one when ``allow_single`` is set.
    """
    X = np.asarray(X)
    if X.dtype == object or not (np.issubdtype(X.dtype, np.number) or X.dtype == bool):
        raise TypeError(f"expected a numeric array, got dtype {X.dtype}")
    X = X.astype(complex)
    if allow_single and (X.shape == spec.shape or X.shape == (spec.size,)):
        X = X[None]
    if X.ndim < 2 or X.shape[0] == 0:
        raise ValueError("expected a nonempty batch of fields")
    if X[0].size != spec.size:
        raise ValueError(f"each sample must have {spec.size} values for {spec}, got {X[0].size}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or infinity")
    return X.reshape((X.shape[0],) + spec.shape)


class _LatticeTransformer(TransformerMixin, BaseEstimator):
    """Common fit logic: build the lattice from ``d, K, R`` and check ``X``."""

    def _spec(self) -> LatticeSpec:
        return LatticeSpec(self.d, self.K, self.R)

    def fit(self, X, y=None):
        spec = self._spec()
        X = check_lattice_array(X, spec)
        self.spec_ = spec
        self.n_features_in_ = spec.size
        return self

    def _check(self, X) -> np.ndarray:
        check_is_fitted(self, "spec_")
        return check_lattice_array(X, self.spec_)

    def _each(self, X, fn) -> np.ndarray:
        X = self._check(X)
        out = [fn(GridFunction(self.spec_, x)) for x in X]
        return np.stack(out).reshape(len(out), -1)


class EigenTransform(_LatticeTransformer):
    """Fields to eigen-coefficients ``<f, e(., xi)>`` and back."""

    def __init__(self, d=2, K=4, R=1, method="fast"):
        self.d = d
        self.K = K
        self.R = R
        self.method = method

    def transform(self, X):
        return self._each(X, lambda f: forward(f, self.method).coeffs)

    def inverse_transform(self, C):
        C = self._check(C)
        out = [inverse(SpectralCoeffs(self.spec_, c), self.method).values for c in C]
        return np.stack(out).reshape(len(out), -1)


class LinearPropagator(_LatticeTransformer):
    """``f -> exp(i t Lap) f`` with zero boundary values."""

    def __init__(self, d=2, K=4, R=1, t=1.0):
        self.d = d
        self.K = K
        self.R = R
        self.t = t

    def transform(self, X):
        return self._each(X, lambda f: linear_flow(f, self.t).values)

    def inverse_transform(self, X):
        return self._each(X, lambda f: linear_flow(f, -self.t).values)


class NLSEvolver(_LatticeTransformer):
    """``w0 -> w(T)`` for the lattice NLS, Strang splitting with step ``tau``."""

    def __init__(self, d=2, K=4, R=1, T=1.0, tau=1e-3, sigma=1.0):
        self.d = d
        self.K = K
        self.R = R
        self.T = T
        self.tau = tau
        self.sigma = sigma

    def fit(self, X, y=None):
        self.solver_ = SolverConfig(tau=self.tau, T=self.T, sigma=self.sigma)
        return super().fit(X, y)

    def transform(self, X):
        return self._each(X, lambda f: nls_solve(f, self.solver_).final.values)

    def inverse_transform(self, X):
        back = SolverConfig(tau=self.tau, T=-self.T, sigma=self.sigma)
        return self._each(X, lambda f: nls_solve(f, back).final.values)


class BandProjector(_LatticeTransformer):
    """Sharp dyadic projection onto the band at level ``N``."""

    def __init__(self, d=2, K=4, R=1, N=1.0):
        self.d = d
        self.K = K
        self.R = R
        self.N = N

    def fit(self, X, y=None):
        super().fit(X, y)
        self.mask_ = band_mask(self.spec_, self.N)
        return self

    def transform(self, X):
        def proj(f):
            c = forward(f).coeffs * self.mask_
            return inverse(SpectralCoeffs(self.spec_, c)).values

        return self._each(X, proj)


class NormFeatures(_LatticeTransformer):
    """Per-field features: mass, energy, then ``||f||_{H^s}`` for each ``s``."""

    def __init__(self, d=2, K=4, R=1, s_values=(0.5, 1.0), sigma=1.0):
        self.d = d
        self.K = K
        self.R = R
        self.s_values = s_values
        self.sigma = sigma

    def transform(self, X):
        def feats(f):
            return [an.mass(f), an.energy(f, self.sigma)] + [an.hs_norm(f, s) for s in self.s_values]

        X = self._check(X)
        return np.array([feats(GridFunction(self.spec_, x)) for x in X])

    def get_feature_names_out(self, input_features=None):
        return np.array(["mass", "energy"] + [f"hs_{s:g}" for s in self.s_values], dtype=object)
