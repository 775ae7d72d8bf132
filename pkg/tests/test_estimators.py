import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from dnls.estimators import (
    BandProjector,
    EigenTransform,
    LinearPropagator,
    NLSEvolver,
    NormFeatures,
    check_lattice_array,
)
from dnls.lattice import LatticeSpec


def _batch(spec, n=3, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * (rng.normal(size=(n, spec.size)) + 1j * rng.normal(size=(n, spec.size)))


def test_params_and_clone():
    est = LinearPropagator(d=1, K=4, R=2, t=0.5)
    assert est.get_params() == {"d": 1, "K": 4, "R": 2, "t": 0.5}
    c = clone(est).set_params(t=1.0)
    assert c.t == 1.0 and est.t == 0.5


@pytest.mark.parametrize(
    "est",
    [EigenTransform(d=2, K=2, R=2), LinearPropagator(d=2, K=2, R=2, t=0.7), NLSEvolver(d=2, K=2, R=2, T=0.2, tau=0.01)],
)
def test_round_trips(est):
    spec = LatticeSpec(2, 2, 2)
    X = _batch(spec, scale=0.3)
    Y = est.fit_transform(X)
    assert Y.shape == X.shape
    np.testing.assert_allclose(est.inverse_transform(Y), X, atol=1e-10)


def test_pipeline_of_projector_and_features():
    spec = LatticeSpec(2, 4, 1)
    X = _batch(spec, 4, 1)
    pipe = make_pipeline(BandProjector(d=2, K=4, R=1, N=1.0), NormFeatures(d=2, K=4, R=1, s_values=(0.0, 1.0)))
    F = pipe.fit_transform(X)
    assert F.shape == (4, 4)
    np.testing.assert_allclose(F[:, 2] ** 2, F[:, 0], rtol=1e-12)
    assert list(pipe[-1].get_feature_names_out()) == ["mass", "energy", "hs_0", "hs_1"]


def test_projector_bands_sum_to_identity():
    spec = LatticeSpec(1, 4, 2)
    X = _batch(spec, 2, 2)
    from dnls.spectral import dyadic_levels

    total = sum(BandProjector(d=1, K=4, R=2, N=N).fit_transform(X) for N in dyadic_levels(spec))
    np.testing.assert_allclose(total, X, atol=1e-12)


def test_validation():
    spec = LatticeSpec(1, 2, 1)
    assert check_lattice_array(np.ones(3), spec).shape == (1, 3)
    assert check_lattice_array(np.ones((2, 3)), spec).dtype == complex
    with pytest.raises(ValueError):
        check_lattice_array(np.ones((2, 4)), spec)
    with pytest.raises(ValueError):
        check_lattice_array(np.array([[1.0, np.nan, 0.0]]), spec)
    with pytest.raises(TypeError):
        check_lattice_array(np.array([["a", "b", "c"]]), spec)
    with pytest.raises(ValueError):
        check_lattice_array(np.ones((0, 3)), spec)


def test_transform_before_fit():
    with pytest.raises(NotFittedError):
        EigenTransform(d=1, K=2, R=1).transform(np.ones((1, 3)))
