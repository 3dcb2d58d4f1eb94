import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from kantorovich import operators as ops
from kantorovich._validation import DomainError
from kantorovich.observables import parse_polynomial

GRID = np.linspace(0, 1, 129)


def test_params_round_trip():
    op = ops.KantorovichOperator(i=2, eps=1e-8, n_iter=3, grid=GRID)
    params = op.get_params()
    assert params["i"] == 2 and params["n_iter"] == 3 and params["eps"] == 1e-8
    op.set_params(i=3)
    assert op.i == 3
    twin = clone(op)
    assert twin.get_params()["i"] == 3 and twin is not op
    assert not hasattr(twin, "grid_")


def test_repr_lists_parameters():
    assert "k=4" in repr(ops.BernsteinOperator(k=4))


def test_transform_needs_fit():
    with pytest.raises(NotFittedError):
        ops.MKZOperator(grid=GRID).transform(np.zeros((1, len(GRID))))


def test_fit_sets_learned_attributes():
    op = ops.MKZOperator(i=1, grid=GRID).fit()
    assert op.n_features_in_ == len(GRID)
    assert op.matrix_.shape == (len(GRID), len(GRID))
    assert op.spec_ == ops.OperatorSpec.mkz(1)


def test_transform_matches_iterate():
    op = ops.KantorovichOperator(i=1, n_iter=4, grid=GRID).fit()
    f = parse_polynomial("t^2-t")
    rows = np.vstack([f(GRID), np.ones(len(GRID))])
    out = op.transform(rows)
    assert out[0] == pytest.approx(op.iterate(f, 4).values, abs=1e-15)
    assert np.abs(out[1] - 1).max() <= 1e-12


def test_fit_transform_and_pipeline():
    proj = ops.ProjectionOperator(grid=GRID)
    bern = ops.BernsteinOperator(k=4, n_iter=2, grid=GRID)
    X = np.vstack([GRID**3, np.sin(GRID)])
    pipe = make_pipeline(bern, proj)
    out = pipe.fit_transform(X)
    # projecting keeps only the endpoint values, which B_4 preserves
    expected = X[:, [0]] * (1 - GRID) + X[:, [-1]] * GRID
    assert out == pytest.approx(expected, abs=1e-12)


def test_wrong_width_is_rejected():
    op = ops.ProjectionOperator(grid=GRID)
    with pytest.raises(DomainError):
        op.fit(np.zeros((2, 5)))
    op.fit()
    with pytest.raises(DomainError):
        op.transform(np.zeros((2, 5)))


def test_bad_parameters_surface_at_fit():
    with pytest.raises(DomainError):
        ops.BernsteinOperator(k=0).fit()
    with pytest.raises(DomainError):
        ops.ProjectionOperator(n_iter=0, grid=GRID).fit().transform(np.zeros((1, len(GRID))))
