import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgc.ml.gbt import GbtHyperParams, GbtModel, Tree, gbt_predict_proba, gbt_train


def _clusters(seed=0, n=100):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]])
    y = np.repeat(np.arange(4), n)
    return centres[y] + rng.normal(0.0, 0.6, (4 * n, 2)), y


def test_separable_clusters_fit():
    X, y = _clusters()
    m = gbt_train(X, y, seed=1)
    assert (m.predict_proba(X).argmax(axis=1) == y).mean() >= 0.99
    assert len(m.trees) == m.hp.rounds and all(len(rt) == 4 for rt in m.trees)


def test_zero_rounds_predicts_priors():
    X, y = _clusters(n=10)
    y = np.array([0] * 20 + [1] * 10 + [2] * 5 + [3] * 5)
    m = gbt_train(X, y, GbtHyperParams(rounds=0))
    assert np.allclose(gbt_predict_proba(m, X[0]), [0.5, 0.25, 0.125, 0.125])


def test_same_seed_same_serialization():
    X, y = _clusters(seed=3, n=30)
    a = json.dumps(gbt_train(X, y, GbtHyperParams(rounds=10), seed=4).to_json())
    b = json.dumps(gbt_train(X, y, GbtHyperParams(rounds=10), seed=4).to_json())
    c = json.dumps(gbt_train(X, y, GbtHyperParams(rounds=10), seed=5).to_json())
    assert a == b and a != c


def test_round_trip_predictions():
    X, y = _clusters(seed=3, n=30)
    m = gbt_train(X, y, GbtHyperParams(rounds=10), seed=4)
    m2 = GbtModel.from_json(json.loads(json.dumps(m.to_json())))
    assert np.array_equal(m.predict_proba(X), m2.predict_proba(X))


def test_hand_traced_tree():
    # root splits feature 1 at 0.5; left leaf 0.2, right child splits feature 0 at 2
    t = Tree(np.array([1, -1, 0, -1, -1]), np.array([0.5, 0, 2.0, 0, 0]),
             np.array([1, -1, 3, -1, -1]), np.array([2, -1, 4, -1, -1]),
             np.array([0.0, 0.2, 0.0, -0.3, 0.7]), np.zeros(5), np.ones(5))
    zero = Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.zeros(1),
                np.zeros(1), np.ones(1))
    m = GbtModel(GbtHyperParams(rounds=1), np.zeros(4), [[t, zero, zero, zero]], 2)
    x = np.array([[9.0, 0.0], [1.0, 1.0], [3.0, 1.0]])
    expected_margin = np.array([0.2, -0.3, 0.7])
    p = m.predict_proba(x)
    e = np.exp(expected_margin)
    assert np.allclose(p[:, 0], e / (e + 3.0), rtol=0, atol=1e-15)


def test_errors():
    X, y = _clusters(n=5)
    with pytest.raises(ValueError):
        gbt_train(np.empty((0, 2)), np.empty(0, dtype=int))
    Xn = X.copy()
    Xn[0, 0] = np.nan
    with pytest.raises(ValueError, match="NaN"):
        gbt_train(Xn, y)
    with pytest.raises(ValueError):
        gbt_train(X, np.zeros(len(y), dtype=int))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_split_and_leaf_invariants(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((120, 5))
    y = (X[:, 0] > 0).astype(int) + 2 * (X[:, 1] > 0.3)
    hp = GbtHyperParams(rounds=8)
    m = gbt_train(X, y, hp, seed=seed)
    for rt in m.trees:
        for t in rt:
            inner = t.feature >= 0
            assert np.all(t.gain[inner] >= hp.gamma)
            assert np.all(t.feature[inner] < X.shape[1])
            children = np.concatenate([t.left[inner], t.right[inner]])
            assert np.all(t.cover[children] >= hp.min_child_weight)
    p = m.predict_proba(rng.standard_normal((30, 5)))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_feature_importance_points_at_signal():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 4))
    y = (X[:, 2] > 0).astype(int) * 3
    imp = gbt_train(X, y, GbtHyperParams(rounds=20), seed=0).feature_importance()
    assert imp.argmax() == 2
