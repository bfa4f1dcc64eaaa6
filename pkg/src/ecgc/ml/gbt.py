"""Multiclass gradient-boosted trees with a softmax objective.

Second-order boosting: each round fits one regression tree per class to the
gradient ``p - y`` and hessian ``2 p (1 - p)`` of the softmax cross-entropy.
Trees grow level by level with exact splits taken from presorted feature
columns (``kernels.best_splits``); leaves hold ``-G / (H + lambda)`` scaled by
the learning rate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import kernels
from .utils import seeded_rng

N_CLASSES = 4


@dataclass(frozen=True)
class GbtHyperParams:
    max_depth: int = 5
    learning_rate: float = 0.1
    rounds: int = 100
    gamma: float = 2.0
    subsample: float = 0.8
    min_child_weight: float = 7.0
    reg_lambda: float = 1.0


@dataclass
class Tree:
    feature: np.ndarray     # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray       # hessian sum per node

    def apply(self, X) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] < self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_json(self) -> dict:
        return {k: v.tolist() for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, d) -> "Tree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=np.float64), np.array(d["gain"], dtype=np.float64),
                   np.array(d["cover"], dtype=np.float64))


@dataclass
class GbtModel:
    hp: GbtHyperParams
    base_score: np.ndarray
    trees: list = field(default_factory=list)  # rounds x classes
    n_features: int = 0

    def margins(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        F = np.tile(self.base_score, (X.shape[0], 1))
        for round_trees in self.trees:
            for c, t in enumerate(round_trees):
                F[:, c] += t.predict(X)
        return F

    def predict_proba(self, X) -> np.ndarray:
        return _softmax(self.margins(X))

    def feature_importance(self) -> np.ndarray:
        """Total split gain per feature."""
        imp = np.zeros(self.n_features)
        for round_trees in self.trees:
            for t in round_trees:
                for f, g in zip(t.feature, t.gain):
                    if f >= 0:
                        imp[f] += g
        return imp

    def to_json(self) -> dict:
        return {"hp": asdict(self.hp), "base_score": self.base_score.tolist(),
                "n_features": self.n_features,
                "trees": [[t.to_json() for t in rt] for rt in self.trees]}

    @classmethod
    def from_json(cls, d) -> "GbtModel":
        return cls(GbtHyperParams(**d["hp"]), np.array(d["base_score"], dtype=np.float64),
                   [[Tree.from_json(t) for t in rt] for rt in d["trees"]], int(d["n_features"]))


def _softmax(F):
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _grow(xs, order, X, rows_mask, g, h, hp: GbtHyperParams) -> Tree:
    """Grow one tree on the rows selected by ``rows_mask``."""
    n = X.shape[0]
    lam = hp.reg_lambda
    feature, threshold, left, right, gain, value, cover = [], [], [], [], [], [], []

    def new_node(G, H):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        gain.append(0.0)
        value.append(-G / (H + lam) * hp.learning_rate)
        cover.append(H)
        return len(feature) - 1

    node_of = np.where(rows_mask, 0, -1).astype(np.int64)
    new_node(float(g[rows_mask].sum()), float(h[rows_mask].sum()))
    level = [0]
    for _ in range(hp.max_depth):
        if not level:
            break
        # renumber this level's nodes 0..k-1 for the kernel
        local = np.full(n, -1, dtype=np.int64)
        for k, nd in enumerate(level):
            local[node_of == nd] = k
        G = np.array([float(g[local == k].sum()) for k in range(len(level))])
        H = np.array([float(h[local == k].sum()) for k in range(len(level))])
        feat, thr, best = kernels.best_splits(xs, order, local, g, h, G, H, lam, hp.gamma,
                                              hp.min_child_weight)
        nxt = []
        for k, nd in enumerate(level):
            if feat[k] < 0:
                continue
            rows = np.flatnonzero(local == k)
            go_left = X[rows, feat[k]] < thr[k]
            lrows, rrows = rows[go_left], rows[~go_left]
            if lrows.size == 0 or rrows.size == 0:
                continue
            feature[nd] = int(feat[k])
            threshold[nd] = float(thr[k])
            gain[nd] = float(best[k])
            li = new_node(float(g[lrows].sum()), float(h[lrows].sum()))
            ri = new_node(float(g[rrows].sum()), float(h[rrows].sum()))
            left[nd], right[nd] = li, ri
            node_of[lrows] = li
            node_of[rrows] = ri
            nxt += [li, ri]
        level = nxt
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value), np.array(gain), np.array(cover))


def gbt_train(X, y, hp: GbtHyperParams = GbtHyperParams(), seed=0) -> GbtModel:
    """Fit the boosted ensemble; rows are subsampled per round with ``seed``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty training data")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or inf; impute before training")
    if np.unique(y).size < 2:
        raise ValueError("need at least two classes")
    n, d = X.shape
    counts = np.bincount(y, minlength=N_CLASSES).astype(np.float64)
    prior = np.maximum(counts / n, 1e-12)
    base = np.log(prior)
    model = GbtModel(hp, base, [], d)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    Y = np.eye(N_CLASSES)[y]
    F = np.tile(base, (n, 1))
    rng = seeded_rng(seed, 5)
    for _ in range(hp.rounds):
        P = _softmax(F)
        if hp.subsample < 1.0:
            take = max(1, int(round(hp.subsample * n)))
            mask = np.zeros(n, dtype=bool)
            mask[rng.permutation(n)[:take]] = True
        else:
            mask = np.ones(n, dtype=bool)
        round_trees = []
        for c in range(N_CLASSES):
            g = np.ascontiguousarray(P[:, c] - Y[:, c])
            h = np.ascontiguousarray(np.maximum(2.0 * P[:, c] * (1.0 - P[:, c]), 1e-16))
            t = _grow(xs, order, X, mask, g, h, hp)
            round_trees.append(t)
        for c, t in enumerate(round_trees):
            F[:, c] += t.predict(X)
        model.trees.append(round_trees)
    return model


def gbt_predict_proba(m: GbtModel, x) -> np.ndarray:
    p = m.predict_proba(x)
    return p[0] if np.asarray(x).ndim == 1 else p
