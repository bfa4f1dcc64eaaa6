"""Linear discriminant analysis used as the stacking meta-classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHRINKAGE = 1e-6
N_CLASSES = 4
TIE_TOL = 1e-9


@dataclass
class LdaModel:
    means: np.ndarray        # (classes, d)
    covariance: np.ndarray   # pooled, regularized (d, d)
    priors: np.ndarray       # (classes,)

    def __post_init__(self):
        self._prec = np.linalg.inv(self.covariance)

    def discriminants(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A = self.means @ self._prec                      # (c, d)
        const = -0.5 * np.einsum("cd,cd->c", A, self.means)
        with np.errstate(divide="ignore"):
            logp = np.log(self.priors)
        return X @ A.T + const + logp

    def predict_proba(self, X) -> np.ndarray:
        D = self.discriminants(X)
        D = D - D.max(axis=1, keepdims=True)
        e = np.exp(D)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        # near-ties (rounding noise) go to the earliest class in N, A, O, NOISE order
        D = self.discriminants(X)
        top = D.max(axis=1, keepdims=True)
        return np.argmax(D >= top - TIE_TOL * np.maximum(1.0, np.abs(top)), axis=1)

    def to_json(self) -> dict:
        return {"means": self.means.tolist(), "covariance": self.covariance.tolist(),
                "priors": self.priors.tolist()}

    @classmethod
    def from_json(cls, d) -> "LdaModel":
        return cls(np.array(d["means"], dtype=np.float64), np.array(d["covariance"], dtype=np.float64),
                   np.array(d["priors"], dtype=np.float64))


def lda_train(X, y, n_classes: int = N_CLASSES, shrinkage: float = SHRINKAGE,
              priors=None) -> LdaModel:
    """Pooled-covariance LDA; ``shrinkage`` is added to the covariance diagonal."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty training data")
    counts = np.bincount(y, minlength=n_classes)
    if counts.min() < 2:
        raise ValueError(f"every class needs at least 2 rows, got counts {counts.tolist()}")
    n, d = X.shape
    means = np.stack([X[y == c].mean(axis=0) for c in range(n_classes)])
    R = X - means[y]
    cov = R.T @ R / (n - n_classes) + shrinkage * np.eye(d)
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise ValueError("covariance is singular after shrinkage") from e
    pri = counts / n if priors is None else np.asarray(priors, dtype=np.float64)
    return LdaModel(means, cov, pri)


def lda_predict(m: LdaModel, row) -> tuple:
    """Return ``(class index, posteriors)`` for one metafeature row."""
    p = m.predict_proba(row)[0]
    return int(m.predict(row)[0]), p
