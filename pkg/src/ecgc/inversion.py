"""Lead-inversion detection and correction.

Fourteen record-level features summarise the polarity of the signal and of
its delineated beats. A standardized L2-regularized logistic regression maps
them to the probability that the record was acquired with flipped polarity.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .record_io import Record

FORMAT_VERSION = 1
MODE_BINS = 64
EXTREME_SD = 3.0
RATIO_CAP = 1e6


@dataclass(frozen=True)
class InversionFeatures:
    qrs_axis_median: float
    qrs_amp_median: float
    mean_median_diff_by_len: float
    mean_median_diff_by_amp: float
    baseline_mode: float
    energy_ratio_above_below: float
    dispersion: float
    extreme_sample_mean: float
    subwave1_amp_median: float
    subwave2_amp_median: float
    subwave3_amp_median: float
    p_count_norm: float
    qrs_count_norm: float
    t_count_norm: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)


FEATURE_NAMES = tuple(f.name for f in fields(InversionFeatures))
# features that change sign when the record is negated
SIGNED_FEATURES = ("qrs_axis_median", "qrs_amp_median", "subwave1_amp_median",
                   "subwave2_amp_median", "subwave3_amp_median")


def histogram_mode(x, bins: int = MODE_BINS) -> float:
    """Centre of the most populated histogram bin; ties go to the bin nearest the median."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return lo
    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    centres = 0.5 * (edges[:-1] + edges[1:])
    best = np.flatnonzero(counts == counts.max())
    med = float(np.median(x))
    return float(centres[best[np.argmin(np.abs(centres[best] - med))]])


def _median_or_zero(v) -> float:
    return float(np.median(v)) if len(v) else 0.0


def inversion_features(r: Record, obs) -> InversionFeatures:
    """Compute the fourteen polarity features of a delineated record."""
    if not obs:
        raise ValueError(f"{r.id}: inversion features need at least one beat")
    x = r.mv()
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise ValueError(f"{r.id}: degenerate record with zero amplitude range")
    dur = r.duration_s
    diff = float(x.mean() - np.median(x))
    base = histogram_mode(x)
    dev = x - base
    above = float(np.sum(dev[dev > 0] ** 2))
    below = float(np.sum(dev[dev < 0] ** 2))
    if below > 0:
        ratio = min(RATIO_CAP, above / below)
    else:
        ratio = RATIO_CAP if above > 0 else 1.0
    q1, q3 = np.percentile(x, [25, 75])
    sd = float(x.std())
    ext = dev[np.abs(dev) > EXTREME_SD * sd] if sd > 0 else dev[:0]
    sub = [[ob.qrs_subwaves[i][0] for ob in obs if len(ob.qrs_subwaves) > i] for i in range(3)]
    return InversionFeatures(
        qrs_axis_median=float(np.median([ob.axis_proxy for ob in obs])),
        qrs_amp_median=float(np.median([ob.qrs.amplitude for ob in obs])),
        mean_median_diff_by_len=diff / dur,
        mean_median_diff_by_amp=diff / (hi - lo),
        baseline_mode=base,
        energy_ratio_above_below=ratio,
        dispersion=float(q3 - q1),
        extreme_sample_mean=float(ext.mean()) if ext.size else 0.0,
        subwave1_amp_median=_median_or_zero(sub[0]),
        subwave2_amp_median=_median_or_zero(sub[1]),
        subwave3_amp_median=_median_or_zero(sub[2]),
        p_count_norm=sum(ob.p.present for ob in obs) / dur,
        qrs_count_norm=len(obs) / dur,
        t_count_norm=sum(ob.t.present for ob in obs) / dur,
    )


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    lam: float = 1.0
    iterations: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.feature_means = np.asarray(self.feature_means, dtype=np.float64)
        self.feature_scales = np.asarray(self.feature_scales, dtype=np.float64)
        if np.any(self.feature_scales <= 0):
            raise ValueError("feature scales must be strictly positive")

    def decision(self, X) -> np.ndarray:
        Z = (np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.feature_means) / self.feature_scales
        return Z @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        """Probability of inversion; clipped away from exactly 0 and 1."""
        p = _sigmoid(self.decision(X))
        return np.clip(p, 1e-15, 1.0 - 1e-15)

    def to_json(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "feature_names": list(FEATURE_NAMES),
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "feature_means": self.feature_means.tolist(),
            "feature_scales": self.feature_scales.tolist(),
            "lambda": self.lam,
            "iterations": self.iterations,
        }

    @classmethod
    def from_json(cls, d: dict) -> "LogisticModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported inversion model version {d.get('format_version')}")
        return cls(np.array(d["weights"]), float(d["bias"]), np.array(d["feature_means"]),
                   np.array(d["feature_scales"]), float(d.get("lambda", 1.0)),
                   int(d.get("iterations", 0)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "LogisticModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_logistic(X, y, lam: float = 1.0, tol: float = 1e-6, max_iter: int = 100):
    """Newton's method on the L2-penalised log-loss (bias unpenalised).

    Returns ``(weights, bias, iterations)``; stops when the gradient norm
    falls below ``tol``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    pen = np.full(d + 1, lam)
    pen[-1] = 0.0
    for it in range(1, max_iter + 1):
        p = _sigmoid(A @ theta)
        grad = A.T @ (p - y) + pen * theta
        if np.linalg.norm(grad) < tol:
            return theta[:d], float(theta[d]), it - 1
        H = (A * (p * (1 - p))[:, None]).T @ A + np.diag(pen) + 1e-12 * np.eye(d + 1)
        theta = theta - np.linalg.solve(H, grad)
    p = _sigmoid(A @ theta)
    if np.linalg.norm(A.T @ (p - y) + pen * theta) >= tol:
        raise RuntimeError("logistic regression did not converge")
    return theta[:d], float(theta[d]), max_iter


def train_inversion(data, lam: float = 1.0, tol: float = 1e-6) -> LogisticModel:
    """Fit the inversion classifier on ``(InversionFeatures, inverted)`` pairs."""
    if not data:
        raise ValueError("no training data")
    X = np.array([f.as_array() if isinstance(f, InversionFeatures) else np.asarray(f, dtype=np.float64)
                  for f, _ in data])
    y = np.array([1.0 if inv else 0.0 for _, inv in data])
    if y.min() == y.max():
        raise ValueError("inversion training data must contain both classes")
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[~(scales > 1e-12)] = 1.0
    w, b, it = fit_logistic((X - means) / scales, y, lam=lam, tol=tol)
    return LogisticModel(w, b, means, scales, lam, it)


def is_inverted(r: Record, m: LogisticModel, obs=None, views=None) -> tuple:
    """Return ``(inverted?, probability)`` for one record."""
    from .detection import SignalViews, delineate, detect_beats

    if obs is None:
        views = views or SignalViews(r)
        obs = delineate(r, detect_beats(r, views), views)
    if not obs or np.ptp(r.samples) == 0:
        return False, 0.0
    p = float(m.predict_proba(inversion_features(r, obs).as_array())[0])
    return p > 0.5, p


def correct_inversion(r: Record, m: LogisticModel, obs=None, views=None) -> tuple:
    """Negate ``r`` when the model classifies it as inverted."""
    inv, _ = is_inverted(r, m, obs, views)
    return (r.negated(), True) if inv else (r, False)


def record_features(r: Record) -> Optional[InversionFeatures]:
    """Detect, delineate and featurize; None for records without beats."""
    from .detection import SignalViews, delineate, detect_beats

    if np.ptp(r.samples) == 0:
        return None
    v = SignalViews(r)
    obs = delineate(r, detect_beats(r, v), v)
    return inversion_features(r, obs) if obs else None


def synthetic_training_set(n: int = 200, seed: int = 0):
    """Half-negated synthetic corpus for training or validating the detector."""
    from .synthgen import corpus_specs, generate

    # noise records carry no polarity information
    per = max(1, -(-n // 3))
    specs = [s for s, _ in corpus_specs(per, seed, invert_fraction=0.0) if s.cls != "NOISE"][:n]
    rng = np.random.default_rng([seed, 17])
    flip = np.zeros(len(specs), dtype=bool)
    flip[rng.permutation(len(specs))[: len(specs) // 2]] = True
    out = []
    for spec, inv in zip(specs, flip):
        r, _ = generate(spec)
        if inv:
            r = r.negated()
        feats = record_features(r)
        if feats is not None:
            out.append((feats, bool(inv)))
    return out


_DEFAULT_PATH = Path(__file__).with_name("data") / "inversion_default.json"


def default_model() -> LogisticModel:
    """Inversion model shipped with the package (trained on synthetic records)."""
    return LogisticModel.load(_DEFAULT_PATH)


def build_default_model(seed: int = 0, n: int = 200) -> LogisticModel:
    return train_inversion(synthetic_training_set(n, seed))


def features_as_dict(f: InversionFeatures) -> dict:
    return asdict(f)
