"""End-to-end processing, stacked training, prediction and evaluation.

Record flow: beat detection, lead-inversion correction, abductive
interpretation, then global and per-beat features. Classification stacks a
boosted-tree model on the global features and three averaged recurrent nets on
the beat sequences under an LDA meta-classifier trained on out-of-fold
probabilities.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import features as F
from .detection import SignalViews, delineate, detect_beats
from .interpreter import interpret
from .inversion import LogisticModel, correct_inversion, default_model
from .ml import gbt as G
from .ml import lda as L
from .ml import sequence as S
from .ml.utils import seeded_rng, stratified_kfold, stratified_splits
from .record_io import CLASSES, Record

log = logging.getLogger("ecgc.pipeline")

BUNDLE_VERSION = 1
# probability column dropped from each level-0 model before the meta-classifier
DROPPED_CLASS = CLASSES.index("NOISE")
META_COLUMNS = tuple(i for i in range(len(CLASSES)) if i != DROPPED_CLASS)


# ---------------------------------------------------------------- records

@dataclass
class RecordFeatures:
    id: str
    globals: dict
    beats: np.ndarray          # (n_beats, len(BEAT_FEATURE_NAMES)); at least one row
    inverted: bool = False
    flagged: bool = False      # interpretation failed or found no beats
    error: str = ""

    def global_vector(self) -> np.ndarray:
        return F.global_vector(self.globals)


def _sentinel_features(rid, error="") -> RecordFeatures:
    g = {k: (0.0 if k in F.PROPORTION_FEATURES else float("nan")) for k in F.GLOBAL_FEATURE_NAMES}
    return RecordFeatures(rid, g, np.zeros((1, len(F.BEAT_FEATURE_NAMES))), False, True, error)


def interpret_record(r: Record, inversion_model: Optional[LogisticModel] = None) -> tuple:
    """Detection, polarity correction and interpretation.

    Returns ``(corrected record, signal views, Interpretation, inverted?)``.
    """
    m = inversion_model or default_model()
    views = SignalViews(r)
    obs = delineate(r, detect_beats(r, views), views)
    r2, inverted = correct_inversion(r, m, obs, views)
    if inverted:
        views = SignalViews(r2)
        obs = delineate(r2, detect_beats(r2, views), views)
    return r2, views, interpret(r2, obs, views), inverted


def process_record(r: Record, inversion_model: Optional[LogisticModel] = None) -> RecordFeatures:
    """Detect, correct polarity, interpret and featurize one record.

    Failures never raise: the record gets a sentinel feature row and is
    flagged, which pushes the classifiers toward NOISE.
    """
    try:
        r2, views, itp, inverted = interpret_record(r, inversion_model)
        if not itp.beats:
            out = _sentinel_features(r.id, "no beats")
            out.inverted = inverted
            return out
        g = F.global_features(r2, itp, views)
        X = F.beat_features(r2, itp, views)
        return RecordFeatures(r.id, g, X, inverted, bool(itp.flagged))
    except Exception as e:  # noqa: BLE001 - a single record must not stop a corpus run
        log.warning("%s: processing failed: %s", r.id, e)
        return _sentinel_features(r.id, f"{type(e).__name__}: {e}")


def _process_one(args):
    r, m = args
    return process_record(r, m)


def process_records(records, inversion_model=None, jobs: int = 1) -> list:
    """``process_record`` over many records; output order follows the input."""
    m = inversion_model or default_model()
    if jobs <= 1 or len(records) < 2:
        return [process_record(r, m) for r in records]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_process_one, [(r, m) for r in records], chunksize=4))


# ----------------------------------------------------------- imputation

def fit_imputation(rows: list) -> np.ndarray:
    """Column medians of the global feature matrix, ignoring NaN (0 for empty columns)."""
    X = np.array([rf.global_vector() for rf in rows])
    med = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        c = X[:, j]
        ok = np.isfinite(c)
        if ok.any():
            med[j] = float(np.median(c[ok]))
    return med


def impute(rows: list, medians: np.ndarray) -> np.ndarray:
    X = np.array([rf.global_vector() for rf in rows])
    bad = ~np.isfinite(X)
    X[bad] = np.broadcast_to(medians, X.shape)[bad]
    return X


# --------------------------------------------------------------- config

@dataclass(frozen=True)
class StackConfig:
    outer_folds: int = 6
    n_nets: int = 3
    val_fraction: float = 0.15
    gbt: G.GbtHyperParams = G.GbtHyperParams()
    seq: S.SeqHyperParams = S.SeqHyperParams()

    def to_json(self) -> dict:
        d = asdict(self)
        d["seq"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in d["seq"].items()}
        return d

    @classmethod
    def from_json(cls, d) -> "StackConfig":
        seq = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d["seq"].items()}
        return cls(d["outer_folds"], d["n_nets"], d["val_fraction"], G.GbtHyperParams(**d["gbt"]),
                   S.SeqHyperParams(**seq))


# Smaller recurrent nets and fewer epochs for desk-scale benchmarks.
FAST_SEQ = S.SeqHyperParams(mlp_hidden=64, embed=32, lstm_hidden=32, out_hidden=64,
                            max_epochs=24, early_stop=6, dtype="float32")
FAST_CONFIG = StackConfig(seq=FAST_SEQ)


# --------------------------------------------------------------- models

@dataclass
class StackedModel:
    inversion: LogisticModel
    gbt: G.GbtModel
    nets: list
    lda: L.LdaModel
    imputation: np.ndarray
    config: StackConfig
    metafeatures: Optional[np.ndarray] = None
    audit: list = field(default_factory=list)
    version: int = BUNDLE_VERSION

    def level0(self, rows: list) -> tuple:
        """GBT probabilities and averaged sequence-net probabilities."""
        X = impute(rows, self.imputation)
        pg = self.gbt.predict_proba(X)
        seqs = [rf.beats for rf in rows]
        ps = np.mean([n.predict_proba(seqs) for n in self.nets], axis=0)
        return pg, ps

    def predict_rows(self, rows: list) -> tuple:
        pg, ps = self.level0(rows)
        meta = metafeatures(pg, ps)
        return self.lda.predict(meta), self.lda.predict_proba(meta)


def metafeatures(p_gbt, p_seq) -> np.ndarray:
    return np.hstack([np.asarray(p_gbt)[:, META_COLUMNS], np.asarray(p_seq)[:, META_COLUMNS]])


def _labels_to_idx(labels) -> np.ndarray:
    return np.array([CLASSES.index(l) if isinstance(l, str) else int(l) for l in labels],
                    dtype=np.int64)


def _train_nets(rows, y, cfg: StackConfig, seed) -> list:
    """Sub-bagged recurrent nets, each with its own stratified validation split."""
    seqs = [rf.beats for rf in rows]
    splits = stratified_splits(y, cfg.n_nets, cfg.val_fraction, [seed, 11])
    nets = []
    for j, (_, held) in enumerate(splits):
        nets.append(S.seq_train(seqs, y, cfg.seq, seed=[seed, 12, j], val_idx=held))
    return nets


def _train_level0(rows, y, cfg: StackConfig, seed) -> tuple:
    med = fit_imputation(rows)
    gbt = G.gbt_train(impute(rows, med), y, cfg.gbt, seed=[seed, 10])
    nets = _train_nets(rows, y, cfg, seed)
    return med, gbt, nets


def _level0_proba(med, gbt, nets, rows) -> tuple:
    pg = gbt.predict_proba(impute(rows, med))
    seqs = [rf.beats for rf in rows]
    ps = np.mean([n.predict_proba(seqs) for n in nets], axis=0)
    return pg, ps


def train_stacked(rows: list, labels, seed: int = 0, config: StackConfig = StackConfig(),
                  inversion_model: Optional[LogisticModel] = None) -> StackedModel:
    """Out-of-fold stacking.

    Level-0 models are trained on each outer training split and predict the
    held-out split; the concatenated held-out probabilities (NOISE columns
    dropped) train the LDA. The level-0 models are then refit on all rows.
    """
    y = _labels_to_idx(labels)
    if len(rows) != y.size:
        raise ValueError("rows and labels differ in length")
    counts = np.bincount(y, minlength=len(CLASSES))
    if counts.min() < config.outer_folds:
        raise ValueError(f"every class needs at least {config.outer_folds} records, "
                         f"got {dict(zip(CLASSES, counts.tolist()))}")
    ids = [rf.id for rf in rows]
    folds = stratified_kfold(y, config.outer_folds, seeded_rng(seed, 20))
    pg = np.full((y.size, len(CLASSES)), np.nan)
    ps = np.full((y.size, len(CLASSES)), np.nan)
    audit = []
    for k, test in enumerate(folds):
        train = np.setdiff1d(np.arange(y.size), test)
        tr_ids = {ids[i] for i in train}
        te_ids = {ids[i] for i in test}
        disjoint = tr_ids.isdisjoint(te_ids)
        audit.append({"fold": k, "train": len(tr_ids), "test": len(te_ids), "disjoint": disjoint})
        if not disjoint:
            raise AssertionError(f"fold {k}: training and held-out ids overlap")
        log.info("stacking fold %d/%d (%d train, %d held out)", k + 1, len(folds), train.size,
                 test.size)
        med, gbt, nets = _train_level0([rows[i] for i in train], y[train], config, [seed, k])
        pg[test], ps[test] = _level0_proba(med, gbt, nets, [rows[i] for i in test])
    if np.isnan(pg).any() or np.isnan(ps).any():
        raise AssertionError("outer folds do not cover every record")
    meta = metafeatures(pg, ps)
    lda = L.lda_train(meta, y)
    log.info("refitting level-0 models on all %d records", y.size)
    med, gbt, nets = _train_level0(rows, y, config, [seed, 99])
    return StackedModel(inversion_model or default_model(), gbt, nets, lda, med, config, meta,
                        audit)


def predict(m: StackedModel, r: Record) -> tuple:
    """``(class name, posteriors)`` for one record."""
    rf = process_record(r, m.inversion)
    cls, post = m.predict_rows([rf])
    return CLASSES[int(cls[0])], post[0]


# ------------------------------------------------------------- evaluation

@dataclass
class EvaluationReport:
    confusion: np.ndarray      # rows truth, columns prediction, order N, A, O, NOISE
    f1: dict
    score: float

    def to_json(self) -> dict:
        return {"confusion": self.confusion.tolist(), "f1": self.f1, "score": self.score,
                "classes": list(CLASSES)}


def challenge_score(truth, predictions) -> EvaluationReport:
    """Per-class F1 and the mean F1 over N, A and O.

    A class absent from both truth and predictions has F1 = 1 (nothing to
    get wrong).
    """
    t = _labels_to_idx(truth)
    p = _labels_to_idx(predictions)
    if t.size == 0:
        raise ValueError("empty evaluation input")
    if t.size != p.size:
        raise ValueError("truth and predictions differ in length")
    C = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64)
    np.add.at(C, (t, p), 1)
    f1 = {}
    for i, c in enumerate(CLASSES):
        tp = C[i, i]
        denom = 2 * tp + (C[:, i].sum() - tp) + (C[i, :].sum() - tp)
        f1[c] = 1.0 if denom == 0 else float(2 * tp / denom)
    score = (f1["N"] + f1["A"] + f1["O"]) / 3.0
    return EvaluationReport(C, f1, score)


@dataclass
class CrossValidation:
    stacked: list
    gbt_only: list
    seq_only: list
    folds: list                # held-out ids per fold
    audits: list = field(default_factory=list)  # stacking audit of each fold's model

    @staticmethod
    def _summary(reports) -> tuple:
        s = np.array([r.score for r in reports])
        return float(s.mean()), float(s.std(ddof=1)) if s.size > 1 else 0.0

    def summary(self) -> dict:
        return {name: dict(zip(("mean", "sd"), self._summary(reps)))
                for name, reps in (("stacked", self.stacked), ("gbt", self.gbt_only),
                                   ("sequence", self.seq_only))}

    def to_json(self) -> dict:
        return {"folds": [{"fold": k + 1, "held_out": ids, "stacked": s.to_json(),
                           "gbt": g.to_json(), "sequence": q.to_json()}
                          for k, (ids, s, g, q) in enumerate(zip(self.folds, self.stacked,
                                                                  self.gbt_only, self.seq_only))],
                "summary": self.summary()}

    def table(self) -> str:
        """Fold scores as columns plus a mean (SD) column."""
        k = len(self.stacked)
        head = "model     " + "".join(f"{'F' + str(i + 1):>8}" for i in range(k)) + "   mean (SD)"
        lines = [head]
        for name, reps in (("stacked", self.stacked), ("gbt", self.gbt_only),
                           ("sequence", self.seq_only)):
            mean, sd = self._summary(reps)
            lines.append(f"{name:<10}" + "".join(f"{r.score:8.3f}" for r in reps)
                         + f"   {mean:.3f} ({sd:.3f})")
        return "\n".join(lines)


def cv_folds(ids, labels, k: int, seed: int) -> list:
    """Stratified folds keyed by sorted id, so input order does not matter."""
    y = _labels_to_idx(labels)
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    ys = y[order]
    counts = np.bincount(ys, minlength=len(CLASSES))
    if k > counts[counts > 0].min():
        raise ValueError(f"k={k} exceeds the smallest class count {counts[counts > 0].min()}")
    folds = stratified_kfold(ys, k, seeded_rng(seed, 30))
    return [[ids[order[i]] for i in sorted(f)] for f in folds]


def cross_validate(rows: list, labels, k: int = 8, seed: int = 0,
                   config: StackConfig = StackConfig(), inversion_model=None) -> CrossValidation:
    """Full stacked training and evaluation on each of ``k`` stratified folds."""
    ids = [rf.id for rf in rows]
    y = _labels_to_idx(labels)
    pos = {rid: i for i, rid in enumerate(ids)}
    folds = cv_folds(ids, y, k, seed)
    out = CrossValidation([], [], [], folds)
    for f, held in enumerate(folds):
        te = np.array([pos[i] for i in held])
        tr = np.setdiff1d(np.arange(len(rows)), te)
        log.info("cv fold %d/%d", f + 1, k)
        m = train_stacked([rows[i] for i in tr], y[tr], seed=seed + 1000 * (f + 1), config=config,
                          inversion_model=inversion_model)
        te_rows = [rows[i] for i in te]
        pg, ps = m.level0(te_rows)
        pred = m.lda.predict(metafeatures(pg, ps))
        out.audits.append(m.audit)
        out.stacked.append(challenge_score(y[te], pred))
        out.gbt_only.append(challenge_score(y[te], pg.argmax(axis=1)))
        out.seq_only.append(challenge_score(y[te], ps.argmax(axis=1)))
    return out


# ------------------------------------------------------------------ bundle

def _blob(path: Path, a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    path.write_bytes(a.tobytes())
    return {"file": path.name, "shape": list(a.shape),
            "sha256": hashlib.sha256(a.tobytes()).hexdigest()}


def _unblob(directory: Path, entry: dict) -> np.ndarray:
    raw = (directory / entry["file"]).read_bytes()
    return np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).astype(np.float64)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_bundle(m: StackedModel, directory) -> Path:
    """Write a versioned model directory: JSON manifests plus float64 blobs."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "inversion.json").write_text(_dump(m.inversion.to_json()))
    (d / "gbt.json").write_text(_dump(m.gbt.to_json()))
    (d / "lda.json").write_text(_dump(m.lda.to_json()))
    nets = []
    for j, net in enumerate(m.nets):
        meta, arrays = S.model_state(net)
        meta["arrays"] = {k: _blob(d / f"net{j}.{k}.f64", v) for k, v in sorted(arrays.items())}
        nets.append(meta)
    manifest = {
        "format_version": m.version,
        "classes": list(CLASSES),
        "dropped_class": CLASSES[DROPPED_CLASS],
        "config": m.config.to_json(),
        "imputation": _blob(d / "imputation.f64", m.imputation),
        "global_features": list(F.GLOBAL_FEATURE_NAMES),
        "beat_features": list(F.BEAT_FEATURE_NAMES),
        "nets": nets,
        "audit": m.audit,
    }
    (d / "manifest.json").write_text(_dump(manifest))
    return d


def load_bundle(directory) -> StackedModel:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    if man.get("format_version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {man.get('format_version')}")
    if man["classes"] != list(CLASSES):
        raise ValueError("bundle class order does not match")
    if man["global_features"] != list(F.GLOBAL_FEATURE_NAMES) or \
            man["beat_features"] != list(F.BEAT_FEATURE_NAMES):
        raise ValueError("bundle feature layout does not match this version")
    nets = [S.model_from_state(meta, {k: _unblob(d, e) for k, e in meta["arrays"].items()})
            for meta in man["nets"]]
    return StackedModel(
        LogisticModel.from_json(json.loads((d / "inversion.json").read_text())),
        G.GbtModel.from_json(json.loads((d / "gbt.json").read_text())),
        nets,
        L.LdaModel.from_json(json.loads((d / "lda.json").read_text())),
        _unblob(d, man["imputation"]),
        StackConfig.from_json(man["config"]),
        None,
        man.get("audit", []),
    )


def bundle_digest(directory) -> str:
    """SHA-256 over every file of a bundle, in name order."""
    h = hashlib.sha256()
    for p in sorted(Path(directory).iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()
