import math

import numpy as np
import pytest

from ecgc import pipeline as P
from ecgc.ml.gbt import GbtHyperParams
from ecgc.record_io import CLASSES
from ecgc.synthgen import GenSpec, corpus_specs, generate, generate_corpus

TINY = P.StackConfig(gbt=GbtHyperParams(rounds=5),
                     seq=P.FAST_SEQ.scaled(mlp_hidden=8, embed=8, lstm_hidden=4, out_hidden=8,
                                           max_epochs=2))


@pytest.fixture(scope="module")
def small():
    corpus = generate_corpus(8, 41, duration_range=(10.0, 14.0))
    rows = P.process_records([r for r, _ in corpus])
    return rows, [r.label for r, _ in corpus]


# ------------------------------------------------------------- processing

def test_clean_normal_fully_regular():
    r, _ = generate(GenSpec(rhythm="NORMAL", seed=2, duration_s=20.0))
    rf = P.process_record(r)
    assert rf.globals["tSR"] == 1.0 and not rf.flagged and not rf.inverted


def test_negated_twin_matches_upright():
    r, _ = generate(GenSpec(rhythm="NORMAL", seed=3, duration_s=20.0))
    a = P.process_record(r)
    b = P.process_record(r.negated())
    assert b.inverted and not a.inverted
    va, vb = a.global_vector(), b.global_vector()
    assert np.allclose(va, vb, rtol=1e-6, atol=1e-6, equal_nan=True)
    assert np.allclose(a.beats, b.beats, rtol=1e-6, atol=1e-6)


def test_two_second_record_is_classified():
    r, _ = generate(GenSpec(rhythm="NORMAL", seed=4, duration_s=2.0))
    rf = P.process_record(r)
    assert math.isnan(rf.globals["RR_Irr"])
    assert rf.beats.shape[0] >= 1


def test_failures_become_flagged_sentinels():
    from ecgc.record_io import Record

    rf = P.process_record(Record("tiny", 300, 1000.0, np.zeros(100)))
    assert rf.flagged and rf.error and rf.beats.shape == (1, rf.beats.shape[1])
    assert rf.globals["tSR"] == 0.0


def test_imputation_uses_training_medians(small):
    rows, _ = small
    med = P.fit_imputation(rows)
    X = P.impute(rows, med)
    assert np.isfinite(X).all()
    raw = np.array([rf.global_vector() for rf in rows])
    ok = np.isfinite(raw)
    assert np.array_equal(X[ok], raw[ok])


# ---------------------------------------------------------------- stacking

def test_train_stacked_bookkeeping_and_audit(small):
    rows, labels = small
    m = P.train_stacked(rows, labels, seed=1, config=TINY)
    assert m.metafeatures.shape == (len(rows), 6)
    assert len(m.audit) == TINY.outer_folds and all(a["disjoint"] for a in m.audit)
    assert sum(a["test"] for a in m.audit) == len(rows)
    cls, post = m.predict_rows(rows[:5])
    assert np.allclose(post.sum(axis=1), 1.0)
    assert len(m.nets) == 3


def test_too_few_records_per_class(small):
    rows, labels = small
    keep = [i for i, l in enumerate(labels) if l != "A"][:]
    keep += [i for i, l in enumerate(labels) if l == "A"][:5]
    with pytest.raises(ValueError, match="at least 6"):
        P.train_stacked([rows[i] for i in keep], [labels[i] for i in keep], config=TINY)


def test_same_seed_identical_bundle(small, tmp_path):
    rows, labels = small
    a = P.train_stacked(rows, labels, seed=5, config=TINY)
    b = P.train_stacked(rows, labels, seed=5, config=TINY)
    P.save_bundle(a, tmp_path / "a")
    P.save_bundle(b, tmp_path / "b")
    assert P.bundle_digest(tmp_path / "a") == P.bundle_digest(tmp_path / "b")
    c = P.load_bundle(tmp_path / "a")
    P.save_bundle(c, tmp_path / "c")
    assert P.bundle_digest(tmp_path / "a") == P.bundle_digest(tmp_path / "c")
    assert np.array_equal(a.predict_rows(rows)[1], c.predict_rows(rows)[1])


def test_bundle_blobs_are_little_endian_float64(small, tmp_path):
    rows, labels = small
    m = P.train_stacked(rows, labels, seed=6, config=TINY)
    P.save_bundle(m, tmp_path / "m")
    raw = (tmp_path / "m" / "imputation.f64").read_bytes()
    assert np.array_equal(np.frombuffer(raw, dtype="<f8"), m.imputation)


# -------------------------------------------------------------- evaluation

def test_challenge_score_examples():
    rep = P.challenge_score(["N", "N", "A", "O"], ["N", "A", "A", "O"])
    assert rep.f1["N"] == pytest.approx(2 / 3) and rep.f1["A"] == pytest.approx(2 / 3)
    assert rep.f1["O"] == 1.0 and rep.score == pytest.approx(7 / 9)
    perfect = P.challenge_score(list(CLASSES), list(CLASSES))
    assert perfect.score == 1.0 and all(v == 1.0 for v in perfect.f1.values())
    assert P.challenge_score(["N", "A", "O"], ["NOISE"] * 3).score == 0.0
    with pytest.raises(ValueError):
        P.challenge_score([], [])


def test_challenge_score_permutation_invariant():
    rng = np.random.default_rng(0)
    t = rng.integers(0, 4, 50)
    p = rng.integers(0, 4, 50)
    perm = rng.permutation(50)
    assert P.challenge_score(t, p).score == P.challenge_score(t[perm], p[perm]).score


def test_cv_folds_stratified_and_order_free():
    specs = corpus_specs(16, 9)
    ids = [s.record_id for s, _ in specs]
    labels = [s.cls for s, _ in specs]
    folds = P.cv_folds(ids, labels, 8, 3)
    assert len(folds) == 8
    lab = dict(zip(ids, labels))
    for f in folds:
        for c in CLASSES:
            assert abs(sum(lab[i] == c for i in f) - 16 / 8) <= 1
    perm = np.random.default_rng(1).permutation(len(ids))
    assert P.cv_folds([ids[i] for i in perm], [labels[i] for i in perm], 8, 3) == folds
    with pytest.raises(ValueError):
        P.cv_folds(ids, labels, 17, 3)


def test_cross_validate_small(small):
    rows, labels = small
    cfg = P.StackConfig(outer_folds=2, gbt=TINY.gbt, seq=TINY.seq)
    cv = P.cross_validate(rows, labels, k=2, seed=0, config=cfg)
    assert len(cv.stacked) == len(cv.gbt_only) == len(cv.seq_only) == 2
    held = [i for f in cv.folds for i in f]
    assert sorted(held) == sorted(rf.id for rf in rows)
    table = cv.table().splitlines()
    assert table[0].split()[1:3] == ["F1", "F2"] and len(table) == 4
    assert set(cv.summary()) == {"stacked", "gbt", "sequence"}


# ------------------------------------------------------------ trained model

@pytest.fixture(scope="module")
def trained():
    corpus = generate_corpus(40, 17, duration_range=(15.0, 25.0))
    rows = P.process_records([r for r, _ in corpus])
    return P.train_stacked(rows, [r.label for r, _ in corpus], seed=2, config=P.FAST_CONFIG)


@pytest.mark.slow
def test_afib_and_noise_records_classified(trained):
    af, noise = [], []
    for k in range(50):
        r, _ = generate(GenSpec(cls="A", rhythm="AFIB", p_present=False, seed=9000 + k,
                                rate_bpm=float(75 + k % 50), duration_s=20.0))
        cls, post = P.predict(trained, r)
        af.append(cls == "A" and post[CLASSES.index("A")] > 0.5)
        r, _ = generate(GenSpec(cls="NOISE", rhythm="NORMAL", seed=9500 + k, noise_snr_db=-5.0,
                                noise_only=bool(k % 3 == 0), duration_s=20.0))
        noise.append(P.predict(trained, r)[0] == "NOISE")
        assert abs(post.sum() - 1.0) < 1e-9
    assert np.mean(af) >= 0.9
    assert np.mean(noise) > 0.5
