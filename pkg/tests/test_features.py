import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgc import features as F
from ecgc.detection import SignalViews
from ecgc.interpreter import interpret
from ecgc.record_io import Record
from ecgc.synthgen import GenSpec, generate

from conftest import observe


def _analyse(r):
    v, obs = observe(r)
    itp = interpret(r, obs, v)
    return v, itp


# ------------------------------------------------------------ primitives

def test_profile_examples():
    assert F.profile([0, 1, 0, 1]) == 3.0
    assert F.profile([5.0] * 7) == 0.0
    with pytest.raises(ValueError):
        F.profile([1.0])


def test_mad_examples():
    assert F.mad([1, 2, 3, 4, 100]) == 1.0
    assert F.mad([3.0] * 4) == 0.0
    assert F.mad([7.0]) == 0.0
    with pytest.raises(ValueError):
        F.mad([])


def test_pnn_example():
    rr = [800, 860, 805, 900]
    assert F.pnn(rr, 50) == 1.0
    assert F.pnn(rr, 100) == 0.0
    assert F.pnn([800], 50) == 0.0


def test_qtc_examples():
    assert F.qt_corrected(400, 1000) == 400.0
    assert F.qt_corrected(400, 640) == pytest.approx(500.0, rel=1e-12)
    with pytest.raises(ValueError):
        F.qt_corrected(400, 0)


def test_max_xcorr_examples(rng):
    a = rng.standard_normal(60)
    assert F.max_xcorr(a, a) == pytest.approx(1.0, abs=1e-12)
    assert F.max_xcorr(a, -a) < 1.0
    b = np.concatenate([np.zeros(5), a])[:60]
    # shifted copy; overlap excludes the zero pad
    assert F.max_xcorr(a[:55], b[5:60]) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        F.max_xcorr(np.ones(5), a)


def test_rr_irregularity_examples():
    assert F.rr_irregularity([800.0] * 20) == (0.0, 0.0)
    assert all(math.isnan(v) for v in F.rr_irregularity([800.0] * 8))
    alt = [600.0, 1000.0] * 8
    med, mx = F.rr_irregularity(alt)
    # in an alternating series every length-1 match extends to length 2: entropy 0
    assert med == 0.0 and mx == 0.0


def test_tp_spectral_tone_and_noise():
    fs = 300
    t = np.arange(3000) / fs
    tone = np.sin(2 * np.pi * 7.0 * t)
    wins = [(100 + 300 * k, 200 + 300 * k) for k in range(8)]
    f0, h_tone = F.tp_spectral(tone, fs, wins)
    assert abs(f0 - 7.0) <= 0.6
    noise = np.random.default_rng(3).standard_normal(3000)
    _, h_noise = F.tp_spectral(noise, fs, wins)
    assert h_noise > h_tone
    assert all(math.isnan(v) for v in F.tp_spectral(np.zeros(3000), fs, wins))
    assert all(math.isnan(v) for v in F.tp_spectral(tone, fs, [(0, 30)]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(300, 2000), min_size=2, max_size=50))
def test_pnn_monotone(rr):
    assert F.pnn(rr, 10) >= F.pnn(rr, 50) >= F.pnn(rr, 100)


# ------------------------------------------------------------ record level

def test_global_exact_800ms_normal():
    r, _ = generate(GenSpec(rhythm="NORMAL", rate_bpm=75.0, rr_jitter_pct=0.0, noise_snr_db=60.0,
                            seed=1, duration_s=20.0))
    v, itp = _analyse(r)
    g = F.global_features(r, itp, v)
    assert list(g) == list(F.GLOBAL_FEATURE_NAMES) and len(g) == 42
    assert g["tSR"] == 1.0
    assert g["RR"] == pytest.approx(800.0)
    assert g["RRd"] == 0.0 and g["PNN50"] == 0.0 and g["MRRd"] == 0.0
    assert g["o_PNN50"] == 0.0 and math.isnan(g["o_mRR"])


def test_one_wide_qrs_in_ten():
    r, _ = generate(GenSpec(rhythm="NORMAL", rate_bpm=75.0, rr_jitter_pct=0.0, seed=2,
                            duration_s=8.2))
    v, itp = _analyse(r)
    assert len(itp.beats) == 10
    b = itp.beats[4]
    b.qrs.offset = b.qrs.onset + int(round(0.120 * r.fs))
    assert F.global_features(r, itp, v)["wQRS"] == pytest.approx(0.1)


@pytest.mark.parametrize("rhythm,kw", [
    ("NORMAL", {}), ("AFIB", {"p_present": False, "cls": "A"}),
    ("BIGEMINY", {"cls": "O"}), ("EXTRASYSTOLE", {"cls": "O"}),
])
def test_global_invariants(rhythm, kw):
    r, _ = generate(GenSpec(rhythm=rhythm, seed=6, duration_s=25.0, **kw))
    v, itp = _analyse(r)
    g = F.global_features(r, itp, v)
    for k, val in g.items():
        assert math.isfinite(val) or (math.isnan(val) and k not in F.PROPORTION_FEATURES), k
    assert g["PNN10"] >= g["PNN50"] >= g["PNN100"]
    for k in F.PROPORTION_FEATURES:
        assert 0.0 <= g[k] <= 1.0
    if math.isfinite(g["RR"]):
        rr = np.diff([b.fiducial for b in itp.beats]) * 1000.0 / r.fs
        assert g["mRR"] <= g["RR"] <= rr.max()
    assert 0.0 <= g["Psmooth"] <= F.PSMOOTH_CAP or math.isnan(g["Psmooth"])


def test_scale_covariance():
    r, _ = generate(GenSpec(rhythm="NORMAL", seed=13, duration_s=20.0, r_amp_mv=1.0))
    r2 = r.with_samples(r.samples.astype(np.int32) * 2)
    v1, i1 = _analyse(r)
    v2, i2 = _analyse(r2)
    assert [b.fiducial for b in i1.beats] == [b.fiducial for b in i2.beats]
    g1 = F.global_features(r, i1, v1)
    g2 = F.global_features(r2, i2, v2)
    for k in F.AMPLITUDE_FEATURES:
        if math.isfinite(g1[k]):
            assert g2[k] == pytest.approx(2.0 * g1[k], rel=1e-6), k
    for k in ("tSR", "RR", "RRd", "mRR", "PNN50", "n_nP", "nT", "wQRS", "n_PR", "QT"):
        assert g2[k] == pytest.approx(g1[k], rel=1e-9, nan_ok=True), k


# ------------------------------------------------------------- beat level

def test_beat_features_shape_and_imputation(afib_record):
    r, _ = afib_record
    v, itp = _analyse(r)
    X = F.beat_features(r, itp, v)
    assert X.shape == (len(itp.beats), len(F.BEAT_FEATURE_NAMES))
    assert np.isfinite(X).all()
    col = {n: i for i, n in enumerate(F.BEAT_FEATURE_NAMES)}
    assert X[0, col["rr_ms"]] == pytest.approx(np.median(X[1:, col["rr_ms"]]))
    kinds = itp.beat_kinds()
    for i, k in enumerate(kinds):
        assert X[i, col["rhythm_" + k]] == 1.0
    assert "AFIB" in kinds
    onehot = [c for n, c in col.items() if n.startswith("rhythm_")]
    assert np.all(X[:, onehot].sum(axis=1) == 1.0)


def test_beat_features_empty_interpretation():
    r = Record("flat", 300, 1000.0, np.zeros(3000))
    itp = interpret(r, [])
    assert F.beat_features(r, itp, SignalViews(r)).shape == (0, len(F.BEAT_FEATURE_NAMES))
    g = F.global_features(r, itp, SignalViews(r))
    assert g["tSR"] == 0.0


def test_exports(tmp_path, normal_record):
    r, _ = normal_record
    v, itp = _analyse(r)
    g = F.global_features(r, itp, v)
    F.write_global_csv([(r.id, g)], tmp_path / "g.csv")
    head, row = (tmp_path / "g.csv").read_text().splitlines()
    assert head.split(",") == ["id"] + list(F.GLOBAL_FEATURE_NAMES)
    assert row.split(",")[0] == r.id
    F.write_beat_jsonl([(r.id, F.beat_features(r, itp, v))], tmp_path / "b.jsonl")
    assert (tmp_path / "b.jsonl").read_text().count("\n") == 1
