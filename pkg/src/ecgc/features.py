"""Global (record-level) and per-beat features computed from an interpretation."""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .taxonomy import MORPHOLOGY_TAGS, REGULAR_KINDS, RHYTHM_KINDS

SAMPEN_M = 1
SAMPEN_R_MS = 30.0
SAMPEN_WINDOW = 8
# sentinel for windows without template matches: log of the window's pair count
SAMPEN_CAP = math.log(28.0)


def profile(x) -> float:
    """Sum of absolute first differences."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("profile needs at least two samples")
    return float(np.abs(np.diff(x)).sum())


def mad(x) -> float:
    """Median absolute deviation from the median."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("mad of an empty sequence")
    return float(np.median(np.abs(x - np.median(x))))


def pnn(rr_ms, threshold_ms: float) -> float:
    """Fraction of successive RR differences strictly above ``threshold_ms``."""
    d = np.abs(np.diff(np.asarray(rr_ms, dtype=np.float64)))
    if d.size == 0:
        return 0.0
    return float(np.count_nonzero(d > threshold_ms) / d.size)


def qt_corrected(qt_ms: float, rr_ms: float) -> float:
    """Bazett-corrected QT."""
    if not rr_ms > 0:
        raise ValueError("RR interval must be positive")
    return float(qt_ms / math.sqrt(rr_ms / 1000.0))


def rr_irregularity(rr_ms):
    """Median and maximum sample entropy over 8-interval sliding windows.

    Uses m=1 and a 30 ms tolerance. Series shorter than nine intervals give
    ``(nan, nan)``.
    """
    rr = np.ascontiguousarray(rr_ms, dtype=np.float64)
    if rr.size < SAMPEN_WINDOW + 1:
        return float("nan"), float("nan")
    ent = kernels.sampen_windows(rr, SAMPEN_WINDOW, SAMPEN_M, SAMPEN_R_MS, SAMPEN_CAP)
    return float(np.median(ent)), float(np.max(ent))


def local_irregularity(rr_ms) -> float:
    """Median sample entropy for short groups; whole series is one window when < 8."""
    rr = np.ascontiguousarray(rr_ms, dtype=np.float64)
    if rr.size < 3:
        return float("nan")
    width = min(SAMPEN_WINDOW, rr.size)
    ent = kernels.sampen_windows(rr, width, SAMPEN_M, SAMPEN_R_MS, SAMPEN_CAP)
    return float(np.median(ent))


def max_xcorr(a, b, min_overlap: float = 0.5) -> float:
    """Maximum Pearson correlation between ``a`` and ``b`` over all lags.

    At each lag the coefficient is computed on the overlapping part only, and
    lags whose overlap is shorter than ``min_overlap`` of the shorter input
    (or is constant on either side) are skipped.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, m = a.size, b.size
    if n < 2 or m < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValueError("max_xcorr needs two non-constant waveforms")
    need = max(2, int(math.ceil(min_overlap * min(n, m))))
    # shift s aligns a[i] with b[i - s]; s ranges over -(m-1)..(n-1)
    sab = np.correlate(a, b, mode="full")
    shifts = np.arange(-(m - 1), n)
    a_lo = np.maximum(0, shifts)
    a_hi = np.minimum(n, shifts + m)
    b_lo = a_lo - shifts
    b_hi = a_hi - shifts
    cnt = a_hi - a_lo
    ca = np.concatenate(([0.0], np.cumsum(a)))
    ca2 = np.concatenate(([0.0], np.cumsum(a * a)))
    cb = np.concatenate(([0.0], np.cumsum(b)))
    cb2 = np.concatenate(([0.0], np.cumsum(b * b)))
    sa = ca[a_hi] - ca[a_lo]
    sa2 = ca2[a_hi] - ca2[a_lo]
    sb = cb[b_hi] - cb[b_lo]
    sb2 = cb2[b_hi] - cb2[b_lo]
    va = sa2 - sa * sa / cnt
    vb = sb2 - sb * sb / cnt
    cov = sab - sa * sb / cnt
    scale_a = np.maximum(np.abs(sa2), 1.0) * 1e-12
    scale_b = np.maximum(np.abs(sb2), 1.0) * 1e-12
    ok = (cnt >= need) & (va > scale_a) & (vb > scale_b)
    if not ok.any():
        return 0.0
    r = cov[ok] / np.sqrt(va[ok] * vb[ok])
    return float(np.clip(r.max(), -1.0, 1.0))


def tp_spectral(x, fs, windows, nfft: int = 256, band=(0.5, 40.0)):
    """Median prevailing frequency and spectral entropy over TP windows.

    ``windows`` are ``(start, stop)`` sample ranges. Each window is mean
    removed, Hann tapered and zero padded to ``nfft`` (or the next power of two
    if longer). Returns ``(nan, nan)`` with fewer than 64 TP samples in total
    or when every window is flat.
    """
    x = np.asarray(x, dtype=np.float64)
    segs = [x[max(0, int(lo)):int(hi)] for lo, hi in windows if int(hi) - int(lo) >= 8]
    if sum(s.size for s in segs) < 64:
        return float("nan"), float("nan")
    freqs_out, ent_out = [], []
    for seg in segs:
        seg = seg - seg.mean()
        size = max(nfft, 1 << int(math.ceil(math.log2(seg.size))))
        spec = np.abs(np.fft.rfft(seg * np.hanning(seg.size), n=size)) ** 2
        f = np.fft.rfftfreq(size, d=1.0 / fs)
        sel = (f >= band[0]) & (f <= band[1])
        p = spec[sel]
        total = p.sum()
        if not total > 0:
            continue
        freqs_out.append(f[sel][int(np.argmax(p))])
        q = p / total
        q = q[q > 0]
        ent_out.append(float(-(q * np.log(q)).sum()))
    if not freqs_out:
        return float("nan"), float("nan")
    return float(np.median(freqs_out)), float(np.median(ent_out))


# ------------------------------------------------------------ record level

GLOBAL_FEATURE_NAMES = (
    "tSR", "t1b", "tOR", "longTch", "RR", "RRd_std", "RRd", "MRRd", "RR_MIrr", "RR_Irr",
    "PNN10", "PNN50", "PNN100", "o_PNN50", "mRR", "o_mRR", "n_nP", "n_aT", "n_PR", "Psmooth",
    "Pdistd", "MPdist", "prof", "pw_profd", "xcorr", "o_xcorr", "PRd", "QT", "TP", "TPfreq",
    "pw_prof", "nT", "n_Txcorr", "n_Pxcorr", "baseline", "o_baseline", "wQRS", "wQRS_xc",
    "wQRS_prof", "w_PR", "x_xc", "x_rrel",
)
# fields that are fractions; they read 0 when their population is empty
PROPORTION_FEATURES = frozenset({"tSR", "n_nP", "nT", "wQRS", "w_PR", "PNN10", "PNN50",
                                 "PNN100", "o_PNN50"})
# fields measured in signal units (mV, or mV per second for profiles)
AMPLITUDE_FEATURES = frozenset({"n_aT", "prof", "pw_profd", "pw_prof", "baseline",
                                "o_baseline", "wQRS_prof"})
WIDE_QRS_MS = 110.0
LONG_PR_MS = 210.0
TACHY_RR_MS = 600.0
PSMOOTH_CAP = 100.0
BASELINE_MEDIAN_MS = 200.0
WIDE_PRE_MS = 300.0
ECTOPIC_KINDS = frozenset({"EXTRASYSTOLE", "COUPLET"})
GEMINAL_KINDS = frozenset({"BIGEMINY", "TRIGEMINY"})


def _median(v) -> float:
    return float(np.median(v)) if len(v) else float("nan")


def _wave(y, onset, offset):
    return y[max(0, onset):offset + 1]


def _xcorr_consecutive(waves) -> float:
    """Median max cross-correlation of consecutive pairs of waveforms."""
    vals = []
    for a, b in zip(waves[:-1], waves[1:]):
        if a.size >= 2 and b.size >= 2 and np.ptp(a) > 0 and np.ptp(b) > 0:
            vals.append(max_xcorr(a, b))
    return _median(vals)


def _runs(mask):
    """(start, stop) of maximal runs of True in ``mask``."""
    out = []
    start = None
    for i, m in enumerate(mask):
        if m and start is None:
            start = i
        elif not m and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def _pnn_runs(rr, mask, threshold) -> float:
    """PNN over successive differences taken only inside runs of ``mask``."""
    d = []
    for a, b in _runs(mask):
        d.extend(np.abs(np.diff(rr[a:b])).tolist())
    if not d:
        return 0.0
    return float(np.count_nonzero(np.asarray(d) > threshold) / len(d))


def ectopic_beats(itp) -> list:
    """Indices of ectopic beats: extrasystole/couplet members and advanced geminal beats."""
    beats = itp.beats
    fs = itp.fs
    out = set()
    f = np.array([b.fiducial for b in beats], dtype=np.float64)
    for s in itp.segments:
        if s.kind in ECTOPIC_KINDS:
            out.update(s.member_beats)
        elif s.kind in GEMINAL_KINDS:
            for i in s.member_beats:
                if 1 <= i < len(beats) - 1:
                    before = (f[i] - f[i - 1]) * 1000.0 / fs
                    after = (f[i + 1] - f[i]) * 1000.0 / fs
                    if before < 0.85 * after:
                        out.add(i)
    return sorted(out)


def tp_windows(beats, fs, n):
    """TP intervals: from each T end (or QRS end + 60 ms) to the next P onset (or QRS onset - 40 ms)."""
    ms = fs / 1000.0
    out = []
    for a, b in zip(beats[:-1], beats[1:]):
        lo = a.t.offset + 1 if a.t.present else a.qrs.offset + int(round(60 * ms))
        hi = b.p.onset if b.p.present else b.qrs.onset - int(round(40 * ms))
        lo, hi = max(0, lo), min(n, hi)
        out.append((lo, hi) if hi > lo else (lo, lo))
    return out


def _baseline(x, fs):
    from scipy import ndimage

    k = max(3, int(round(BASELINE_MEDIAN_MS * fs / 1000.0)) | 1)
    return ndimage.median_filter(x, size=k, mode="nearest")


def _p_smooth(y, p) -> float:
    d = np.diff(_wave(y, p.onset, p.offset))
    if d.size < 2:
        return float("nan")
    mu = abs(float(d.mean()))
    sd = float(d.std())
    if mu == 0.0:
        return PSMOOTH_CAP if sd > 0 else 0.0
    return float(min(PSMOOTH_CAP, sd / mu))


def _signal_views(r):
    from .detection import SignalViews

    return SignalViews(r)


def global_features(r, itp, views=None) -> dict:
    """The 42 record-level features as an ordered ``{name: value}`` mapping.

    Undefined continuous fields are NaN (imputed at model-fit time);
    undefined proportions are 0.
    """
    views = views or _signal_views(r)
    y = views.clean
    fs = float(r.fs)
    n = r.samples.size
    dur_s = n / fs
    ms = 1000.0 / fs
    beats = itp.beats
    kinds = itp.beat_kinds()
    reg = np.array([k in REGULAR_KINDS for k in kinds], dtype=bool)
    nb = len(beats)
    out = dict.fromkeys(GLOBAL_FEATURE_NAMES, float("nan"))
    for k in PROPORTION_FEATURES:
        out[k] = 0.0

    reg_samples = sum(s.end - s.start for s in itp.segments if s.kind in REGULAR_KINDS)
    out["tSR"] = reg_samples / n if n else 0.0
    out["tOR"] = (sum(s.end - s.start for s in itp.segments if s.kind not in REGULAR_KINDS) * ms)
    out["t1b"] = beats[0].fiducial * ms if beats else n * ms
    x = r.mv()
    out["prof"] = profile(x) / dur_s if x.size >= 2 else 0.0
    base = _baseline(x, fs)
    reg_mask = np.zeros(n, dtype=bool)
    for s in itp.segments:
        if s.kind in REGULAR_KINDS:
            reg_mask[s.start:s.end] = True
    for key, mask in (("baseline", reg_mask), ("o_baseline", ~reg_mask)):
        segs = _runs(mask)
        tot, secs = 0.0, 0.0
        for a, b in segs:
            if b - a >= 2:
                tot += profile(base[a:b])
                secs += (b - a) / fs
        out[key] = tot / secs if secs > 0 else float("nan")
    if nb == 0:
        return out

    fid = np.array([b.fiducial for b in beats], dtype=np.float64)
    rr = np.diff(fid) * ms
    # RR k ends at beat k + 1; it belongs to a rhythm when both ends do
    rr_reg = reg[1:] & reg[:-1] if nb > 1 else np.zeros(0, dtype=bool)
    rr_non = ~reg[1:] & ~reg[:-1] if nb > 1 else np.zeros(0, dtype=bool)
    if rr.size:
        out["PNN10"] = pnn(rr, 10.0)
        out["PNN50"] = pnn(rr, 50.0)
        out["PNN100"] = pnn(rr, 100.0)
        out["o_PNN50"] = _pnn_runs(rr, rr_non, 50.0)
        if rr.size >= 2:
            out["RRd_std"] = float(np.std(np.diff(rr)))
        out["RR_Irr"], out["RR_MIrr"] = rr_irregularity(rr)
        fast = rr < TACHY_RR_MS
        out["longTch"] = max((float(rr[a:b].sum()) for a, b in _runs(fast)), default=0.0)
        if rr_reg.any():
            rr_r = rr[rr_reg]
            out["RR"] = float(np.median(rr_r))
            out["RRd"] = mad(rr_r)
            out["mRR"] = float(rr_r.min())
            diffs = [np.abs(np.diff(rr[a:b])) for a, b in _runs(rr_reg) if b - a >= 2]
            diffs = np.concatenate(diffs) if diffs else np.zeros(0)
            out["MRRd"] = float(diffs.max()) if diffs.size else 0.0
        if rr_non.any():
            out["o_mRR"] = float(rr[rr_non].min())

    p_on = [b.p.present for b in beats]
    if reg.any():
        out["n_nP"] = float(np.mean([p_on[i] for i in np.flatnonzero(reg)]))
        out["n_aT"] = _median([beats[i].t.amplitude for i in np.flatnonzero(reg) if beats[i].t.present])
        out["n_PR"] = _median([(beats[i].qrs.onset - beats[i].p.onset) * ms
                               for i in np.flatnonzero(reg) if beats[i].p.present])
    pr_all = [(b.qrs.onset - b.p.onset) * ms for b in beats if b.p.present]
    out["PRd"] = mad(pr_all) if pr_all else float("nan")
    out["w_PR"] = float(np.mean([pr > LONG_PR_MS for pr in
                                 [(b.qrs.onset - b.p.onset) * ms if b.p.present else 0.0
                                  for b in beats]]))
    out["Psmooth"] = _median([v for v in (_p_smooth(y, b.p) for b in beats if b.p.present)
                              if math.isfinite(v)])
    scores = [b.p_score for b in beats]
    out["Pdistd"] = mad(scores)
    out["MPdist"] = float(max(scores))
    pw = [profile(y[b.p_window[0]:b.p_window[1]]) for b in beats
          if b.p_window[1] - b.p_window[0] >= 2]
    if pw:
        out["pw_prof"] = float(np.median(pw))
        out["pw_profd"] = mad(pw)

    qrs = [_wave(y, b.qrs.onset, b.qrs.offset) for b in beats]
    for key, sel in (("xcorr", reg), ("o_xcorr", ~reg)):
        pairs = []
        for a, b in _runs(sel):
            for i in range(a, b - 1):
                u, w = qrs[i], qrs[i + 1]
                if u.size >= 2 and w.size >= 2 and np.ptp(u) > 0 and np.ptp(w) > 0:
                    pairs.append(max_xcorr(u, w))
        out[key] = _median(pairs)
    for key, attr in (("n_Txcorr", "t"), ("n_Pxcorr", "p")):
        pairs = []
        for a, b in _runs(reg):
            for i in range(a, b - 1):
                wa, wb = getattr(beats[i], attr), getattr(beats[i + 1], attr)
                if wa.present and wb.present:
                    u, w = _wave(y, wa.onset, wa.offset), _wave(y, wb.onset, wb.offset)
                    if u.size >= 2 and w.size >= 2 and np.ptp(u) > 0 and np.ptp(w) > 0:
                        pairs.append(max_xcorr(u, w))
        out[key] = _median(pairs)

    med_rr = float(np.median(rr)) if rr.size else float("nan")
    qtc = []
    for i, b in enumerate(beats):
        if b.t.present:
            rr_i = rr[i - 1] if i >= 1 else med_rr
            if math.isfinite(rr_i) and rr_i > 0:
                qtc.append(qt_corrected((b.t.offset - b.qrs.onset) * ms, rr_i))
    out["QT"] = _median(qtc)
    out["TP"], out["TPfreq"] = tp_spectral(y, fs, tp_windows(beats, fs, n))
    out["nT"] = float(np.mean([b.t.present for b in beats]))

    wide = [i for i, b in enumerate(beats) if b.qrs.duration_ms(fs) > WIDE_QRS_MS]
    out["wQRS"] = len(wide) / nb
    if wide:
        out["wQRS_xc"] = _xcorr_consecutive([qrs[i] for i in wide]) if len(wide) >= 2 else float("nan")
        pre = int(round(WIDE_PRE_MS / ms))
        profs = [profile(x[max(0, beats[i].qrs.onset - pre):beats[i].qrs.onset])
                 for i in wide if beats[i].qrs.onset - max(0, beats[i].qrs.onset - pre) >= 2]
        out["wQRS_prof"] = _median(profs)
    ect = ectopic_beats(itp)
    if ect:
        out["x_xc"] = _xcorr_consecutive([qrs[i] for i in ect]) if len(ect) >= 2 else float("nan")
        rel = [rr[i - 1] / rr[i] for i in ect if 1 <= i < nb - 1 and rr[i] > 0]
        out["x_rrel"] = _median(rel)
    return out


def global_vector(feats: dict) -> np.ndarray:
    return np.array([feats[k] for k in GLOBAL_FEATURE_NAMES], dtype=np.float64)


# --------------------------------------------------------------- beat level

def _beat_feature_names():
    names = ["rr_ms", "rr_irregularity", "pr_ms", "profile_local", "p_profile", "p_score",
             "qt_corrected", "tp_prevailing_freq", "tp_freq_entropy"]
    for k in range(1, 4):
        names += [f"subwave{k}_duration", f"subwave{k}_amplitude", f"subwave{k}_turning_point"]
    names += ["axis_proxy", "p_duration", "p_amplitude", "t_duration", "t_amplitude",
              "st_deviation"]
    names += [f"morph_{t}" for t in MORPHOLOGY_TAGS]
    names += [f"rhythm_{k}" for k in RHYTHM_KINDS]
    names.append("quality")
    return tuple(names)


BEAT_FEATURE_NAMES = _beat_feature_names()
# continuous columns whose gaps are filled with the record median
_IMPUTED = ("rr_ms", "rr_irregularity", "pr_ms", "profile_local", "qt_corrected",
            "tp_prevailing_freq", "tp_freq_entropy")


def beat_features(r, itp, views=None, fill=None) -> np.ndarray:
    """Per-beat feature matrix (one row per final beat, BEAT_FEATURE_NAMES columns).

    Missing continuous values take the record median of the column; columns
    missing in the whole record take ``fill[column]`` (0 by default).
    """
    views = views or _signal_views(r)
    y = views.clean
    fs = float(r.fs)
    ms = 1000.0 / fs
    n = r.samples.size
    beats = itp.beats
    nb = len(beats)
    col = {name: i for i, name in enumerate(BEAT_FEATURE_NAMES)}
    X = np.zeros((nb, len(BEAT_FEATURE_NAMES)), dtype=np.float64)
    if nb == 0:
        return X
    for name in _IMPUTED:
        X[:, col[name]] = np.nan
    fid = np.array([b.fiducial for b in beats], dtype=np.float64)
    rr = np.diff(fid) * ms
    if rr.size >= SAMPEN_WINDOW:
        ent = kernels.sampen_windows(np.ascontiguousarray(rr), SAMPEN_WINDOW, SAMPEN_M,
                                     SAMPEN_R_MS, SAMPEN_CAP)
    else:
        ent = None
    tpw = [None] + tp_windows(beats, fs, n)
    kinds = itp.beat_kinds()
    med_rr = float(np.median(rr)) if rr.size else float("nan")
    for i, b in enumerate(beats):
        row = X[i]
        if i >= 1:
            row[col["rr_ms"]] = rr[i - 1]
            lo = beats[i - 1].fiducial
            seg = y[lo:b.fiducial + 1]
            if seg.size >= 2:
                row[col["profile_local"]] = profile(seg) / (seg.size / fs)
        if ent is not None and i >= 1:
            row[col["rr_irregularity"]] = ent[min(max(0, i - SAMPEN_WINDOW), ent.size - 1)]
        elif ent is None and rr.size >= 3 and i >= 1:
            row[col["rr_irregularity"]] = local_irregularity(rr)
        if b.p.present:
            row[col["pr_ms"]] = (b.qrs.onset - b.p.onset) * ms
            row[col["p_duration"]] = (b.p.offset - b.p.onset) * ms
            row[col["p_amplitude"]] = b.p.amplitude
        lo, hi = b.p_window
        if hi - lo >= 2:
            row[col["p_profile"]] = profile(y[lo:hi])
        row[col["p_score"]] = b.p_score
        if b.t.present:
            rr_i = rr[i - 1] if i >= 1 else med_rr
            if math.isfinite(rr_i) and rr_i > 0:
                row[col["qt_corrected"]] = qt_corrected((b.t.offset - b.qrs.onset) * ms, rr_i)
            row[col["t_duration"]] = (b.t.offset - b.t.onset) * ms
            row[col["t_amplitude"]] = b.t.amplitude
        if tpw[i] is not None:
            f0, h0 = tp_spectral(y, fs, [tpw[i]])
            row[col["tp_prevailing_freq"]] = f0
            row[col["tp_freq_entropy"]] = h0
        for k, (amp, dur, turn) in enumerate(b.qrs_subwaves[:3]):
            row[col[f"subwave{k + 1}_duration"]] = dur
            row[col[f"subwave{k + 1}_amplitude"]] = amp
            row[col[f"subwave{k + 1}_turning_point"]] = (turn - b.qrs.onset) * ms
        row[col["axis_proxy"]] = b.axis_proxy
        row[col["st_deviation"]] = b.st_deviation
        tag = b.morphology_tag if b.morphology_tag in MORPHOLOGY_TAGS else "other"
        row[col[f"morph_{tag}"]] = 1.0
        kind = kinds[i] if kinds[i] in RHYTHM_KINDS else "NORMAL"
        row[col[f"rhythm_{kind}"]] = 1.0
        row[col["quality"]] = b.quality
    for name in _IMPUTED:
        c = X[:, col[name]]
        ok = np.isfinite(c)
        if ok.any():
            c[~ok] = np.median(c[ok])
        else:
            c[:] = float(fill[name]) if fill is not None and name in fill else 0.0
    return X


# ------------------------------------------------------------------ export

def write_global_csv(rows, path) -> None:
    """``rows`` are ``(record_id, {name: value})``; columns follow GLOBAL_FEATURE_NAMES."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id",) + GLOBAL_FEATURE_NAMES)
        for rid, feats in rows:
            w.writerow([rid] + [repr(float(feats[k])) for k in GLOBAL_FEATURE_NAMES])


def write_beat_jsonl(rows, path) -> None:
    """``rows`` are ``(record_id, matrix)``; one JSON object per record."""
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for rid, X in rows:
            fh.write(json.dumps({"id": rid, "columns": list(BEAT_FEATURE_NAMES),
                                 "beats": np.asarray(X).tolist()}) + "\n")
