"""Deterministic synthetic single-lead ECG with ground truth.

Each heartbeat is a sum of Gaussian deflections (P, Q, R, S, T). Because
every component has a known centre and width, wave boundaries are known
analytically: a deflection with width ``sigma`` spans ``centre +- 2.5 sigma``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import signal as ss

from .record_io import CLASSES, DEFAULT_FS, Record, write_labels, write_record
from .taxonomy import RHYTHM_KINDS

SUPPORTED_RHYTHMS = ("NORMAL", "TACHYCARDIA", "BRADYCARDIA", "EXTRASYSTOLE",
                     "COUPLET", "BIGEMINY", "TRIGEMINY", "AFIB")
O_SUBTYPES = ("tachycardia", "bradycardia", "wide_qrs", "long_pr", "extrasystole", "bigeminy")

# boundaries sit at +-2.5 sigma of each Gaussian
_HALF_SPAN = 2.5
P_DURATION_MS = 100.0


@dataclass(frozen=True)
class GenSpec:
    cls: str = "N"
    rhythm: str = "NORMAL"
    rate_bpm: float = 75.0
    rr_jitter_pct: float = 2.0
    qrs_width_ms: float = 85.0
    pr_ms: float = 160.0
    p_present: bool = True
    noise_snr_db: float = 30.0
    invert: bool = False
    duration_s: float = 30.0
    seed: int = 0
    fs: int = DEFAULT_FS
    gain: float = 1000.0
    r_amp_mv: float = 1.0
    ectopic_count: int = 2
    af_sigma: float = 0.25
    noise_only: bool = False
    record_id: str = "SYN00000"

    def validate(self):
        if self.cls not in CLASSES:
            raise ValueError(f"unknown class {self.cls!r}")
        if self.rhythm not in SUPPORTED_RHYTHMS:
            raise ValueError(f"unsupported rhythm {self.rhythm!r}")
        if not self.rate_bpm > 0:
            raise ValueError("rate_bpm must be positive")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if self.rr_jitter_pct < 0:
            raise ValueError("rr_jitter_pct must be non-negative")
        if self.fs <= 0 or self.gain <= 0:
            raise ValueError("fs and gain must be positive")
        rr = 60000.0 / self.rate_bpm
        if self.qrs_width_ms <= 0 or self.qrs_width_ms >= 0.5 * rr:
            raise ValueError(f"infeasible spec: QRS width {self.qrs_width_ms} ms vs RR {rr:.0f} ms")
        if self.p_present and self.pr_ms + 0.5 * self.qrs_width_ms >= 0.8 * rr:
            raise ValueError(f"infeasible spec: PR {self.pr_ms} ms does not fit RR {rr:.0f} ms")


@dataclass
class BeatTruth:
    fiducial: int
    qrs_onset: int
    qrs_offset: int
    p_onset: Optional[int]
    p_offset: Optional[int]
    t_onset: int
    t_offset: int
    ectopic: bool = False


@dataclass
class GroundTruth:
    beats: list = field(default_factory=list)
    segments: list = field(default_factory=list)  # (kind, first_beat, last_beat)
    label: str = "N"
    inverted: bool = False
    subtype: str = ""

    @property
    def fiducials(self) -> np.ndarray:
        return np.asarray([b.fiducial for b in self.beats], dtype=np.int64)

    def rr_ms(self, fs) -> np.ndarray:
        return np.diff(self.fiducials) * 1000.0 / fs

    def to_json(self) -> dict:
        return {"label": self.label, "inverted": self.inverted, "subtype": self.subtype,
                "beats": [asdict(b) for b in self.beats],
                "segments": [list(s) for s in self.segments]}


def _regular_kind(rr_ms):
    med = float(np.median(rr_ms)) if len(rr_ms) else 800.0
    if med < 600.0:
        return "TACHYCARDIA"
    if med > 1200.0:
        return "BRADYCARDIA"
    return "NORMAL"


def _jittered(base, n, jitter, rng):
    # smooth respiratory modulation plus bounded noise, |rr/base - 1| <= jitter
    phase = rng.uniform(0, 2 * np.pi)
    k = np.arange(n)
    resp = np.sin(2 * np.pi * k * base / rng.uniform(3500.0, 5000.0) + phase)
    u = 0.6 * resp + 0.4 * rng.uniform(-1, 1, n)
    return base * (1.0 + jitter * u)


def _beat_plan(spec: GenSpec, rng):
    """Return RR intervals (ms) and ectopic flags for beats after the first."""
    base = 60000.0 / spec.rate_bpm
    jit = spec.rr_jitter_pct / 100.0
    n = int(np.ceil(spec.duration_s * 1000.0 / (0.5 * base))) + 4
    coupling = rng.uniform(0.55, 0.68)
    rr = _jittered(base, n, jit, rng)
    ect = np.zeros(n, dtype=bool)
    r = spec.rhythm
    if r == "AFIB":
        z = np.clip(rng.standard_normal(n), -2.5, 2.5)
        rr = np.maximum(base * np.exp(spec.af_sigma * z), 300.0)
    elif r == "BIGEMINY":
        ect[0::2] = True
    elif r == "TRIGEMINY":
        ect[1::3] = True
    elif r == "EXTRASYSTOLE":
        count = max(1, spec.ectopic_count)
        beats_in_record = int(spec.duration_s * 1000.0 / base)
        candidates = np.arange(3, max(4, beats_in_record - 3))
        picks = []
        for c in rng.permutation(candidates):
            if all(abs(int(c) - p) > 3 for p in picks):
                picks.append(int(c))
            if len(picks) == count:
                break
        ect[picks] = True
    elif r == "COUPLET":
        beats_in_record = int(spec.duration_s * 1000.0 / base)
        c = int(rng.integers(3, max(4, beats_in_record - 4)))
        ect[c] = ect[c + 1] = True
    if r in ("BIGEMINY", "TRIGEMINY", "EXTRASYSTOLE", "COUPLET"):
        out = rr.copy()
        for i in range(n):
            if ect[i]:
                out[i] = coupling * rr[i] if not (i > 0 and ect[i - 1]) else coupling * rr[i] * 1.05
            elif i > 0 and ect[i - 1]:
                # compensatory pause: the ectopic cycle sums to two sinus cycles
                out[i] = (2.0 - coupling) * rr[i]
        rr = out
    return rr, ect


def _gauss(t_ms, centre, sigma, amp):
    return amp * np.exp(-0.5 * ((t_ms - centre) / sigma) ** 2)


def _band_noise(n, fs, rng, lo=1.0, hi=40.0):
    b, a = ss.butter(3, [lo / (fs / 2), min(hi, 0.45 * fs) / (fs / 2)], btype="band")
    return ss.lfilter(b, a, rng.standard_normal(n + 300))[300:]


def generate(spec: GenSpec):
    """Synthesize a record and its ground truth from ``spec``."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0x5EC6])
    fs = spec.fs
    n = int(round(spec.duration_s * fs))
    t_ms = np.arange(n) * 1000.0 / fs
    x = np.zeros(n)
    end_ms = spec.duration_s * 1000.0

    if spec.rhythm == "AFIB":
        # redraw until the RR series is demonstrably irregular
        from .features import rr_irregularity

        for attempt in range(20):
            rr, ect = _beat_plan(spec, rng)
            med_irr, _ = rr_irregularity(rr[:40])
            if np.isfinite(med_irr) and med_irr > 0.3:
                break
    else:
        rr, ect = _beat_plan(spec, rng)

    w = spec.qrs_width_ms
    base = 60000.0 / spec.rate_bpm
    first = rng.uniform(150.0, 150.0 + min(base, 900.0))
    times, flags = [], []
    t = first
    i = 0
    while t < end_ms - 450.0:
        times.append(t)
        flags.append(bool(ect[i]))
        t += rr[i + 1] if i + 1 < len(rr) else base
        i += 1

    r_amp = spec.r_amp_mv
    p_amp = r_amp * rng.uniform(0.12, 0.2)
    t_amp = r_amp * rng.uniform(0.2, 0.35)
    def to_idx(v):
        return int(round(v * fs / 1000.0))

    beats = []
    for k, (tc, is_ect) in enumerate(zip(times, flags)):
        prev_rr = times[k] - times[k - 1] if k else base
        bw = max(w, 130.0) if is_ect else w
        amp = 1.25 * r_amp if is_ect else r_amp
        x += _gauss(t_ms, tc - 0.3 * bw, 0.08 * bw, -0.1 * amp)
        x += _gauss(t_ms, tc, 0.1 * bw, amp)
        x += _gauss(t_ms, tc + 0.3 * bw, 0.08 * bw, -0.25 * amp)
        q_on, q_off = tc - 0.5 * bw, tc + 0.5 * bw
        s = float(np.clip(np.sqrt(prev_rr / 1000.0), 0.6, 1.2))
        t_dur = 200.0 * s
        t_on = q_off + 60.0 * s
        t_c = t_on + 0.5 * t_dur
        ta = -0.6 * t_amp if is_ect else t_amp
        x += _gauss(t_ms, t_c, t_dur / (2 * _HALF_SPAN), ta)
        p_on = p_off = None
        if spec.p_present and spec.rhythm != "AFIB" and not is_ect:
            p_on_ms = q_on - spec.pr_ms
            p_c = p_on_ms + 0.5 * P_DURATION_MS
            x += _gauss(t_ms, p_c, P_DURATION_MS / (2 * _HALF_SPAN), p_amp)
            p_on, p_off = to_idx(p_on_ms), to_idx(p_on_ms + P_DURATION_MS)
        beats.append(BeatTruth(to_idx(tc), to_idx(q_on), to_idx(q_off), p_on, p_off,
                               to_idx(t_on), min(n - 1, to_idx(t_on + t_dur)), bool(is_ect)))

    clean_power = float(np.var(x)) if np.var(x) > 0 else 1e-3
    if spec.rhythm == "AFIB":
        f0 = rng.uniform(6.0, 9.0)
        drift = 0.5 * np.sin(2 * np.pi * t_ms / 1000.0 * rng.uniform(0.1, 0.3))
        phase = 2 * np.pi * np.cumsum(f0 + drift) / fs
        x += r_amp * rng.uniform(0.03, 0.06) * np.sin(phase)
    x += r_amp * rng.uniform(0.03, 0.08) * np.sin(
        2 * np.pi * rng.uniform(0.15, 0.4) * t_ms / 1000.0 + rng.uniform(0, 2 * np.pi))
    noise = _band_noise(n, fs, rng)
    noise *= np.sqrt(clean_power / 10 ** (spec.noise_snr_db / 10.0)) / (np.std(noise) or 1.0)
    if spec.noise_only:
        x = x * 0.0 + noise
    else:
        x = x + noise
    if spec.cls == "NOISE" and not spec.noise_only:
        # motion-like bursts on top of the broadband noise
        for _ in range(int(rng.integers(2, 6))):
            c = rng.uniform(0, n)
            width = rng.uniform(0.2, 1.0) * fs
            env = np.exp(-0.5 * ((np.arange(n) - c) / width) ** 2)
            burst = _band_noise(n, fs, rng, 0.5, 15.0)
            x += env * rng.uniform(0.5, 2.0) * r_amp * burst / (np.std(burst) or 1.0)

    samples = np.clip(np.round(x * spec.gain), -32767, 32767).astype(np.int16)
    if spec.invert:
        samples = (-samples.astype(np.int32)).astype(np.int16)
    record = Record(spec.record_id, fs, spec.gain, samples, spec.cls)

    truth = GroundTruth(beats=beats, label=spec.cls, inverted=spec.invert)
    truth.segments = _truth_segments(spec, beats, fs)
    return record, truth


def _truth_segments(spec, beats, fs):
    if not beats:
        return []
    fid = np.asarray([b.fiducial for b in beats])
    rr = np.diff(fid) * 1000.0 / fs
    last = len(beats) - 1
    if spec.rhythm in ("AFIB", "BIGEMINY", "TRIGEMINY"):
        return [(spec.rhythm, 0, last)]
    if spec.rhythm in ("NORMAL", "TACHYCARDIA", "BRADYCARDIA"):
        return [(_regular_kind(rr), 0, last)]
    segs, start = [], 0
    ect = [b.ectopic for b in beats]
    i = 0
    while i <= last:
        if ect[i]:
            j = i
            while j + 1 <= last and ect[j + 1]:
                j += 1
            if start < i:
                segs.append((_regular_kind(rr[start:i - 1]), start, i - 1))
            segs.append(("COUPLET" if j > i else "EXTRASYSTOLE", i, j))
            start = j + 1
            i = j + 1
        else:
            i += 1
    if start <= last:
        segs.append((_regular_kind(rr[start:last]), start, last))
    return segs


def corpus_specs(n_per_class: int, seed: int, duration_range=(20.0, 30.0),
                 invert_fraction: float = 0.15) -> list:
    """Specs for a balanced corpus; ids are assigned in a seeded shuffled order."""
    rng = np.random.default_rng([seed, 0xC0])
    specs = []
    for cls in CLASSES:
        for i in range(n_per_class):
            r = np.random.default_rng([seed, CLASSES.index(cls), i])
            common = dict(
                cls=cls, seed=int(r.integers(0, 2**31 - 1)),
                duration_s=float(np.round(r.uniform(*duration_range), 1)),
                invert=bool(r.uniform() < invert_fraction),
                r_amp_mv=float(r.uniform(0.7, 1.5)),
                noise_snr_db=float(r.uniform(20.0, 32.0)),
                qrs_width_ms=float(r.uniform(70.0, 95.0)),
                pr_ms=float(r.uniform(130.0, 190.0)),
                rr_jitter_pct=float(r.uniform(1.0, 4.0)),
            )
            subtype = ""
            if cls == "N":
                spec = GenSpec(rhythm="NORMAL", rate_bpm=float(r.uniform(55.0, 95.0)), **common)
            elif cls == "A":
                spec = GenSpec(rhythm="AFIB", rate_bpm=float(r.uniform(75.0, 125.0)),
                               p_present=False, af_sigma=float(r.uniform(0.18, 0.32)), **common)
            elif cls == "O":
                subtype = O_SUBTYPES[i % len(O_SUBTYPES)]
                rate = float(r.uniform(60.0, 90.0))
                kw = dict(common)
                if subtype == "tachycardia":
                    rhythm, rate = "TACHYCARDIA", float(r.uniform(115.0, 150.0))
                    kw["pr_ms"] = float(r.uniform(120.0, 150.0))
                elif subtype == "bradycardia":
                    rhythm, rate = "BRADYCARDIA", float(r.uniform(36.0, 47.0))
                elif subtype == "wide_qrs":
                    rhythm = "NORMAL"
                    kw["qrs_width_ms"] = float(r.uniform(125.0, 150.0))
                elif subtype == "long_pr":
                    rhythm = "NORMAL"
                    kw["pr_ms"] = float(r.uniform(235.0, 270.0))
                elif subtype == "extrasystole":
                    rhythm = "EXTRASYSTOLE"
                    kw["ectopic_count"] = int(r.integers(1, 4))
                else:
                    rhythm = "BIGEMINY"
                    rate = float(r.uniform(60.0, 80.0))
                spec = GenSpec(rhythm=rhythm, rate_bpm=rate, **kw)
            else:
                kw = dict(common)
                kw["noise_snr_db"] = float(r.uniform(-8.0, -2.0))
                kw["noise_only"] = bool(i % 3 == 0)
                spec = GenSpec(rhythm="NORMAL", rate_bpm=float(r.uniform(55.0, 100.0)), **kw)
            specs.append((spec, subtype))
    order = rng.permutation(len(specs))
    out = []
    for new_idx, k in enumerate(order):
        spec, subtype = specs[k]
        out.append((_replace(spec, record_id=f"S{new_idx + 1:05d}"), subtype))
    out.sort(key=lambda p: p[0].record_id)
    return out


def _replace(spec, **kw):
    from dataclasses import replace

    return replace(spec, **kw)


def generate_corpus(n_per_class: int, seed: int, **kwargs) -> list:
    """Balanced labelled corpus as ``(Record, GroundTruth)`` pairs sorted by id."""
    out = []
    for spec, subtype in corpus_specs(n_per_class, seed, **kwargs):
        rec, truth = generate(spec)
        truth.subtype = subtype
        out.append((rec, truth))
    return out


def write_corpus(corpus, out_dir) -> dict:
    """Write records, ground-truth sidecars and ``labels.csv``; returns a manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = []
    for rec, truth in corpus:
        write_record(rec, out_dir / rec.id)
        (out_dir / f"{rec.id}.truth.json").write_text(
            json.dumps(truth.to_json(), sort_keys=True) + "\n", encoding="utf-8")
        labels.append((rec.id, rec.label))
    write_labels(labels, out_dir / "labels.csv")
    counts = {c: sum(1 for _, l in labels if l == c) for c in CLASSES}
    return {"records": len(labels), "per_class": counts, "labels": str(out_dir / "labels.csv")}


assert set(SUPPORTED_RHYTHMS) <= set(RHYTHM_KINDS)
