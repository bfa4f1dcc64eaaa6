"""Rhythm-level interpretation of a delineated record.

Beats are first cleaned (duplicates, spurious low-quality annotations) and
completed (missed beats at positions predicted by a regular or bigeminal
rhythm). The record is then explained left to right by a small grammar of
rhythm patterns: at each frontier every pattern that fits the upcoming beats
is scored, one segment of lookahead breaks ties, and the best one is
committed. A clean regular run at 50-110 bpm is accepted outright without
scoring alternatives.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import features
from .detection import BeatAnnotation, SignalViews, delineate, quality_reference, redetect
from .record_io import Record
from .taxonomy import REGULAR_KINDS, RHYTHM_KINDS

DEDUP_MS = 200.0
FP_QUALITY = 0.5
FN_QUALITY = 0.2
REGULAR_TOL = 0.15
SHORTCUT_TOL = 0.125
SHORTCUT_BPM = (50.0, 110.0)
SHORTCUT_MIN_BEATS = 8
NORMAL_RR_MS = (600.0, 1200.0)
AFIB_IRREGULARITY = 0.08
AFIB_P_ABSENT = 0.6
ADVANCED_RATIO = 0.85
NORMAL_BONUS = 0.05
ASYSTOLE_MS = 3000.0
# reduced envelope threshold for the search of missed beats, relative to the
# median envelope peak of the detected beats
FN_ENERGY = 0.15


@dataclass(frozen=True)
class AbstractionPattern:
    kind: str
    rr_ms: tuple = (0.0, math.inf)
    regularity: tuple = (0.0, math.inf)
    structure: str = "run"
    xcorr: tuple = (-1.0, 1.0)
    min_beats: int = 1

    def __post_init__(self):
        if self.kind not in RHYTHM_KINDS:
            raise ValueError(f"unknown rhythm kind {self.kind}")
        for lo, hi in (self.rr_ms, self.regularity, self.xcorr):
            if lo > hi:
                raise ValueError(f"{self.kind}: ill-ordered bounds ({lo}, {hi})")
        if self.min_beats < 1:
            raise ValueError("min_beats must be positive")


PATTERNS = {
    "NORMAL": AbstractionPattern("NORMAL", NORMAL_RR_MS, (0.0, REGULAR_TOL), "run", min_beats=3),
    "TACHYCARDIA": AbstractionPattern("TACHYCARDIA", (0.0, NORMAL_RR_MS[0]), (0.0, REGULAR_TOL),
                                      "run", min_beats=3),
    "BRADYCARDIA": AbstractionPattern("BRADYCARDIA", (NORMAL_RR_MS[1], math.inf),
                                      (0.0, REGULAR_TOL), "run", min_beats=3),
    "EXTRASYSTOLE": AbstractionPattern("EXTRASYSTOLE", (0.0, math.inf), (0.0, ADVANCED_RATIO),
                                       "advanced", min_beats=1),
    "COUPLET": AbstractionPattern("COUPLET", (0.0, math.inf), (0.0, ADVANCED_RATIO),
                                  "advanced-pair", min_beats=2),
    "BIGEMINY": AbstractionPattern("BIGEMINY", (0.0, math.inf), (0.0, ADVANCED_RATIO),
                                   "alternating-2", min_beats=4),
    "TRIGEMINY": AbstractionPattern("TRIGEMINY", (0.0, math.inf), (0.0, ADVANCED_RATIO),
                                    "alternating-3", min_beats=6),
    "AFIB": AbstractionPattern("AFIB", (0.0, math.inf), (AFIB_IRREGULARITY, math.inf),
                               "irregular", min_beats=6),
    "ASYSTOLE": AbstractionPattern("ASYSTOLE", (ASYSTOLE_MS, math.inf), min_beats=1),
}


@dataclass
class RhythmSegment:
    kind: str
    start: int
    end: int
    member_beats: list
    score: float = 0.0


@dataclass
class Interpretation:
    segments: list
    beats: list
    discarded: list = field(default_factory=list)
    discovered: list = field(default_factory=list)
    fs: float = 300.0
    n_samples: int = 0
    flagged: bool = False

    def kinds(self) -> list:
        return [s.kind for s in self.segments]

    def beat_kinds(self) -> list:
        out = [""] * len(self.beats)
        for s in self.segments:
            for i in s.member_beats:
                out[i] = s.kind
        return out

    def to_json(self) -> dict:
        ms = 1000.0 / self.fs
        return {
            "segments": [
                {"kind": s.kind, "start_ms": s.start * ms, "end_ms": s.end * ms,
                 "beats": list(s.member_beats), "score": round(s.score, 6)}
                for s in self.segments
            ],
            "beats": [
                {"sample_index": b.fiducial, "time_ms": b.fiducial * ms,
                 "quality": round(b.quality, 6), "morphology": b.morphology_tag,
                 "p_wave": bool(b.p.present), "t_wave": bool(b.t.present)}
                for b in self.beats
            ],
            "discarded": [a.sample_index for a in self.discarded],
            "discovered": [a.sample_index for a in self.discovered],
            "flagged": self.flagged,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


# ---------------------------------------------------------------- scoring

def _sat(margin, scale) -> float:
    """Soft constraint satisfaction: 1 when the margin reaches ``scale``, 0 at ``-scale``."""
    if not math.isfinite(margin):
        return 1.0 if margin > 0 else 0.0
    return float(min(1.0, max(0.0, 0.5 + 0.5 * margin / scale)))


def _rr(beats, fs) -> np.ndarray:
    f = np.array([b.fiducial for b in beats], dtype=np.float64)
    return np.diff(f) * 1000.0 / fs


def _max_dev(rr) -> float:
    med = float(np.median(rr))
    return float(np.max(np.abs(rr / med - 1.0))) if rr.size else 0.0


def _p_fraction(beats) -> float:
    return sum(b.p.present for b in beats) / len(beats) if beats else 0.0


def score_hypothesis(kind: str, beats, r: Record) -> float:
    """Degree in [0, 1] to which ``beats`` satisfy the pattern of ``kind``.

    For the context patterns the group carries the surrounding beats: one
    leading beat before an extrasystole or couplet and one trailing beat
    after it. Each constraint contributes a soft satisfaction that grows with
    its margin; the score is their product. NORMAL receives a small prior
    bonus.
    """
    if not beats:
        raise ValueError("score_hypothesis needs a non-empty beat group")
    if kind not in PATTERNS:
        raise ValueError(f"unknown rhythm kind {kind}")
    fs = r.fs
    rr = _rr(beats, fs)
    terms = []
    if kind in REGULAR_KINDS:
        if rr.size < 1:
            return 0.0
        med = float(np.median(rr))
        terms.append(_sat(REGULAR_TOL - _max_dev(rr), REGULAR_TOL))
        if kind == "NORMAL":
            terms.append(_sat(min(med - NORMAL_RR_MS[0], NORMAL_RR_MS[1] - med), 150.0))
        elif kind == "TACHYCARDIA":
            terms.append(_sat(NORMAL_RR_MS[0] - med, 100.0))
        else:
            terms.append(_sat(med - NORMAL_RR_MS[1], 200.0))
    elif kind == "AFIB":
        if rr.size < 3:
            return 0.0
        irr = features.local_irregularity(rr)
        terms.append(_sat(irr - AFIB_IRREGULARITY, AFIB_IRREGULARITY))
        terms.append(_sat((1.0 - _p_fraction(beats)) - AFIB_P_ABSENT, 1.0 - AFIB_P_ABSENT))
        terms.append(_sat(_max_dev(rr) - REGULAR_TOL, REGULAR_TOL))
    elif kind in ("EXTRASYSTOLE", "COUPLET"):
        # rr: [leading normal?, advanced..., pause]
        n_adv = 1 if kind == "EXTRASYSTOLE" else 2
        if rr.size < n_adv + 1:
            return 0.0
        ref = float(rr[0]) if rr.size >= n_adv + 2 else float(rr[-1])
        adv = rr[-(n_adv + 1):-1] if rr.size >= n_adv + 2 else rr[:n_adv]
        pause = float(rr[-1])
        for a in adv:
            terms.append(_sat(ADVANCED_RATIO - a / ref, 0.15))
        terms.append(_sat(pause / float(adv[-1]) - 1.0, 0.3))
    elif kind in ("BIGEMINY", "TRIGEMINY"):
        period = 2 if kind == "BIGEMINY" else 3
        if rr.size < 2 * period:
            return 0.0
        phase = _gemini_phase(rr, period)
        if phase is None:
            return 0.0
        short = rr[phase::period]
        longs = rr[(phase + 1) % period::period]
        k = min(short.size, longs.size)
        ratios = short[:k] / longs[:k]
        terms.append(_sat(ADVANCED_RATIO - float(ratios.max()), 0.15))
        terms.append(_sat(REGULAR_TOL - _max_dev(short), REGULAR_TOL))
        terms.append(_sat(REGULAR_TOL - _max_dev(longs), REGULAR_TOL))
        if period == 3:
            norm = rr[(phase + 2) % 3::3]
            terms.append(_sat(ADVANCED_RATIO - float(np.median(short) / np.median(norm)), 0.15))
    else:  # ASYSTOLE
        gap = float(rr.max()) if rr.size else r.duration_ms
        terms.append(_sat(gap - ASYSTOLE_MS, 1000.0))
    s = float(np.prod(terms)) if terms else 0.0
    if kind == "NORMAL":
        s = min(1.0, s + NORMAL_BONUS)
    return float(min(1.0, max(0.0, s)))


def _gemini_phase(rr, period) -> Optional[int]:
    """Offset of the short (advanced) intervals in a bigeminal/trigeminal RR series."""
    best, best_val = None, math.inf
    for ph in range(period):
        short = rr[ph::period]
        nxt = rr[(ph + 1) % period::period]
        if short.size == 0 or nxt.size == 0:
            continue
        val = float(np.median(short) / np.median(nxt))
        if val < best_val:
            best, best_val = ph, val
    return best


# ------------------------------------------------------------- beat fixes

def _dedupe(r, obs, views):
    """Keep the better of annotations closer than the refractory period."""
    win = DEDUP_MS * r.fs / 1000.0
    kept, dropped = [], []
    bp = np.abs(views.bandpassed)
    for ob in sorted(obs, key=lambda o: o.fiducial):
        if kept and ob.fiducial - kept[-1].fiducial < win:
            prev = kept[-1]
            key_new = (round(ob.quality, 1), bp[ob.fiducial])
            key_old = (round(prev.quality, 1), bp[prev.fiducial])
            if key_new > key_old:
                dropped.append(prev)
                kept[-1] = ob
            else:
                dropped.append(ob)
        else:
            kept.append(ob)
    return kept, dropped


def fix_false_positives(r: Record, obs, views: Optional[SignalViews] = None):
    """Drop low-quality annotations that break an otherwise regular rhythm.

    The beats with quality >= 0.5 form the skeleton. Between two consecutive
    skeleton beats whose gap fits the skeleton's median RR, every low-quality
    annotation is spurious. When the gap spans several RRs, the low-quality
    annotation nearest each expected beat position survives. Gaps that fit
    no regular rhythm are left untouched. Returns ``(kept, discarded)``.
    """
    views = views or SignalViews(r)
    obs, dropped = _dedupe(r, obs, views)
    skel = [i for i, o in enumerate(obs) if o.quality >= FP_QUALITY]
    if len(skel) < 3 or len(skel) == len(obs):
        return obs, dropped
    f = np.array([obs[i].fiducial for i in skel], dtype=np.float64)
    ref = float(np.median(np.diff(f)))
    remove = set()
    # low-quality beats before the first / after the last skeleton beat are
    # judged against the rhythm extrapolated outward
    bounds = [(None, skel[0])] + list(zip(skel[:-1], skel[1:])) + [(skel[-1], None)]
    for a, c in bounds:
        lo = 0 if a is None else a + 1
        hi = len(obs) if c is None else c
        weak = list(range(lo, hi))
        if not weak:
            continue
        if a is None or c is None:
            anchor = obs[c if a is None else a].fiducial
            sign = -1 if a is None else 1
            for i in weak:
                d = sign * (obs[i].fiducial - anchor)
                k = max(1, round(d / ref))
                if abs(d - k * ref) > REGULAR_TOL * ref:
                    remove.add(i)
            continue
        gap = obs[c].fiducial - obs[a].fiducial
        m = round(gap / ref)
        if m < 1 or abs(gap - m * ref) > REGULAR_TOL * m * ref:
            continue
        step = gap / m
        keep = set()
        for j in range(1, m):
            pos = obs[a].fiducial + j * step
            near = min(weak, key=lambda i: abs(obs[i].fiducial - pos))
            if abs(obs[near].fiducial - pos) <= REGULAR_TOL * step:
                keep.add(near)
        # removing must never leave a gap longer than twice the reference
        for i in weak:
            if i not in keep:
                remove.add(i)
        left = [obs[a].fiducial] + sorted(obs[i].fiducial for i in keep) + [obs[c].fiducial]
        if np.max(np.diff(left)) > 2.0 * ref:
            for i in weak:
                remove.discard(i)
    kept = [o for i, o in enumerate(obs) if i not in remove]
    dropped += [o for i, o in enumerate(obs) if i in remove]
    return kept, dropped


def _expected_positions(fid, fs):
    """Positions (sample, search half-width) where a rhythm predicts a missing beat."""
    out = []
    if fid.size < 3:
        return out
    rr = np.diff(fid).astype(np.float64)
    ref = float(np.median(rr))
    for k, g in enumerate(rr):
        m = int(round(g / ref))
        if m >= 2 and abs(g - m * ref) <= REGULAR_TOL * m * ref:
            for j in range(1, m):
                out.append((fid[k] + j * g / m, 0.2 * ref))
    # advanced beats: a short-long pair defines a bigeminal cycle; any gap
    # matching the whole cycle is expected to hide one advanced beat
    pairs = [(rr[i], rr[i + 1]) for i in range(rr.size - 1)
             if rr[i] < ADVANCED_RATIO * rr[i + 1] and (i == 0 or rr[i] < ADVANCED_RATIO * rr[i - 1])]
    if pairs:
        s_ref = float(np.median([p[0] for p in pairs]))
        l_ref = float(np.median([p[1] for p in pairs]))
        cycle = s_ref + l_ref
        for k, g in enumerate(rr):
            if abs(g - cycle) <= REGULAR_TOL * cycle and g > 1.2 * l_ref:
                out.append((fid[k] + s_ref, 0.15 * s_ref))
    return out


def fix_false_negatives(r: Record, obs, views: Optional[SignalViews] = None,
                        reference: Optional[tuple] = None):
    """Search for beats missed at the positions predicted by the rhythm.

    Each expected position is searched with a reduced envelope threshold;
    a candidate is accepted only if its delineation reaches quality 0.2
    against the record's typical beat. Returns ``(beats, discovered)``.
    """
    views = views or SignalViews(r)
    fs = r.fs
    if len(obs) < 3:
        return obs, []
    fid = np.array([o.fiducial for o in obs])
    reference = reference or quality_reference(obs)
    env = float(np.median(views.mwi[fid]))
    min_energy = FN_ENERGY * env
    refr = views.ms(DEDUP_MS)
    found = []
    for pos, half in _expected_positions(fid, fs):
        lo, hi = int(pos - half), int(pos + half) + 1
        hit = redetect(r, lo, hi, min_energy, views)
        if hit is None:
            continue
        taken = np.concatenate([fid, np.array(found, dtype=np.int64)])
        if np.min(np.abs(taken - hit)) < refr:
            continue
        found.append(int(hit))
    if not found:
        return obs, []
    anns = [BeatAnnotation(int(i), o.confidence) for i, o in zip(fid, obs)]
    anns += [BeatAnnotation(i, 0.0) for i in found]
    new_obs = delineate(r, anns, views, reference)
    ok = []
    accepted = set()
    for o in new_obs:
        if o.fiducial in found and o.quality < FN_QUALITY:
            continue
        if o.fiducial in found:
            accepted.add(o.fiducial)
        ok.append(o)
    if len(ok) != len(new_obs):
        ok = delineate(r, [BeatAnnotation(o.fiducial, o.confidence) for o in ok], views, reference)
    return ok, [BeatAnnotation(i, 0.0) for i in sorted(accepted)]


# ----------------------------------------------------------- segmentation

def _regular_kind(rr) -> str:
    med = float(np.median(rr))
    if med < NORMAL_RR_MS[0]:
        return "TACHYCARDIA"
    if med > NORMAL_RR_MS[1]:
        return "BRADYCARDIA"
    return "NORMAL"


def _regular_run(rr, i, tol) -> int:
    """Largest j such that beats i..j have all RRs within ``tol`` of their median."""
    j = i
    while j < rr.size:
        cand = rr[i:j + 1]
        if np.max(np.abs(cand / np.median(cand) - 1.0)) > tol:
            break
        j += 1
    return j  # beats i..j inclusive


class _Segmenter:
    def __init__(self, r, beats):
        self.r = r
        self.beats = beats
        self.fs = r.fs
        f = np.array([b.fiducial for b in beats], dtype=np.float64)
        self.rr = np.diff(f) * 1000.0 / r.fs
        self.n = len(beats)
        self.ref = float(np.median(self.rr)) if self.rr.size else math.nan

    # each candidate is (kind, first, stop, score) with members first..stop-1
    def shortcut(self, i):
        j = _regular_run(self.rr, i, SHORTCUT_TOL)
        if j - i + 1 < SHORTCUT_MIN_BEATS:
            return None
        rate = 60000.0 / float(np.median(self.rr[i:j]))
        if not SHORTCUT_BPM[0] <= rate <= SHORTCUT_BPM[1]:
            return None
        kind = _regular_kind(self.rr[i:j])
        return (kind, i, j + 1, score_hypothesis(kind, self.beats[i:j + 1], self.r))

    def candidates(self, i, prev_ref):
        out = []
        n, rr = self.n, self.rr
        j = _regular_run(rr, i, REGULAR_TOL)
        if j - i + 1 >= PATTERNS["NORMAL"].min_beats:
            kind = _regular_kind(rr[i:j])
            out.append((kind, i, j + 1, score_hypothesis(kind, self.beats[i:j + 1], self.r)))
        ref = prev_ref if prev_ref and math.isfinite(prev_ref) else self.ref
        if 1 <= i < n - 1 and rr[i - 1] < ADVANCED_RATIO * ref:
            # extrasystole: advanced beat i followed by a longer interval
            grp = self.beats[max(0, i - 2):i + 2]
            out.append(("EXTRASYSTOLE", i, i + 1, score_hypothesis("EXTRASYSTOLE", grp, self.r)))
            if i + 2 < n and rr[i] < ADVANCED_RATIO * ref:
                grp = self.beats[max(0, i - 2):i + 3]
                out.append(("COUPLET", i, i + 2, score_hypothesis("COUPLET", grp, self.r)))
        for kind, period in (("BIGEMINY", 2), ("TRIGEMINY", 3)):
            stop = self._gemini_extent(i, period)
            if stop is not None:
                out.append((kind, i, stop, score_hypothesis(kind, self.beats[i:stop], self.r)))
        stop = self._afib_extent(i)
        if stop is not None:
            out.append(("AFIB", i, stop, score_hypothesis("AFIB", self.beats[i:stop], self.r)))
        if i >= 1 and rr[i - 1] >= ASYSTOLE_MS:
            out.append(("ASYSTOLE", i, i + 1, score_hypothesis("ASYSTOLE", self.beats[i - 1:i + 1],
                                                               self.r)))
        return out

    def _gemini_extent(self, i, period):
        """End (exclusive) of the longest bigeminal/trigeminal run from beat i.

        In cycle k the advanced beat is ``a + 1`` with ``a = i + phase + k * period``:
        ``rr[a]`` is its short coupling interval and ``rr[a + 1]`` the pause.
        """
        rr = self.rr
        kind = "BIGEMINY" if period == 2 else "TRIGEMINY"
        best = None
        for ph in range(period):
            k = 0
            stop = None
            while True:
                a = i + ph + k * period
                if a + 1 >= rr.size:
                    break
                if not rr[a] < ADVANCED_RATIO * rr[a + 1]:
                    break
                if period == 3 and a - 1 >= i and not rr[a] < ADVANCED_RATIO * rr[a - 1]:
                    break
                stop = a + 2
                k += 1
            if stop is None or k < 2 or stop - i < PATTERNS[kind].min_beats:
                continue
            if best is None or stop > best:
                best = stop
        return best

    def _afib_extent(self, i):
        """AFIB runs until a regular run with P waves of six beats begins."""
        n, rr = self.n, self.rr
        k = i
        while k < n - 1:
            j = _regular_run(rr, k, REGULAR_TOL)
            if j - k + 1 >= 6 and _p_fraction(self.beats[k:j + 1]) >= 0.5:
                break
            k += 1
        stop = k if k < n - 1 else n
        if stop - i < PATTERNS["AFIB"].min_beats:
            return None
        return stop

    def run(self):
        segs = []
        i = 0
        prev_ref = math.nan
        while i < self.n:
            sc = self.shortcut(i)
            if sc is not None:
                choice = sc
            else:
                cands = [c for c in self.candidates(i, prev_ref) if c[3] > 0.0]
                choice = None
                best_val = -1.0
                for c in cands:
                    nxt = [d for d in self.candidates(c[2], _ref_of(self.rr, c)) if d[3] > 0.0] \
                        if c[2] < self.n else []
                    la = max(nxt, key=lambda d: d[3] * (d[2] - d[1])) if nxt else None
                    w = c[2] - c[1]
                    val = c[3] * w
                    if la is not None:
                        val = (val + la[3] * (la[2] - la[1])) / (w + la[2] - la[1])
                    else:
                        val = c[3]
                    if val > best_val + 1e-12:
                        best_val, choice = val, c
            if choice is None:
                # unexplained beat: absorbed by the previous segment, or a
                # one-beat segment of the regular kind suggested by its RR
                if segs and segs[-1][0] not in ("EXTRASYSTOLE", "COUPLET"):
                    segs[-1][2] = i + 1
                    i += 1
                    continue
                rr_here = self.rr[i - 1:i + 1] if i else self.rr[:1]
                kind = _regular_kind(rr_here) if rr_here.size else "NORMAL"
                choice = (kind, i, i + 1, 0.0)
            segs.append(list(choice))
            if choice[0] in REGULAR_KINDS:
                prev_ref = _ref_of(self.rr, choice)
            i = choice[2]
        return segs


def _ref_of(rr, c):
    lo, hi = c[1], min(c[2] - 1, rr.size)
    return float(np.median(rr[lo:hi])) if hi > lo else math.nan


def segment(r: Record, beats) -> list:
    """Greedy left-to-right segmentation of ``beats`` into RhythmSegments."""
    n = r.samples.size
    if not beats:
        return [RhythmSegment("ASYSTOLE", 0, n, [], 0.0)]
    segs = _Segmenter(r, beats).run()
    fid = [b.fiducial for b in beats]
    out = []
    for kind, a, b, s in segs:
        start = 0 if a == 0 else (fid[a - 1] + fid[a]) // 2 + 1
        end = n if b >= len(beats) else (fid[b - 1] + fid[b]) // 2 + 1
        out.append(RhythmSegment(kind, int(start), int(end), list(range(a, b)), float(s)))
    # merge adjacent regular segments of the same kind that the fallback split
    merged = []
    for s in out:
        if merged and merged[-1].kind == s.kind and s.kind in REGULAR_KINDS and len(s.member_beats) == 1:
            m = merged[-1]
            merged[-1] = RhythmSegment(m.kind, m.start, s.end, m.member_beats + s.member_beats, m.score)
        else:
            merged.append(s)
    return merged


def interpret(r: Record, obs, views: Optional[SignalViews] = None) -> Interpretation:
    """Explain the beats of ``r`` by a sequence of rhythm segments.

    ``obs`` are the delineated beats of the (inversion-corrected) record.
    The record itself is never modified.
    """
    views = views or SignalViews(r)
    if not obs:
        return Interpretation([RhythmSegment("ASYSTOLE", 0, r.samples.size, [], 0.0)], [], [], [],
                              r.fs, r.samples.size, flagged=True)
    kept, dropped = fix_false_positives(r, obs, views)
    reference = quality_reference([o for o in kept if o.quality >= FP_QUALITY] or kept)
    beats, discovered = fix_false_negatives(r, kept, views, reference)
    # final delineation of the explained beat list
    anns = [BeatAnnotation(o.fiducial, o.confidence) for o in beats]
    beats = delineate(r, anns, views)
    disc_idx = {a.sample_index for a in discovered}
    discarded = [BeatAnnotation(o.fiducial, o.confidence) for o in dropped
                 if o.fiducial not in disc_idx]
    segs = segment(r, beats)
    return Interpretation(segs, beats, sorted(discarded, key=lambda a: a.sample_index),
                          discovered, r.fs, r.samples.size)
