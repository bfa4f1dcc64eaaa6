"""QRS detection and tentative P/QRS/T delineation.

The detector is a polarity-insensitive energy detector: linear-phase FIR
band-pass (5-25 Hz), squared derivative, 150 ms moving-window integration and
an adaptive threshold with a 200 ms refractory period. Delineation works on a
40 Hz low-passed copy of the signal with the baseline wander removed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy import signal as ss

from . import kernels
from .record_io import Record

REFRACTORY_MS = 200.0
MWI_MS = 150.0
MIN_DURATION_S = 2.0
P_WINDOW_MS = 250.0
P_GAP_MS = 40.0
T_START_MS = 60.0
T_MAX_MS = 450.0
T_END_GAP_MS = 80.0
ST_OFFSET_MS = 60.0
# P template bank: total durations (ms) of asymmetric Gaussian bumps, matched
# with flat shoulders so that ongoing oscillations do not pass as P waves
P_TEMPLATE_MS = (80.0, 110.0, 140.0)
P_SHOULDER_MS = (30.0, 15.0)
# largest excursion allowed outside the matched bump, relative to its peak
P_ISOLATION = 0.5
P_PRESENT_SCORE = 0.7
P_PRESENT_REL_AMP = 0.05
T_PRESENT_REL_AMP = 0.05


@dataclass(frozen=True)
class BeatAnnotation:
    sample_index: int
    confidence: float = 1.0


@dataclass
class WaveBounds:
    onset: int = -1
    peak: int = -1
    offset: int = -1
    amplitude: float = 0.0
    present: bool = False

    def duration_ms(self, fs) -> float:
        return (self.offset - self.onset) * 1000.0 / fs if self.present else float("nan")


@dataclass
class BeatObservation:
    fiducial: int
    qrs: WaveBounds
    p: WaveBounds = field(default_factory=WaveBounds)
    t: WaveBounds = field(default_factory=WaveBounds)
    qrs_subwaves: list = field(default_factory=list)  # (amplitude mV, duration ms, extremum index)
    morphology_tag: str = "other"
    axis_proxy: float = 0.0
    st_deviation: float = 0.0
    quality: float = 1.0
    confidence: float = 1.0
    p_score: float = 0.0
    p_window: tuple = (0, 0)
    pp_amplitude: float = 0.0
    max_slope: float = 0.0
    level: float = 0.0

    @property
    def qrs_amplitude(self) -> float:
        return self.qrs.amplitude


class SignalViews:
    """Derived signals of one record, computed once and shared by the stages."""

    def __init__(self, r: Record):
        self.fs = r.fs
        x = r.mv()
        self.n = x.size
        self.raw = x
        self.bandpassed = _bandpass(x, r.fs)
        d = np.gradient(self.bandpassed) * r.fs
        win = max(1, int(round(MWI_MS * r.fs / 1000.0)))
        self.mwi = np.convolve(d * d, np.ones(win) / win, mode="same")
        b, a = ss.butter(3, min(40.0, 0.45 * r.fs) / (r.fs / 2.0))
        lp = ss.filtfilt(b, a, x) if x.size > 3 * max(len(a), len(b)) else x.copy()
        k1 = _odd(0.2 * r.fs)
        k2 = _odd(0.6 * r.fs)
        base = ndimage.median_filter(ndimage.median_filter(lp, size=k1, mode="nearest"),
                                     size=k2, mode="nearest")
        self.baseline = base
        self.clean = lp - base
        dy = np.diff(self.clean)
        self.noise = float(1.4826 * np.median(np.abs(dy - np.median(dy))) / np.sqrt(2.0)) if dy.size else 0.0

    def ms(self, v) -> int:
        return int(round(v * self.fs / 1000.0))


def _odd(v) -> int:
    v = max(3, int(round(v)))
    return v if v % 2 else v + 1


def _bandpass(x, fs):
    numtaps = _odd(0.3 * fs)
    hi = min(25.0, 0.45 * fs)
    taps = ss.firwin(numtaps, [5.0, hi], pass_zero=False, fs=fs)
    # odd-length symmetric taps with 'same' alignment: zero group delay
    return np.convolve(x - x.mean(), taps, mode="same")


def detect_beats(r: Record, views: Optional[SignalViews] = None) -> list:
    """Detect QRS complexes; returns strictly increasing BeatAnnotations."""
    if r.duration_s < MIN_DURATION_S:
        raise ValueError(f"{r.id}: record shorter than {MIN_DURATION_S} s")
    v = views or SignalViews(r)
    mwi = v.mwi
    if not np.any(mwi > 0):
        return []
    first = mwi[: int(2 * r.fs)]
    spk = float(np.percentile(first, 98))
    npk = float(np.median(first))
    refractory = v.ms(REFRACTORY_MS)
    idx, val = kernels.pick_peaks(np.ascontiguousarray(mwi), refractory, spk, npk, 0.25)
    if idx.size == 0:
        return []
    idx, val = list(idx), list(val)
    # search back over long gaps at half the typical peak height
    if len(idx) >= 2:
        typical = float(np.median(val))
        med_rr = float(np.median(np.diff(idx)))
        filled = []
        for a, b in zip(idx[:-1], idx[1:]):
            if b - a > 1.66 * med_rr:
                hit = _window_peak(mwi, a + refractory, b - refractory)
                if hit is not None and mwi[hit] >= 0.5 * 0.25 * typical:
                    filled.append(hit)
        if filled:
            pairs = sorted(zip(idx + filled, val + [float(mwi[h]) for h in filled]))
            idx, val = [p[0] for p in pairs], [p[1] for p in pairs]
    typical = float(np.median(val))
    out = []
    for p, pv in zip(idx, val):
        fid = _refine(v.bandpassed, p, v.ms(100.0))
        conf = float(min(1.0, pv / typical)) if typical > 0 else 0.0
        if out and fid - out[-1][0] < refractory:
            if pv > out[-1][2]:
                out[-1] = (fid, conf, pv)
            continue
        out.append((fid, conf, pv))
    return [BeatAnnotation(int(f), c) for f, c, _ in out if 0 <= f < r.samples.size]


def _window_peak(mwi, lo, hi):
    lo, hi = max(1, int(lo)), min(mwi.size - 1, int(hi))
    if hi - lo < 3:
        return None
    seg = mwi[lo:hi]
    return lo + int(np.argmax(seg))


def _refine(bp, p, half):
    lo, hi = max(0, p - half), min(bp.size, p + half + 1)
    return lo + int(np.argmax(np.abs(bp[lo:hi])))


def redetect(r: Record, lo: int, hi: int, min_energy: float,
             views: Optional[SignalViews] = None) -> Optional[int]:
    """Look for one QRS in ``[lo, hi)`` whose envelope peak reaches ``min_energy``."""
    v = views or SignalViews(r)
    hit = _window_peak(v.mwi, lo, hi)
    if hit is None or not v.mwi[hit] >= min_energy or not v.mwi[hit] > 0:
        return None
    return _refine(v.bandpassed, hit, v.ms(100.0))


def _p_templates(fs, shoulders=True):
    """Template bank as (template, offset of the bump start, bump length)."""
    bank = []
    pre = int(round(P_SHOULDER_MS[0] * fs / 1000.0)) if shoulders else 0
    post = int(round(P_SHOULDER_MS[1] * fs / 1000.0)) if shoulders else 0
    for dur in P_TEMPLATE_MS:
        n = max(5, int(round(dur * fs / 1000.0)))
        t = np.arange(n, dtype=np.float64)
        peak = 0.45 * (n - 1)
        left, right = 0.9 * n / 5.0, 1.1 * n / 5.0
        sig = np.where(t < peak, left, right)
        bump = np.exp(-0.5 * ((t - peak) / sig) ** 2)
        bank.append((np.concatenate([np.zeros(pre), bump, np.zeros(post)]), pre, n))
    return bank


def _sliding_pearson(seg, tpl):
    """Pearson correlation of ``tpl`` with every full-overlap position of ``seg``."""
    n, m = seg.size, tpl.size
    if n < m:
        return np.empty(0)
    tc = tpl - tpl.mean()
    tn = np.sqrt((tc * tc).sum())
    num = np.correlate(seg, tc, mode="valid")
    cs = np.concatenate(([0.0], np.cumsum(seg)))
    cs2 = np.concatenate(([0.0], np.cumsum(seg * seg)))
    s = cs[m:] - cs[:-m]
    s2 = cs2[m:] - cs2[:-m]
    var = s2 - s * s / m
    floor = 1e-12 * max(1.0, float(np.max(np.abs(s2)))) if s2.size else 1e-12
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(var > floor, num / (np.sqrt(np.maximum(var, 0.0)) * tn), 0.0)
    return r


def _p_match(seg, fs, shoulders=True):
    """Best (score, bump start, bump length) of the P template bank on ``seg``."""
    best = (0.0, 0, 0)
    seg = np.asarray(seg, dtype=np.float64)
    if seg.size < 2 or np.ptp(seg) == 0:
        return best
    for tpl, pre, length in _p_templates(fs, shoulders):
        r = _sliding_pearson(seg, tpl)
        if r.size and r.max() > best[0]:
            j = int(np.argmax(r))
            best = (float(r[j]), j + pre, length)
    return best


def p_wave_score(r: Record, window) -> float:
    """How much ``r`` looks like an upright P wave inside ``window`` (0..1).

    Maximum normalised cross-correlation against the template bank, negative
    correlations clipped to zero; a flat window scores 0.
    """
    lo, hi = int(window[0]), int(window[1])
    if hi <= lo:
        raise ValueError("empty window")
    if lo < 0 or hi > r.samples.size:
        raise ValueError("window outside record")
    return p_wave_score_array(r.mv()[lo:hi], r.fs)


def p_wave_score_array(seg, fs) -> float:
    seg = np.asarray(seg, dtype=np.float64)
    if seg.size == 0:
        raise ValueError("empty window")
    score = _p_match(seg, fs)[0]
    if score == 0.0:
        # window too short for the shouldered templates
        score = _p_match(seg, fs, shoulders=False)[0]
    return float(max(0.0, min(1.0, score)))


def _lobes(y, lo, hi, deadband):
    """Signed lobes of ``y[lo:hi+1]``: (sign, start, end, extremum index)."""
    lobes = []
    cur = None
    for i in range(lo, hi + 1):
        s = 1 if y[i] > deadband else (-1 if y[i] < -deadband else 0)
        if s == 0:
            continue
        if cur is not None and cur[0] == s:
            cur[2] = i
            if abs(y[i]) > abs(y[cur[3]]):
                cur[3] = i
        else:
            if cur is not None:
                lobes.append(tuple(cur))
            cur = [s, i, i, i]
    if cur is not None:
        lobes.append(tuple(cur))
    return lobes


def _tag(lobes, y):
    signs = tuple(l[0] for l in lobes)
    amps = [abs(y[l[3]]) for l in lobes]
    if not lobes:
        return "other"
    if len(lobes) == 1:
        return "R" if signs[0] > 0 else "QS"
    if len(lobes) == 2:
        if signs == (1, -1):
            return "Rs" if amps[0] >= amps[1] else "rS"
        return "other"
    if len(lobes) == 3:
        if signs == (-1, 1, -1):
            return "qRs"
        if signs == (1, -1, 1):
            return "rSr'"
    return "other"


def _flattest_level(y, lo, hi, width, near_hi=True, slack=None):
    """Mean of a flat ``width``-sample stretch in [lo, hi).

    Among the stretches whose range is within ``slack`` of the flattest one,
    the stretch closest to the QRS side is used (``hi`` when ``near_hi``).
    """
    lo, hi = max(0, int(lo)), min(y.size, int(hi))
    if hi - lo < width or width < 2:
        return None
    win = np.lib.stride_tricks.sliding_window_view(y[lo:hi], width)
    rng = win.max(axis=1) - win.min(axis=1)
    ok = np.flatnonzero(rng <= rng.min() + (slack if slack is not None else 0.0))
    j = int(ok[-1] if near_hi else ok[0])
    return float(win[j].mean())


def _quiet_edge(y, start, stop, step, thr, run, slope_thr=0.0):
    """Walk from ``start`` toward ``stop`` until ``run`` consecutive quiet samples.

    A sample is quiet when it is within ``thr`` of the isoelectric level, or
    within ``3 * thr`` while the local slope stays under ``slope_thr``.
    """
    count = 0
    i = start
    n = y.size
    while i != stop:
        a = abs(y[i])
        sl = abs(y[min(n - 1, i + 1)] - y[max(0, i - 1)]) * 0.5
        if a <= thr or (a <= 3.0 * thr and sl <= slope_thr):
            count += 1
            if count >= run:
                return i - step * (run - 1)
        else:
            count = 0
        i += step
    return stop


def delineate(r: Record, anns, views: Optional[SignalViews] = None,
              reference: Optional[tuple] = None) -> list:
    """Delineate every annotated beat; returns one BeatObservation per annotation.

    ``reference`` optionally fixes the (median peak-to-peak, median slope)
    used to normalise beat quality; by default both come from ``anns`` itself.
    """
    v = views or SignalViews(r)
    y = v.clean
    fs = r.fs
    n = y.size
    anns = sorted(anns, key=lambda a: a.sample_index)
    fids = [int(a.sample_index) for a in anns]
    obs = []
    run = max(2, v.ms(12.0))
    for k, a in enumerate(anns):
        f = fids[k]
        left_lim = max(0, (fids[k - 1] + f) // 2 + 1 if k else f - v.ms(150.0), f - v.ms(150.0))
        right_lim = min(n - 1, (f + fids[k + 1]) // 2 - 1 if k + 1 < len(fids) else f + v.ms(150.0),
                        f + v.ms(150.0))
        core_lo, core_hi = max(left_lim, f - v.ms(60.0)), min(right_lim, f + v.ms(60.0))
        core = y[core_lo:core_hi + 1]
        pp = float(core.max() - core.min()) if core.size else 0.0
        flat = v.ms(20.0)
        slack = max(0.01 * np.ptp(y[core_lo:core_hi + 1]), 2.0 * v.noise)
        level_pre = _flattest_level(y, max(left_lim, f - v.ms(200.0)), f - v.ms(30.0), flat,
                                    True, slack)
        level_post = _flattest_level(y, f + v.ms(30.0), min(right_lim, f + v.ms(200.0)), flat,
                                     False, slack)
        if level_pre is None:
            level_pre = level_post if level_post is not None else 0.0
        if level_post is None:
            level_post = level_pre
        thr = max(0.03 * pp, 3.0 * v.noise, 1e-12)
        rel = np.abs(core - level_pre)
        big = np.flatnonzero(rel >= 0.3 * rel.max()) if pp > 0 else np.array([f - core_lo])
        first_big = core_lo + int(big[0])
        last_big = core_lo + int(big[-1])
        d_core = np.abs(np.diff(core)).max() if core.size > 1 else 0.0
        slope_thr = 0.05 * d_core
        onset = _quiet_edge(y - level_pre, first_big, left_lim, -1, thr, run, slope_thr)
        offset = _quiet_edge(y - level_post, last_big, right_lim, 1, thr, run, slope_thr)
        onset = min(onset, f)
        offset = max(offset, f)
        if offset <= onset:
            offset = min(n - 1, onset + 1)
        deadband = max(0.05 * pp, thr)
        yq = y - level_pre
        lobes = _lobes(yq, onset, offset, deadband)
        if len(lobes) > 3:
            sums = [sum(abs(yq[l[3]]) for l in lobes[i:i + 3]) for i in range(len(lobes) - 2)]
            i0 = int(np.argmax(sums))
            lobes = lobes[i0:i0 + 3]
        subwaves = [(float(yq[l[3]]), (l[2] - l[1] + 1) * 1000.0 / fs, int(l[3])) for l in lobes]
        if lobes:
            main = max(lobes, key=lambda l: abs(yq[l[3]]))
            amp = float(yq[main[3]])
            peak = int(main[3])
        else:
            peak = f
            amp = float(yq[f])
        seg = yq[onset:offset + 1]
        slope = float(np.max(np.abs(np.diff(seg))) * fs) if seg.size > 1 else 0.0
        ob = BeatObservation(
            fiducial=f,
            qrs=WaveBounds(onset, peak, offset, amp, True),
            qrs_subwaves=subwaves,
            morphology_tag=_tag(lobes, yq),
            axis_proxy=float(seg.sum() / fs),
            confidence=float(a.confidence),
            pp_amplitude=pp,
            max_slope=slope,
            level=float(level_pre),
        )
        obs.append(ob)

    for k, ob in enumerate(obs):
        _delineate_p_t(ob, k, obs, y, v)

    if reference is None:
        reference = quality_reference(obs)
    for ob in obs:
        ob.quality = beat_quality(ob, reference, fs)
    return obs


def _delineate_p_t(ob, k, obs, y, v):
    fs = v.fs
    n = y.size
    on, off = ob.qrs.onset, ob.qrs.offset
    pp = ob.pp_amplitude
    y = y - ob.level
    prev_limit = 0
    if k:
        prev = obs[k - 1]
        prev_limit = (prev.t.offset if prev.t.present else prev.qrs.offset) + 1
    hi = on - v.ms(P_GAP_MS)
    lo = max(prev_limit, hi - v.ms(P_WINDOW_MS), 0)
    ob.p_window = (int(lo), int(max(lo, hi)))
    if hi - lo >= v.ms(60.0):
        # the shoulders may reach past the window: up to the QRS onset and
        # back to the previous wave
        lo = max(prev_limit, lo - v.ms(P_SHOULDER_MS[0]))
        hi = on
        seg = y[lo:hi]
        s_pos = _p_match(seg, fs)
        s_neg = _p_match(-seg, fs)
        best, sign = (s_pos, 1.0) if s_pos[0] >= s_neg[0] else (s_neg, -1.0)
        score, start, length = best
        ob.p_score = float(max(0.0, min(1.0, score)))
        if length:
            p_on = lo + start
            p_off = min(lo + start + length - 1, on)
            region = y[p_on:p_off + 1]
            pk = p_on + int(np.argmax(sign * region))
            amp = float(y[pk])
            # an isolated bump: nothing comparable elsewhere in the window
            dev = np.abs(seg - np.median(seg))
            guard = v.ms(10.0)
            outside = np.concatenate([dev[:max(0, start - guard)], dev[start + length + guard:]])
            isolated = outside.size == 0 or outside.max() <= P_ISOLATION * dev[pk - lo]
            if (score >= P_PRESENT_SCORE and isolated and sign * amp >= P_PRESENT_REL_AMP * pp
                    and sign * amp >= 3.0 * v.noise):
                ob.p = WaveBounds(int(p_on), int(pk), int(p_off), amp, True)
    # T wave
    next_on = obs[k + 1].qrs.onset if k + 1 < len(obs) else n
    t_lo = off + v.ms(T_START_MS)
    t_hi = min(next_on - v.ms(T_END_GAP_MS), off + v.ms(T_MAX_MS), n)
    if t_hi - t_lo >= v.ms(40.0):
        seg = y[t_lo:t_hi]
        j = int(np.argmax(np.abs(seg)))
        amp = float(seg[j])
        if abs(amp) >= T_PRESENT_REL_AMP * pp and abs(amp) >= 3.0 * v.noise:
            pk = t_lo + j
            lim = 0.2 * abs(amp)
            a = pk
            while a > off + 1 and np.sign(y[a - 1]) == np.sign(amp) and abs(y[a - 1]) > lim:
                a -= 1
            b = pk
            stop = min(next_on - 1, n - 1)
            while b < stop and np.sign(y[b + 1]) == np.sign(amp) and abs(y[b + 1]) > lim:
                b += 1
            ob.t = WaveBounds(int(a), int(pk), int(b), amp, True)
    # ST deviation against the PR-segment level
    pr_lo = ob.p.offset if ob.p.present else max(0, on - v.ms(P_GAP_MS))
    pr_seg = y[pr_lo:on] if on > pr_lo else y[max(0, on - 1):on + 1]
    st_idx = min(n - 1, off + v.ms(ST_OFFSET_MS))
    ob.st_deviation = float(y[st_idx] - pr_seg.mean()) if pr_seg.size else 0.0


def quality_reference(obs) -> tuple:
    if not obs:
        return (0.0, 0.0)
    return (float(np.median([o.pp_amplitude for o in obs])),
            float(np.median([o.max_slope for o in obs])))


def beat_quality(ob: BeatObservation, reference, fs) -> float:
    """Beat plausibility in [0, 1] from amplitude, steepness and width.

    Each term compares the beat with the record's typical beat: amplitude
    against 60 % of the median peak-to-peak, slope against half the median
    maximum slope, and QRS width against a 40 ms floor.
    """
    med_pp, med_slope = reference
    if med_pp <= 0 or med_slope <= 0:
        return 0.0
    amp_term = min(1.0, ob.pp_amplitude / (0.6 * med_pp))
    slope_term = min(1.0, ob.max_slope / (0.5 * med_slope))
    width_term = min(1.0, ob.qrs.duration_ms(fs) / 40.0)
    return float(np.clip(amp_term * slope_term * width_term, 0.0, 1.0))
