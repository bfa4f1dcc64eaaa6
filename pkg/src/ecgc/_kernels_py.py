"""Pure-Python/numpy versions of the compiled kernels.

Every function here is the reference semantics for its twin in
``_kernels.pyx``; results must agree bit-for-bit.
"""
import math

import numpy as np


def pick_peaks(feature, refractory, spk, npk, frac):
    """Adaptive-threshold peak picking on a QRS energy envelope.

    Local maxima above ``npk + frac * (spk - npk)`` are accepted as beats and
    update the signal-peak estimate; the rest update the noise-peak estimate.
    A larger peak inside the refractory period replaces the previous one.
    """
    feature = np.asarray(feature, dtype=np.float64)
    n = feature.shape[0]
    idx, val = [], []
    last, last_v = -1, 0.0
    thr = npk + frac * (spk - npk)
    for i in range(1, n - 1):
        v = float(feature[i])
        if not (v > feature[i - 1] and v >= feature[i + 1]):
            continue
        if v > thr:
            if last >= 0 and i - last < refractory:
                if v > last_v:
                    idx[-1] = i
                    val[-1] = v
                    last, last_v = i, v
                continue
            idx.append(i)
            val.append(v)
            last, last_v = i, v
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk
        thr = npk + frac * (spk - npk)
    return np.asarray(idx, dtype=np.int64), np.asarray(val, dtype=np.float64)


def sampen_windows(x, width, m, r, cap):
    """Sample entropy of every length-``width`` sliding window of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    nw = x.shape[0] - width + 1
    if nw <= 0:
        return np.empty(0, dtype=np.float64)
    out = np.empty(nw, dtype=np.float64)
    ntpl = width - m
    for w in range(nw):
        a = b = 0
        for i in range(ntpl):
            for j in range(i + 1, ntpl):
                if any(abs(x[w + i + k] - x[w + j + k]) > r for k in range(m)):
                    continue
                b += 1
                if abs(x[w + i + m] - x[w + j + m]) <= r:
                    a += 1
        out[w] = cap if a == 0 or b == 0 else -math.log(a / b)
    return out


def best_splits(xs, order, node_of, g, h, G, H, lam, gamma, min_child_weight):
    """Best exact split per tree node, scanning presorted feature columns.

    ``xs[f]`` holds feature ``f`` sorted ascending and ``order[f]`` the row
    indices in that order. Rows with ``node_of < 0`` are ignored. Returns
    ``(feature, threshold, gain)`` per node; ``feature == -1`` means no split
    cleared ``gamma`` and ``min_child_weight``.
    """
    d = xs.shape[0]
    nn = G.shape[0]
    feat = np.full(nn, -1, dtype=np.int64)
    thr = np.zeros(nn, dtype=np.float64)
    best = np.zeros(nn, dtype=np.float64)
    for f in range(d):
        nodes = node_of[order[f]]
        for k in range(nn):
            pos = np.flatnonzero(nodes == k)
            if pos.size < 2:
                continue
            rows = order[f, pos]
            xk = xs[f, pos]
            # left sums before each boundary, accumulated in scan order
            gl = np.cumsum(g[rows])[:-1]
            hl = np.cumsum(h[rows])[:-1]
            gr = G[k] - gl
            hr = H[k] - hl
            ok = (xk[1:] != xk[:-1]) & (hl >= min_child_weight) & (hr >= min_child_weight)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                              - G[k] * G[k] / (H[k] + lam))
            ok &= (gain - gamma) > 0.0
            if not ok.any():
                continue
            cand = np.where(ok, gain, -np.inf)
            j = int(np.argmax(cand))
            if cand[j] > best[k]:
                best[k] = cand[j]
                feat[k] = f
                thr[k] = 0.5 * (xk[j] + xk[j + 1])
    return feat, thr, best
