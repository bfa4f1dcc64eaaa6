# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, fabs

cnp.import_array()


def pick_peaks(const double[::1] feature, Py_ssize_t refractory,
               double spk, double npk, double frac):
    cdef Py_ssize_t n = feature.shape[0]
    cdef Py_ssize_t i, last = -1
    cdef double v, thr, last_v = 0.0
    idx = np.empty(n, dtype=np.int64)
    val = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] idx_v = idx
    cdef double[::1] val_v = val
    cdef Py_ssize_t count = 0
    thr = npk + frac * (spk - npk)
    for i in range(1, n - 1):
        v = feature[i]
        if not (v > feature[i - 1] and v >= feature[i + 1]):
            continue
        if v > thr:
            if last >= 0 and i - last < refractory:
                if v > last_v:
                    idx_v[count - 1] = i
                    val_v[count - 1] = v
                    last = i
                    last_v = v
                continue
            idx_v[count] = i
            val_v[count] = v
            count += 1
            last = i
            last_v = v
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk
        thr = npk + frac * (spk - npk)
    return idx[:count].copy(), val[:count].copy()


def sampen_windows(const double[::1] x, Py_ssize_t width, Py_ssize_t m,
                   double r, double cap):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nw = n - width + 1
    cdef Py_ssize_t w, i, j, k, ntpl
    cdef long a, b
    cdef bint ok
    if nw <= 0:
        return np.empty(0, dtype=np.float64)
    out = np.empty(nw, dtype=np.float64)
    cdef double[::1] out_v = out
    ntpl = width - m
    for w in range(nw):
        a = 0
        b = 0
        for i in range(ntpl):
            for j in range(i + 1, ntpl):
                ok = True
                for k in range(m):
                    if fabs(x[w + i + k] - x[w + j + k]) > r:
                        ok = False
                        break
                if not ok:
                    continue
                b += 1
                if fabs(x[w + i + m] - x[w + j + m]) <= r:
                    a += 1
        if a == 0 or b == 0:
            out_v[w] = cap
        else:
            out_v[w] = -log(<double>a / <double>b)
    return out


def best_splits(const double[:, ::1] xs, const cnp.int64_t[:, ::1] order,
                const cnp.int64_t[::1] node_of, const double[::1] g,
                const double[::1] h, const double[::1] G, const double[::1] H,
                double lam, double gamma, double min_child_weight):
    cdef Py_ssize_t d = xs.shape[0]
    cdef Py_ssize_t n = xs.shape[1]
    cdef Py_ssize_t nn = G.shape[0]
    cdef Py_ssize_t f, j, row, k
    cdef double x, gl, hl, gr, hr, gain
    feat = np.full(nn, -1, dtype=np.int64)
    thr = np.zeros(nn, dtype=np.float64)
    best = np.zeros(nn, dtype=np.float64)
    cdef cnp.int64_t[::1] feat_v = feat
    cdef double[::1] thr_v = thr
    cdef double[::1] best_v = best
    GL_a = np.zeros(nn, dtype=np.float64)
    HL_a = np.zeros(nn, dtype=np.float64)
    last_a = np.zeros(nn, dtype=np.float64)
    seen_a = np.zeros(nn, dtype=np.uint8)
    cdef double[::1] GL = GL_a
    cdef double[::1] HL = HL_a
    cdef double[::1] last_x = last_a
    cdef unsigned char[::1] seen = seen_a
    for f in range(d):
        for k in range(nn):
            GL[k] = 0.0
            HL[k] = 0.0
            seen[k] = 0
        for j in range(n):
            row = order[f, j]
            k = node_of[row]
            if k < 0:
                continue
            x = xs[f, j]
            if seen[k] and x != last_x[k]:
                gl = GL[k]
                hl = HL[k]
                gr = G[k] - gl
                hr = H[k] - hl
                if hl >= min_child_weight and hr >= min_child_weight:
                    gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam)
                                  - G[k] * G[k] / (H[k] + lam))
                    if gain - gamma > 0.0 and gain > best_v[k]:
                        best_v[k] = gain
                        feat_v[k] = f
                        thr_v[k] = 0.5 * (last_x[k] + x)
            GL[k] += g[row]
            HL[k] += h[row]
            last_x[k] = x
            seen[k] = 1
    return feat, thr, best
