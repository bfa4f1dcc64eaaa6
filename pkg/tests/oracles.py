"""Deliberately naive reference implementations (plain Python loops)."""
import math
import statistics


def profile(x):
    return sum(abs(x[i + 1] - x[i]) for i in range(len(x) - 1))


def mad(x):
    m = statistics.median(x)
    return statistics.median([abs(v - m) for v in x])


def pnn(rr, thr):
    diffs = [abs(rr[i + 1] - rr[i]) for i in range(len(rr) - 1)]
    if not diffs:
        return 0.0
    return sum(1 for d in diffs if d > thr) / len(diffs)


def qtc(qt, rr):
    return qt * (1000.0 / rr) ** 0.5


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    da = [v - ma for v in a]
    db = [v - mb for v in b]
    va = sum(v * v for v in da)
    vb = sum(v * v for v in db)
    if va == 0 or vb == 0:
        return None
    return sum(p * q for p, q in zip(da, db)) / math.sqrt(va * vb)


def max_xcorr(a, b, min_overlap=0.5):
    need = max(2, math.ceil(min_overlap * min(len(a), len(b))))
    best = None
    for s in range(-(len(b) - 1), len(a)):
        pairs = [(a[i], b[i - s]) for i in range(len(a)) if 0 <= i - s < len(b)]
        if len(pairs) < need:
            continue
        r = pearson([p for p, _ in pairs], [q for _, q in pairs])
        if r is not None and (best is None or r > best):
            best = r
    return 0.0 if best is None else best


def sample_entropy(x, m, r, cap):
    # templates of length m and m+1 starting at the same N-m positions
    n = len(x)
    starts = range(n - m)

    def close(i, j, length):
        return max(abs(x[i + k] - x[j + k]) for k in range(length)) <= r

    B = sum(1 for i in starts for j in starts if i < j and close(i, j, m))
    A = sum(1 for i in starts for j in starts if i < j and close(i, j, m + 1))
    return cap if A == 0 or B == 0 else -math.log(A / B)


def rr_irregularity(rr, width=8, m=1, r=30.0, cap=math.log(28.0)):
    if len(rr) < width + 1:
        return None
    ent = [sample_entropy(rr[w:w + width], m, r, cap) for w in range(len(rr) - width + 1)]
    return statistics.median(ent), max(ent)
