"""Compare the compiled kernels with their pure-Python fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one end-to-end record (detection through features) with each
backend, selecting the fallback through ``ECGC_PURE_PYTHON=1`` in a
subprocess.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ecgc import _kernels_py as py

try:
    from ecgc import _kernels as cy
except ImportError:
    cy = None


def cases():
    rng = np.random.default_rng(0)
    env = np.abs(rng.standard_normal(9000)) ** 3          # 30 s envelope at 300 Hz
    rr = 800.0 + np.cumsum(rng.normal(0, 20, 60))
    n, d = 400, 60
    X = rng.standard_normal((n, d))
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
    xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    node = rng.integers(0, 8, n).astype(np.int64)
    g = rng.standard_normal(n)
    h = rng.uniform(0.1, 0.5, n)
    G = np.bincount(node, g, 8)
    H = np.bincount(node, h, 8)
    return {
        "pick_peaks (9000 samples)": ("pick_peaks", (env, 60, 3.0, 0.5, 0.25)),
        "sampen_windows (60 RR, width 8)": ("sampen_windows", (rr, 8, 1, 30.0, np.log(28.0))),
        "best_splits (400 x 60, 8 nodes)": ("best_splits", (xs, order, node, g, h, G, H, 1.0, 2.0, 7.0)),
    }


RECORD = """
import time
from ecgc import kernels, pipeline
from ecgc.synthgen import GenSpec, generate
r, _ = generate(GenSpec(rhythm="AFIB", cls="A", p_present=False, seed=1, duration_s=30.0))
pipeline.process_record(r)
t = time.perf_counter()
for _ in range(3):
    pipeline.process_record(r)
print(kernels.COMPILED, (time.perf_counter() - t) / 3)
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<34}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, (fn, a) in cases().items():
        tp = min(timeit.repeat(lambda: getattr(py, fn)(*a), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{name:<34}{tp * 1e3:12.2f}{'n/a':>14}{'':>10}")
            continue
        tc = min(timeit.repeat(lambda: getattr(cy, fn)(*a), number=max(1, args.repeat),
                               repeat=args.repeat)) / max(1, args.repeat)
        print(f"{name:<34}{tp * 1e3:12.2f}{tc * 1e3:14.3f}{tp / tc:9.0f}x")
    for pure in ("0", "1"):
        out = subprocess.run([sys.executable, "-c", RECORD], capture_output=True, text=True,
                             env={**os.environ, "ECGC_PURE_PYTHON": pure}, check=True).stdout.split()
        label = "compiled" if out[0] == "True" else "pure python"
        print(f"process_record, 30 s AF record ({label}): {float(out[1]) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
