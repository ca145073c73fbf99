"""Compare the compiled and reference kernels on simulation-sized inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np
from scipy.special import ndtr

from blockmt import _pykernels
from blockmt.mtp import critical_values

try:
    from blockmt import _ckernels
except ImportError:
    _ckernels = None


def _cases():
    rng = np.random.default_rng(0)
    for rows, m, method in [(500, 1000, "bh95"), (500, 1000, "holm"), (500, 200, "by01")]:
        pmat = rng.random((rows, m)) ** 3
        is_null = np.broadcast_to((np.arange(m) >= m // 10).astype(np.uint8), pmat.shape)
        t, up = critical_values(method, m, 0.05)
        yield (f"step_reject_counts {method} {rows}x{m}", "step_reject_counts",
               (pmat, is_null, t, up))
    # simulation-like: 10% of tests shifted by 3 standard deviations
    z = rng.standard_normal((1000, 1000))
    z[:, :100] += 3.0
    pmat = np.ascontiguousarray(ndtr(-z))
    is_null = np.broadcast_to((np.arange(1000) >= 100).astype(np.uint8), pmat.shape)
    for method in ("bonferroni", "bh95"):
        t, up = critical_values(method, 1000, 0.05)
        yield (f"step_reject_counts {method} z-shift 1000x1000", "step_reject_counts",
               (pmat, is_null, t, up))
    for n, nx in [(12, 6), (12, 4), (10, 5)]:
        scores = np.rint(2 * (1 + np.arange(n))).astype(np.int64)
        obs = int(scores[:nx].sum())
        yield f"rank_sum_tail_counts n={n} nx={nx}", "rank_sum_tail_counts", (scores, nx, obs)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the reference backend is available")
    print(f"{'kernel':45s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, call_args in _cases():
        py = min(timeit.repeat(lambda: getattr(_pykernels, name)(*call_args),
                               number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{label:45s} {py:10.3f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: getattr(_ckernels, name)(*call_args),
                               number=1, repeat=args.repeat)) * 1e3
        same = np.array_equal(np.asarray(getattr(_pykernels, name)(*call_args)),
                              np.asarray(getattr(_ckernels, name)(*call_args)))
        flag = "" if same else "  MISMATCH"
        print(f"{label:45s} {py:10.3f} {cy:10.3f} {py / cy:7.1f}x{flag}")


if __name__ == "__main__":
    main()
