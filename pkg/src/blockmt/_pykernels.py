"""Reference implementations of the hot loops (numpy / itertools only)."""
from itertools import combinations

import numpy as np


def step_reject_counts(pmat, is_null, thresholds, step_up):
    """Per-row rejection count ``R`` and false-rejection count ``V``.

    ``thresholds`` are the non-decreasing level-wise critical values
    ``t_1 <= ... <= t_m``. A step-up rule rejects the ``R`` smallest p-values
    where ``R`` is the largest ``i`` with ``p_(i) <= t_i``; a step-down rule
    stops at the first ``i`` where that fails. Constant thresholds give the
    single-step rule.
    """
    pmat = np.asarray(pmat, dtype=np.float64)
    n, m = pmat.shape
    if m == 0:
        return np.zeros(n, np.int64), np.zeros(n, np.int64)
    ok = np.sort(pmat, axis=1) <= thresholds
    if step_up:
        last = m - np.argmax(ok[:, ::-1], axis=1)
        R = np.where(ok.any(axis=1), last, 0)
    else:
        R = np.where(ok.all(axis=1), m, np.argmin(ok, axis=1))
    R = R.astype(np.int64)
    cut = np.where(R > 0, thresholds[np.maximum(R - 1, 0)], -np.inf)
    V = ((pmat <= cut[:, None]) & np.asarray(is_null, dtype=bool)).sum(axis=1)
    return R, V.astype(np.int64)


def rank_sum_tail_counts(scores, nx, observed):
    """Enumerate every size-``nx`` subset of integer ``scores``.

    Returns ``(n_ge, n_le, n_abs, n_all)``: subsets whose sum is >= and <=
    ``observed``, subsets at least as far from the null mean as ``observed``,
    and the total number of subsets.
    """
    scores = [int(s) for s in scores]
    n = len(scores)
    if nx == 0 or nx == n:
        return 1, 1, 1, 1
    total = sum(scores)
    obs_dev = abs(observed * n - nx * total)
    n_ge = n_le = n_abs = n_all = 0
    for combo in combinations(scores, nx):
        s = sum(combo)
        n_all += 1
        n_ge += s >= observed
        n_le += s <= observed
        n_abs += abs(s * n - nx * total) >= obs_dev
    return n_ge, n_le, n_abs, n_all
