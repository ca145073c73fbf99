# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics are defined by ``_pykernels``; keep the two in sync."""
import numpy as np

from libc.stdlib cimport free, malloc


def step_reject_counts(const double[:, ::1] pmat, const unsigned char[:, :] is_null,
                       const double[::1] thresholds, bint step_up):
    cdef Py_ssize_t n = pmat.shape[0]
    cdef Py_ssize_t m = pmat.shape[1]
    cdef Py_ssize_t r, j, i, lo, base, span, half, rej
    cdef long long cum, nv
    cdef double p, t, t_min, t_max

    R = np.zeros(n, dtype=np.int64)
    V = np.zeros(n, dtype=np.int64)
    cdef long long[::1] Rv = R
    cdef long long[::1] Vv = V
    if m == 0:
        return R, V
    t_min = thresholds[0]
    t_max = thresholds[m - 1]

    cdef long long* counts = <long long*> malloc((m + 1) * sizeof(long long))
    if counts == NULL:
        raise MemoryError()
    try:
        with nogil:
            for r in range(n):
                for i in range(m + 1):
                    counts[i] = 0
                # bucket = smallest level whose threshold admits p
                for j in range(m):
                    p = pmat[r, j]
                    if p > t_max:
                        continue
                    if p <= t_min:
                        counts[0] += 1
                        continue
                    # branchless lower bound over levels 1..m-1
                    base = 1
                    span = m - 1
                    while span > 1:
                        half = span >> 1
                        base += half * (thresholds[base + half - 1] < p)
                        span -= half
                    lo = base
                    counts[lo] += 1
                cum = 0
                rej = 0
                for i in range(m):
                    cum += counts[i]
                    if cum >= i + 1:
                        rej = i + 1
                    elif not step_up:
                        break
                nv = 0
                if rej > 0:
                    t = thresholds[rej - 1]
                    for j in range(m):
                        if is_null[r, j] and pmat[r, j] <= t:
                            nv += 1
                Rv[r] = rej
                Vv[r] = nv
    finally:
        free(counts)
    return R, V


def rank_sum_tail_counts(const long long[::1] scores, Py_ssize_t nx, long long observed):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t i, k
    cdef long long total = 0, s, dev
    cdef long long n_ge = 0, n_le = 0, n_abs = 0, n_all = 0
    for i in range(n):
        total += scores[i]
    cdef long long obs_dev = observed * n - nx * total
    if obs_dev < 0:
        obs_dev = -obs_dev
    if nx == 0 or nx == n:
        return 1, 1, 1, 1

    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(nx * sizeof(Py_ssize_t))
    if idx == NULL:
        raise MemoryError()
    try:
        for i in range(nx):
            idx[i] = i
        while True:
            s = 0
            for i in range(nx):
                s += scores[idx[i]]
            n_all += 1
            if s >= observed:
                n_ge += 1
            if s <= observed:
                n_le += 1
            dev = s * n - nx * total
            if dev < 0:
                dev = -dev
            if dev >= obs_dev:
                n_abs += 1
            # next combination in lexicographic order
            k = nx - 1
            while k >= 0 and idx[k] == n - nx + k:
                k -= 1
            if k < 0:
                break
            idx[k] += 1
            for i in range(k + 1, nx):
                idx[i] = idx[i - 1] + 1
    finally:
        free(idx)
    return n_ge, n_le, n_abs, n_all
