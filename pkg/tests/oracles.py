"""Independent reference computations used only by the test suite.

None of these call into blockmt; they are deliberately naive.
"""
import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate
from scipy.stats import rankdata


def erf_series(x, terms=80):
    """Maclaurin series of erf, summed exactly in rationals then rounded."""
    xf = Fraction(x)
    total = Fraction(0)
    power = xf
    fact = 1
    for n in range(terms):
        if n:
            fact *= n
            power *= xf * xf
        total += (-1) ** n * power / (fact * (2 * n + 1))
    return 2.0 / math.sqrt(math.pi) * float(total)


def normal_cdf_series(z):
    return 0.5 * (1.0 + erf_series(z / math.sqrt(2.0)))


def f_pdf(x, d1, d2):
    if x <= 0:
        return 0.0
    logc = (math.lgamma((d1 + d2) / 2) - math.lgamma(d1 / 2) - math.lgamma(d2 / 2)
            + (d1 / 2) * math.log(d1 / d2))
    return math.exp(logc + (d1 / 2 - 1) * math.log(x) - ((d1 + d2) / 2) * math.log1p(d1 * x / d2))


def f_cdf_quad(x, d1, d2):
    val, _ = integrate.quad(f_pdf, 0.0, x, args=(d1, d2), epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def f_quantile_quad(p, d1, d2):
    lo, hi = 0.0, 100.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f_cdf_quad(mid, d1, d2) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- multiple testing -----------------------------------------------------------

def _harm(m):
    return sum(1.0 / i for i in range(1, m + 1))


def adjusted_oracle(p, method):
    """Adjusted p-values by explicit max/min over the sorted list (quadratic)."""
    p = [float(v) for v in p]
    m = len(p)
    order = sorted(range(m), key=lambda j: (p[j], j))
    ps = [p[j] for j in order]
    out = [0.0] * m
    for pos, j in enumerate(order):
        i = pos + 1
        if method == "bonferroni":
            v = min(1.0, m * p[j])
        elif method == "sidak":
            v = 1.0 - (1.0 - p[j]) ** m
        elif method == "holm":
            v = max(min(1.0, (m - a) * ps[a]) for a in range(i))
        elif method == "hochberg":
            v = min(min(1.0, (m - a) * ps[a]) for a in range(pos, m))
        elif method in ("bh95", "by01"):
            c = _harm(m) if method == "by01" else 1.0
            v = min(min(1.0, ps[a] * m * c / (a + 1)) for a in range(pos, m))
        else:
            raise ValueError(method)
        out[j] = v
    return np.array(out)


def step_oracle(p, method, alpha):
    """Rejected index set from the textbook level rules."""
    p = [float(v) for v in p]
    m = len(p)
    order = sorted(range(m), key=lambda j: (p[j], j))
    if method == "bonferroni":
        return {j for j in range(m) if p[j] <= alpha / m}
    if method == "sidak":
        return {j for j in range(m) if p[j] <= 1 - (1 - alpha) ** (1 / m)}
    if method == "holm":
        k = 0
        while k < m and p[order[k]] <= alpha / (m - k):
            k += 1
        return set(order[:k])
    crit = {
        "hochberg": lambda i: alpha / (m - i + 1),
        "bh95": lambda i: i * alpha / m,
        "by01": lambda i: i * alpha / (m * _harm(m)),
    }[method]
    k = 0
    for i in range(m, 0, -1):
        if p[order[i - 1]] <= crit(i):
            k = i
            break
    return set(order[:k])


def reject_counts_oracle(p_row, null_mask, method, alpha):
    rej = step_oracle(p_row, method, alpha)
    return len(rej), sum(1 for j in rej if null_mask[j])


# --- rank test ---------------------------------------------------------------

def wmw_enumeration(x, y, alternative):
    """Exact rank-sum p-value from every split of the pooled midranks."""
    pooled = list(x) + list(y)
    ranks = [Fraction(r).limit_denominator(2) for r in rankdata(pooled)]
    nx, n = len(x), len(pooled)
    obs = sum(ranks[:nx])
    total = sum(ranks)
    centre = total * Fraction(nx, n)
    ge = le = ab = count = 0
    for combo in itertools.combinations(range(n), nx):
        s = sum(ranks[i] for i in combo)
        count += 1
        ge += s >= obs
        le += s <= obs
        ab += abs(s - centre) >= abs(obs - centre)
    k = {"greater": ge, "less": le, "two-sided": ab}[alternative]
    return Fraction(k, count)


# --- bivariate F ----------------------------------------------------------------

def hotelling_f_oracle(control, treatment, constant="standard"):
    """Pooled two-sample Hotelling statistic with an explicit 2x2 inverse."""
    def mean(rows, c):
        return sum(r[c] for r in rows) / len(rows)

    def scatter(rows, a, b):
        ma, mb = mean(rows, a), mean(rows, b)
        return sum((r[a] - ma) * (r[b] - mb) for r in rows)

    xc = [list(map(float, r)) for r in control]
    xt = [list(map(float, r)) for r in treatment]
    nc, nt = len(xc), len(xt)
    n = nc + nt
    s00 = (scatter(xc, 0, 0) + scatter(xt, 0, 0)) / (n - 2)
    s01 = (scatter(xc, 0, 1) + scatter(xt, 0, 1)) / (n - 2)
    s11 = (scatter(xc, 1, 1) + scatter(xt, 1, 1)) / (n - 2)
    det = s00 * s11 - s01 * s01
    inv = [[s11 / det, -s01 / det], [-s01 / det, s00 / det]]
    d = [mean(xt, 0) - mean(xc, 0), mean(xt, 1) - mean(xc, 1)]
    quad = sum(d[i] * inv[i][j] * d[j] for i in range(2) for j in range(2))
    denom = (n - 2) if constant == "standard" else (n - 1)
    return nc * nt / n * quad * (n - 3) / (2 * denom)
