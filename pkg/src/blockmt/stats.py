"""Numerical primitives: normal and F distributions, location estimators,
the Wilcoxon-Mann-Whitney rank test and seeded random streams.
"""
from __future__ import annotations

import math
from typing import Literal

import numpy as np
from scipy import special

from . import kernels
from .errors import DomainError

SQRT2 = math.sqrt(2.0)
HUBER_C = 1.345
MAD_TO_SD = 1.4826
# combined sample size up to which the rank test is computed by enumeration
WMW_EXACT_MAX = 12


def _finite(z, name="z"):
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def normal_cdf(z):
    """Standard normal CDF, accurate to machine precision in both tails."""
    arr = _finite(z)
    return _out(0.5 * special.erfc(-arr / SQRT2), z)


def normal_sf(z):
    """Upper tail ``1 - Phi(z)`` without cancellation for large ``z``."""
    arr = _finite(z)
    return _out(0.5 * special.erfc(arr / SQRT2), z)


def normal_pdf(z):
    arr = np.asarray(z, dtype=float)
    return _out(np.exp(-0.5 * arr * arr) / math.sqrt(2.0 * math.pi), z)


# Acklam's rational approximation, used as the starting point for Newton.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def _lower_quantile(p: float) -> float:
    # p <= 0.5; residuals taken on the lower tail, where the CDF has full precision
    x = _acklam(p)
    for _ in range(50):
        step = (0.5 * math.erfc(-x / SQRT2) - p) / (math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def normal_quantile(p: float) -> float:
    """Inverse of :func:`normal_cdf` on the open interval (0, 1)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    if p <= 0.5:
        return _lower_quantile(p)
    return -_lower_quantile(1.0 - p)


def normal_isf(q: float) -> float:
    """``Phi^-1(1 - q)``, accurate for tiny upper-tail probabilities ``q``."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {q!r}")
    if q <= 0.5:
        return -_lower_quantile(q)
    return _lower_quantile(1.0 - q)


def _check_f(x, d1, d2):
    arr = _finite(x, "x")
    if np.any(arr < 0):
        raise DomainError("F statistic must be non-negative")
    if d1 <= 0 or d2 <= 0:
        raise DomainError("degrees of freedom must be positive")
    return arr


def f_cdf(x, d1: int, d2: int):
    """CDF of the Fisher F(d1, d2) distribution."""
    arr = _check_f(x, d1, d2)
    return _out(special.betainc(d1 / 2.0, d2 / 2.0, d1 * arr / (d1 * arr + d2)), x)


def f_sf(x, d1: int, d2: int):
    """Upper tail of F(d1, d2), computed from the complementary beta argument."""
    arr = _check_f(x, d1, d2)
    return _out(special.betainc(d2 / 2.0, d1 / 2.0, d2 / (d1 * arr + d2)), x)


def t_sf(t, df: float):
    """Upper tail of Student's t through ``t^2 ~ F(1, df)``."""
    arr = _finite(t, "t")
    half = 0.5 * f_sf(arr * arr, 1, df)
    return _out(np.where(arr >= 0, half, 1.0 - half), t)


def huber_location(values, c: float = HUBER_C, tol: float = 1e-9, max_iter: int = 500) -> float:
    """Huber M-estimate of location with the scale fixed at 1.4826 * MAD.

    Iterates ``theta <- theta + s * mean(psi_c((x - theta) / s))`` from the
    median. Returns the median when the MAD is zero.
    """
    x = np.asarray(values, dtype=float)
    theta = float(np.median(x))
    scale = MAD_TO_SD * float(np.median(np.abs(x - theta)))
    if scale == 0.0:
        return theta
    for _ in range(max_iter):
        step = scale * float(np.mean(np.clip((x - theta) / scale, -c, c)))
        theta += step
        if abs(step) < tol:
            break
    return theta


def location_estimate(sample, kind: Literal["mean", "median", "huber"] = "mean") -> float:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("location estimate of an empty sample")
    if not np.all(np.isfinite(x)):
        raise DomainError("sample contains non-finite values")
    if kind == "mean":
        return float(np.mean(x))
    if kind == "median":
        return float(np.median(x))
    if kind == "huber":
        return huber_location(x)
    raise DomainError(f"unknown location estimator {kind!r}")


def midranks(values) -> np.ndarray:
    """Ranks 1..n with ties given their average rank."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=float)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def wmw_test(x, y, alternative: Literal["greater", "less", "two-sided"] = "two-sided",
             exact: bool | None = None) -> float:
    """Wilcoxon-Mann-Whitney rank-sum p-value for ``x`` against ``y``.

    ``greater`` tests whether ``x`` tends to exceed ``y``. For a combined size
    of at most 12 the p-value is exact, from enumerating every assignment of
    the pooled midranks to ``x``. Larger samples use the normal approximation
    with tie-corrected variance and a continuity correction of 1/2.
    ``exact`` forces one method or the other.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or y.size == 0:
        raise DomainError("both samples must be non-empty")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("samples contain non-finite values")
    if alternative not in ("greater", "less", "two-sided"):
        raise DomainError(f"unknown alternative {alternative!r}")
    nx, ny = x.size, y.size
    n = nx + ny
    pooled = np.concatenate([x, y])
    if np.all(pooled == pooled[0]):
        return 1.0
    ranks = midranks(pooled)

    if exact is None:
        exact = n <= WMW_EXACT_MAX
    if exact:
        twice = np.rint(2.0 * ranks).astype(np.int64)
        obs = int(twice[:nx].sum())
        n_ge, n_le, n_abs, n_all = kernels.rank_sum_tail_counts(twice, nx, obs)
        count = {"greater": n_ge, "less": n_le, "two-sided": n_abs}[alternative]
        return count / n_all

    u = float(ranks[:nx].sum()) - nx * (nx + 1) / 2.0
    mu = nx * ny / 2.0
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1))
    sd = math.sqrt(nx * ny / 12.0 * ((n + 1) - tie_term))
    if alternative == "greater":
        p = normal_sf((u - mu - 0.5) / sd)
    elif alternative == "less":
        p = normal_cdf((u - mu + 0.5) / sd)
    else:
        p = 2.0 * normal_sf(max(abs(u - mu) - 0.5, 0.0) / sd)
    return min(1.0, p)


def _count(size) -> int:
    if size is None:
        return 1
    if isinstance(size, (int, np.integer)):
        return int(size)
    return math.prod(size)


class RngStream:
    """Seeded normal/uniform source with explicit child streams.

    Built on numpy's PCG64 seeded through ``SeedSequence``; a child stream is
    keyed by integers appended to the parent's spawn key, so work split into
    children is reproducible regardless of scheduling order.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=self.key)))
        self.position = 0

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(key))

    def normal(self, mu=0.0, sigma=1.0, size=None):
        self.position += _count(size)
        return self._gen.normal(mu, sigma, size)

    def standard_normal(self, size):
        self.position += _count(size)
        return self._gen.standard_normal(size)

    def uniform(self, size=None):
        self.position += _count(size)
        return self._gen.random(size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)``, sorted."""
        self.position += k
        return np.sort(self._gen.choice(n, size=k, replace=False))

    def permutation(self, n: int) -> np.ndarray:
        self.position += n
        return self._gen.permutation(n)


def sample_normal(rng: RngStream, mu: float, sigma: float, n: int) -> np.ndarray:
    if sigma < 0:
        raise DomainError("sigma must be non-negative")
    if sigma == 0:
        rng.position += n
        return np.full(n, float(mu))
    return rng.normal(mu, sigma, n)
