"""Block partitions, block summary statistics and block-level tests."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import mtp
from .errors import DomainError, PartitionError, SingularCovarianceError
from .stats import location_estimate, normal_isf, normal_sf, t_sf, f_sf, wmw_test

SummaryKind = Literal["mean", "median", "huber", "truncated_mean", "bivariate"]
SUMMARY_KINDS = ("mean", "median", "huber", "truncated_mean", "bivariate")

# relative tolerance below which a pooled variance counts as zero
_DEGENERATE_RTOL = 1e-12


_KEEP_ALL = object()


@dataclass
class GlobalRegion:
    """Scalar measurements over ``M`` small regions.

    ``excluded`` masks regions that take no part in the analysis.
    """

    values: np.ndarray
    excluded: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.excluded is None:
            self.excluded = np.zeros(self.values.size, dtype=bool)
        else:
            self.excluded = np.asarray(self.excluded, dtype=bool).ravel()
            if self.excluded.shape != self.values.shape:
                raise DomainError("mask and values differ in length")
        if self.M < 1:
            raise DomainError("a region needs at least one unmasked small region")

    @property
    def M(self) -> int:
        return int(np.sum(~self.excluded))


@dataclass
class BlockPartition:
    """Blocks given as member index arrays, one per block label."""

    members: list[np.ndarray]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.members = [np.asarray(mem, dtype=np.int64).ravel() for mem in self.members]
        if not self.labels:
            self.labels = [str(i + 1) for i in range(len(self.members))]
        if len(self.labels) != len(self.members):
            raise DomainError("one label per block required")

    @classmethod
    def from_labels(cls, assignment: Sequence, unassigned=_KEEP_ALL) -> "BlockPartition":
        """Build from a region -> block-label array.

        Entries equal to ``unassigned`` (e.g. masked regions) belong to no block.
        Blocks are ordered by first appearance.
        """
        arr = np.asarray(assignment)
        order: dict = {}
        for j, lab in enumerate(arr.tolist()):
            if unassigned is not _KEEP_ALL and lab == unassigned:
                continue
            order.setdefault(lab, []).append(j)
        return cls([np.array(v) for v in order.values()], [str(k) for k in order])

    @property
    def m(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([mem.size for mem in self.members], dtype=np.int64)

    def assignment(self, n_regions: int) -> np.ndarray:
        """Region -> block position array (``-1`` for unassigned). Assumes validity."""
        out = np.full(n_regions, -1, dtype=np.int64)
        for i, mem in enumerate(self.members):
            out[mem] = i
        return out


@dataclass
class PartitionReport:
    ok: bool
    overlaps: list[int]
    gaps: list[int]
    masked_assigned: list[int]
    out_of_range: list[int]
    empty_blocks: list[str]
    total_size: int
    M: int

    def raise_if_invalid(self) -> None:
        if self.ok:
            return
        parts = []
        for name in ("overlaps", "gaps", "masked_assigned", "out_of_range", "empty_blocks"):
            bad = getattr(self, name)
            if bad:
                shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
                parts.append(f"{name.replace('_', ' ')}: {shown}")
        raise PartitionError("invalid partition; " + "; ".join(parts))


def validate_partition(region: GlobalRegion, part: BlockPartition) -> PartitionReport:
    """Check that the blocks form a disjoint cover of the unmasked regions."""
    n = region.values.size
    counts = np.zeros(n, dtype=np.int64)
    out_of_range: list[int] = []
    for mem in part.members:
        good = (mem >= 0) & (mem < n)
        out_of_range.extend(mem[~good].tolist())
        np.add.at(counts, mem[good], 1)
    included = ~region.excluded
    overlaps = np.flatnonzero(counts > 1).tolist()
    gaps = np.flatnonzero(included & (counts == 0)).tolist()
    masked = np.flatnonzero(region.excluded & (counts > 0)).tolist()
    empty = [lab for lab, mem in zip(part.labels, part.members) if mem.size == 0]
    total = int(part.sizes.sum())
    ok = not (overlaps or gaps or masked or out_of_range or empty) and total == region.M
    return PartitionReport(ok, overlaps, gaps, masked, sorted(set(out_of_range)), empty, total, region.M)


@dataclass(frozen=True)
class BlockSummary:
    block: str
    kind: str
    value: float | tuple[float, float]
    size: int


def truncated_mean(values, threshold: float = 0.0) -> float:
    """Fraction of values strictly above ``threshold``."""
    x = np.asarray(values, dtype=float)
    return float(np.mean(x > threshold))


def summarize_block(values, kind: SummaryKind = "mean", threshold: float = 0.0,
                    block: str = "") -> BlockSummary:
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise DomainError("cannot summarize an empty block")
    if kind in ("mean", "median", "huber"):
        value: float | tuple[float, float] = location_estimate(x, kind)
    elif kind == "truncated_mean":
        value = truncated_mean(x, threshold)
    elif kind == "bivariate":
        value = (float(np.mean(x)), truncated_mean(x, threshold))
    else:
        raise DomainError(f"unknown summary kind {kind!r}")
    return BlockSummary(block, kind, value, int(x.size))


def srw_critical_value(alpha: float, M: int, mu0: float = 0.0, sigma0: float = 1.0) -> float:
    """Bonferroni critical value for one small region: ``mu0 + sigma0 * z_{alpha/M}``."""
    if not 0 < alpha < 1 or M < 1 or sigma0 <= 0:
        raise DomainError("need alpha in (0,1), M >= 1, sigma0 > 0")
    return mu0 + sigma0 * normal_isf(alpha / M)


def bwa_critical_value(alpha: float, m: int, b: int, mu0: float = 0.0, sigma0: float = 1.0) -> float:
    """Bonferroni critical value for the mean of a block of ``b`` regions among ``m`` blocks."""
    if not 0 < alpha < 1 or m < 1 or b < 1 or sigma0 <= 0:
        raise DomainError("need alpha in (0,1), m >= 1, b >= 1, sigma0 > 0")
    return mu0 + sigma0 / math.sqrt(b) * normal_isf(alpha / m)


def block_z_pvalue(summary, b: int, mu0: float = 0.0, sigma0: float = 1.0):
    """One-sided p-value of a block location summary against ``N(mu0, sigma0^2 / b)``.

    Median and Huber summaries are referred to the same null as the mean,
    which makes their tests conservative.
    """
    if sigma0 <= 0:
        raise DomainError("sigma0 must be positive")
    if b < 1:
        raise DomainError("block size must be >= 1")
    t = summary.value if isinstance(summary, BlockSummary) else summary
    if isinstance(t, tuple):
        raise DomainError("block_z_pvalue needs a scalar summary")
    return normal_sf(math.sqrt(b) * (np.asarray(t, dtype=float) - mu0) / sigma0)


def two_sample_location_test(control, treatment, alternative: str = "greater",
                             reference: Literal["t", "z"] = "t") -> float:
    """Pooled-variance two-sample test of ``mean(treatment) - mean(control)``.

    ``reference="z"`` refers the statistic to the standard normal;
    ``"t"`` to Student's t with ``n_c + n_t - 2`` degrees of freedom. A zero
    pooled variance leaves the statistic undefined and yields ``p = 1``.
    """
    x = np.asarray(control, dtype=float)
    y = np.asarray(treatment, dtype=float)
    nc, nt = x.shape[0], y.shape[0]
    if nc < 2 or nt < 2:
        raise DomainError("each group needs at least two observations")
    diff = y.mean(axis=0) - x.mean(axis=0)
    df = nc + nt - 2
    pooled = ((nc - 1) * x.var(axis=0, ddof=1) + (nt - 1) * y.var(axis=0, ddof=1)) / df
    scale = np.maximum(np.abs(x).max(axis=0), np.abs(y).max(axis=0))
    degenerate = pooled <= (_DEGENERATE_RTOL * scale) ** 2
    se = np.sqrt(np.where(degenerate, 1.0, pooled) * (1.0 / nc + 1.0 / nt))
    stat = np.where(degenerate, 0.0, diff / se)
    if reference == "t":
        upper = np.asarray(t_sf(stat, df))
    elif reference == "z":
        upper = np.asarray(normal_sf(stat))
    else:
        raise DomainError(f"unknown reference distribution {reference!r}")
    if alternative == "greater":
        p = upper
    elif alternative == "less":
        p = 1.0 - upper
    elif alternative == "two-sided":
        p = 2.0 * np.minimum(upper, 1.0 - upper)
    else:
        raise DomainError(f"unknown alternative {alternative!r}")
    p = np.where(degenerate, 1.0, np.clip(p, 0.0, 1.0))
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class BivariateResult:
    f: float
    p: float
    df: tuple[int, int]


def bivariate_f_test(control, treatment, constant: Literal["standard", "printed"] = "standard"
                     ) -> BivariateResult:
    """Two-sample F test on bivariate block summaries.

    ``control`` and ``treatment`` are ``(n, 2)`` arrays of per-subject
    ``(mean, truncated_mean)`` pairs. The statistic is the pooled-covariance
    Hotelling form scaled to ``F(2, n_c + n_t - 3)``; ``constant="printed"``
    swaps the scaling denominator ``2(n_c + n_t - 2)`` for ``2(n_c + n_t - 1)``.

    Raises
    ------
    SingularCovarianceError
        When the pooled covariance is singular. ``component`` is ``"mean"``,
        ``"truncated_mean"`` or ``"both"`` for zero-variance components, and
        ``"collinear"`` otherwise.
    """
    x = np.asarray(control, dtype=float)
    y = np.asarray(treatment, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != 2 or y.shape[1] != 2:
        raise DomainError("bivariate summaries must be (n, 2) arrays")
    nc, nt = x.shape[0], y.shape[0]
    if nc < 2 or nt < 2:
        raise DomainError("each group needs at least two subjects")
    n = nc + nt
    S = ((nc - 1) * np.cov(x, rowvar=False) + (nt - 1) * np.cov(y, rowvar=False)) / (n - 2)
    scale = np.maximum(np.abs(x).max(axis=0), np.abs(y).max(axis=0))
    zero = np.diag(S) <= (_DEGENERATE_RTOL * scale) ** 2
    if zero.all():
        raise SingularCovarianceError("both")
    if zero[0]:
        raise SingularCovarianceError("mean")
    if zero[1]:
        raise SingularCovarianceError("truncated_mean")
    det = S[0, 0] * S[1, 1] - S[0, 1] ** 2
    if det <= 1e-12 * S[0, 0] * S[1, 1]:
        raise SingularCovarianceError("collinear")
    d = y.mean(axis=0) - x.mean(axis=0)
    quad = (S[1, 1] * d[0] ** 2 - 2.0 * S[0, 1] * d[0] * d[1] + S[0, 0] * d[1] ** 2) / det
    denom = n - 2 if constant == "standard" else n - 1
    if constant not in ("standard", "printed"):
        raise DomainError(f"unknown constant variant {constant!r}")
    f = nc * nt / n * quad * (n - 3) / (2.0 * denom)
    df = (2, n - 3)
    return BivariateResult(float(f), float(f_sf(f, *df)), df)


@dataclass(frozen=True)
class BlockTest:
    statistic: float
    p: float
    fallback: str | None = None


def bivariate_block_test(control, treatment, constant: str = "standard",
                         alternative: str = "greater", reference: str = "t") -> BlockTest:
    """:func:`bivariate_f_test` with a univariate fallback for singular covariance.

    A zero-variance component is dropped and the other one tested alone:
    the mean by :func:`two_sample_location_test`, the truncated mean by the
    rank test. Collinear summaries fall back to the mean.
    """
    try:
        res = bivariate_f_test(control, treatment, constant)
        return BlockTest(res.f, res.p)
    except SingularCovarianceError as err:
        x = np.asarray(control, dtype=float)
        y = np.asarray(treatment, dtype=float)
        if err.component == "both":
            return BlockTest(float("nan"), 1.0, "both")
        if err.component == "mean":
            p = wmw_test(y[:, 1], x[:, 1], alternative)
            return BlockTest(float("nan"), p, "mean")
        p = two_sample_location_test(x[:, 0], y[:, 0], alternative, reference)
        return BlockTest(float("nan"), float(p), err.component)


TestKind = Literal["z", "location", "wmw", "bivariate"]


@dataclass
class BlockAnalysis:
    labels: list[str]
    summaries: list
    pvalues: np.ndarray
    adjusted: np.ndarray
    rejected: np.ndarray
    method: str
    alpha: float
    fallbacks: list
    table: mtp.DecisionTable | None = None
    rates: mtp.ErrorRates | None = None

    def rejected_labels(self) -> list[str]:
        return [self.labels[i] for i in np.flatnonzero(self.rejected)]


def run_block_analysis(region, part: BlockPartition, summary: SummaryKind = "mean",
                       test: TestKind | None = None, method="bonferroni", alpha: float = 0.05,
                       mu0: float = 0.0, sigma0: float = 1.0, threshold: float = 0.0,
                       treatment=None, affected_blocks=None, alternative: str = "greater",
                       reference: str = "t", constant: str = "standard") -> BlockAnalysis:
    """Summarize every block, test it, and correct for the ``m`` block tests.

    With a single :class:`GlobalRegion` the block tests are one-sample
    ``z`` tests against ``N(mu0, sigma0^2 / b)``. With two groups (``region``
    the control array and ``treatment`` the treatment array, subjects by
    regions) the test is the pooled two-sample location test, the rank test
    or the bivariate F test, chosen from ``summary`` unless ``test`` says
    otherwise. ``affected_blocks`` (labels or positions) adds the decision
    table.
    """
    two_group = treatment is not None
    if two_group:
        control = np.atleast_2d(np.asarray(region, dtype=float))
        treat = np.atleast_2d(np.asarray(treatment, dtype=float))
        if control.shape[1] != treat.shape[1]:
            raise DomainError("groups must cover the same regions")
        n_regions = control.shape[1]
        dummy = GlobalRegion(np.zeros(n_regions))
        validate_partition(dummy, part).raise_if_invalid()
    else:
        if not isinstance(region, GlobalRegion):
            region = GlobalRegion(region)
        validate_partition(region, part).raise_if_invalid()

    if test is None:
        test = {"truncated_mean": "wmw", "bivariate": "bivariate"}.get(
            summary, "location" if two_group else "z")
    if test != "z" and not two_group:
        raise DomainError(f"test {test!r} needs two groups")

    summaries, pvals, fallbacks = [], [], []
    for lab, mem in zip(part.labels, part.members):
        if not two_group:
            s = summarize_block(region.values[mem], summary, threshold, lab)
            summaries.append(s)
            pvals.append(float(block_z_pvalue(s, mem.size, mu0, sigma0)))
            fallbacks.append(None)
            continue
        xc, xt = control[:, mem], treat[:, mem]
        sc = np.array([summarize_block(r, summary, threshold, lab).value for r in xc], dtype=float)
        st = np.array([summarize_block(r, summary, threshold, lab).value for r in xt], dtype=float)
        summaries.append((sc, st))
        if test == "bivariate":
            bt = bivariate_block_test(sc, st, constant, alternative, reference)
            pvals.append(bt.p)
            fallbacks.append(bt.fallback)
        elif test == "wmw":
            pvals.append(wmw_test(st, sc, alternative))
            fallbacks.append(None)
        elif test == "location":
            pvals.append(float(two_sample_location_test(sc, st, alternative, reference)))
            fallbacks.append(None)
        else:
            raise DomainError(f"unknown two-group test {test!r}")

    pvals = np.asarray(pvals)
    adjusted = mtp.adjust_pvalues(pvals, method)
    rejected = adjusted <= alpha
    result = BlockAnalysis(list(part.labels), summaries, pvals, adjusted, rejected,
                           str(method), alpha, fallbacks)
    if affected_blocks is not None:
        pos = {lab: i for i, lab in enumerate(part.labels)}
        idx = [pos[a] if a in pos else int(a) for a in affected_blocks]
        result.table = mtp.tabulate(rejected, idx, part.m)
        result.rates = mtp.empirical_rates(result.table)
    if any(fallbacks):
        warnings.warn(f"{sum(1 for f in fallbacks if f)} block(s) used the univariate fallback",
                      RuntimeWarning, stacklevel=2)
    return result


def load_partition(path, region: GlobalRegion | None = None, shape: tuple[int, int] | None = None
                   ) -> BlockPartition:
    """Read a partition file.

    One record per line, ``index label`` or ``row col label`` (0-based);
    ``#`` starts a comment. Cell coordinates need ``shape`` and are flattened
    in row-major order. The partition is validated when ``region`` is given.
    """
    path = Path(path)
    assignment: dict[int, list[str]] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.replace(",", " ").split()
        try:
            if len(fields) == 2:
                idx = int(fields[0])
            elif len(fields) == 3:
                if shape is None:
                    raise PartitionError(f"{path}:{lineno}: cell coordinates need a matrix shape")
                r, c = int(fields[0]), int(fields[1])
                if not (0 <= r < shape[0] and 0 <= c < shape[1]):
                    raise PartitionError(f"{path}:{lineno}: cell ({r}, {c}) outside {shape}")
                idx = r * shape[1] + c
            else:
                raise PartitionError(f"{path}:{lineno}: expected 2 or 3 fields, got {len(fields)}")
        except ValueError as exc:
            if isinstance(exc, PartitionError):
                raise
            raise PartitionError(f"{path}:{lineno}: malformed record {raw!r}") from None
        assignment.setdefault(idx, []).append(fields[-1])

    blocks: dict[str, list[int]] = {}
    for idx in sorted(assignment):
        for lab in assignment[idx]:
            blocks.setdefault(lab, []).append(idx)
    part = BlockPartition([np.array(v) for v in blocks.values()], list(blocks))
    if region is not None:
        validate_partition(region, part).raise_if_invalid()
    return part


def write_partition(path, part: BlockPartition, shape: tuple[int, int] | None = None) -> None:
    lines = []
    for lab, mem in zip(part.labels, part.members):
        for idx in mem.tolist():
            if shape is None:
                lines.append(f"{idx} {lab}")
            else:
                lines.append(f"{idx // shape[1]} {idx % shape[1]} {lab}")
    Path(path).write_text("\n".join(lines) + "\n")
