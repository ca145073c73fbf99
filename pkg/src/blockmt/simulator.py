"""Analytic power formulas and seeded Monte Carlo experiments.

Regions ``0..M-1`` are split into ``m = M / b`` consecutive blocks of size
``b``. The first ``m1`` blocks are fully affected, the next ``m2`` partially
affected, the rest unaffected. A partially affected block carries the effect
on exactly its first ``k`` regions (``placement="fixed"``) or on each region
independently with probability ``k / b`` (``placement="bernoulli"``, the
model behind :func:`mixture_sigma`).

Replication ``r`` of a scenario draws from its own stream keyed by
``(seed, scenario key, r)``, and results are reduced in replication order, so
estimates do not depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Literal, Sequence

import numpy as np

from . import mtp
from .blockwise import BlockPartition, GlobalRegion, block_z_pvalue, summarize_block
from .errors import DomainError
from .stats import RngStream, normal_isf, normal_sf

Strategy = Literal["srw", "mean_bwa"]
STRATEGIES = ("srw", "mean_bwa")
CHUNK = 500


def analytic_power_srw(delta, alpha, M, sigma0=1.0, sigma1=1.0) -> float:
    """Per-region power of the Bonferroni small-region test."""
    if sigma0 <= 0 or sigma1 <= 0:
        raise DomainError("sigma0 and sigma1 must be positive")
    return normal_sf((sigma0 * normal_isf(alpha / M) - delta) / sigma1)


def analytic_power_bwa_full(delta, alpha, m, b, sigma0=1.0, sigma1=1.0) -> float:
    """Power of the Bonferroni block-mean test on a fully affected block."""
    if b < 1:
        raise DomainError("block size must be >= 1")
    if sigma0 <= 0 or sigma1 <= 0:
        raise DomainError("sigma0 and sigma1 must be positive")
    return normal_sf((sigma0 * normal_isf(alpha / m) - delta * math.sqrt(b)) / sigma1)


def mixture_sigma(delta, sigma0, sigma1, k, b) -> float:
    """Standard deviation of a region drawn from a block with ``k`` of ``b`` affected."""
    if not 0 <= k <= b or b < 1:
        raise DomainError("need 0 <= k <= b and b >= 1")
    f = k / b
    return math.sqrt(f * sigma1 ** 2 + (1 - f) * sigma0 ** 2 + delta ** 2 * f * (1 - f))


def analytic_power_bwa_partial(delta, alpha, m, b, k, sigma0=1.0, sigma1=1.0) -> float:
    """Normal-approximation power of the block-mean test with ``k`` of ``b`` regions affected."""
    if not 1 <= k <= b:
        raise DomainError("need 1 <= k <= b")
    if sigma0 <= 0 or sigma1 <= 0:
        raise DomainError("sigma0 and sigma1 must be positive")
    f = k / b
    sk = mixture_sigma(delta, sigma0, sigma1, k, b)
    return normal_sf((sigma0 * normal_isf(alpha / m) - f * delta * math.sqrt(b)) / sk)


def crossover_fraction(delta, alpha, m, b, M, sigma0=1.0, sigma1=1.0) -> float | None:
    """Smallest ``k/b`` (k = 1..b) at which block-mean power reaches per-region power.

    Without an effect (``delta <= 0``) there is nothing to detect and the
    result is ``None``; likewise when no grid point qualifies.
    """
    if delta <= 0:
        return None
    srw = analytic_power_srw(delta, alpha, M, sigma0, sigma1)
    for k in range(1, b + 1):
        if analytic_power_bwa_partial(delta, alpha, m, b, k, sigma0, sigma1) >= srw:
            return k / b
    return None


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 1000
    b: int = 5
    m1: int = 20
    m2: int = 0
    k: int = 0
    delta: float = 0.0
    mu0: float = 0.0
    sigma0: float = 1.0
    sigma1: float = 1.0
    alpha: float = 0.05
    n_sim: int = 10_000
    seed: int = 0
    placement: Literal["fixed", "bernoulli"] = "fixed"

    def __post_init__(self):
        if self.M < 1 or self.b < 1 or self.M % self.b:
            raise DomainError(f"block size {self.b} must divide M={self.M}")
        if self.m1 < 0 or self.m2 < 0 or self.m1 + self.m2 > self.m:
            raise DomainError("need m1, m2 >= 0 and m1 + m2 <= m")
        if self.m2 and not 1 <= self.k <= self.b:
            raise DomainError("partially affected blocks need 1 <= k <= b")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.delta < 0 or self.sigma0 <= 0 or self.sigma1 <= 0:
            raise DomainError("need delta >= 0 and positive sigmas")
        if self.n_sim < 1:
            raise DomainError("n_sim must be positive")
        if self.placement not in ("fixed", "bernoulli"):
            raise DomainError(f"unknown placement {self.placement!r}")

    @property
    def m(self) -> int:
        return self.M // self.b

    @property
    def k_over_b(self) -> float:
        return self.k / self.b if self.m2 else 1.0

    @property
    def M1(self) -> float:
        """Affected regions (expected value under Bernoulli placement)."""
        return self.m1 * self.b + self.m2 * self.k

    @classmethod
    def figure1(cls, b: int, delta: float, M: int = 1000, M1: int = 100, **kw) -> "ScenarioConfig":
        """Fully affected blocks covering ``M1`` regions."""
        if M1 % b:
            raise DomainError(f"block size {b} must divide M1={M1}")
        return cls(M=M, b=b, m1=M1 // b, m2=0, k=0, delta=delta, **kw)

    @classmethod
    def figure2(cls, b: int, k: int, delta: float, M: int = 1000, **kw) -> "ScenarioConfig":
        """No fully affected blocks; one block in five carries ``k`` affected regions."""
        return cls(M=M, b=b, m1=0, m2=(M // b) // 5, k=k, delta=delta, **kw)

    def data_key(self) -> int:
        """Stable 63-bit key of the data-generating parameters."""
        fields = (self.M, self.b, self.m1, self.m2, self.k, repr(float(self.delta)),
                  repr(float(self.mu0)), repr(float(self.sigma0)), repr(float(self.sigma1)),
                  self.placement)
        digest = hashlib.blake2b(repr(fields).encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") >> 1


def _draw(cfg: ScenarioConfig, reps: range) -> tuple[np.ndarray, np.ndarray]:
    """Observations and region-level truth for a run of replications."""
    n, M, b = len(reps), cfg.M, cfg.b
    x = np.empty((n, M))
    affected = np.zeros((n, M), dtype=bool)
    affected[:, :cfg.m1 * b] = True
    lo, hi = cfg.m1 * b, (cfg.m1 + cfg.m2) * b
    key = cfg.data_key()
    for i, r in enumerate(reps):
        rng = RngStream(cfg.seed, (key, r))
        x[i] = rng.standard_normal(M)
        if cfg.m2:
            if cfg.placement == "fixed":
                part = np.zeros((cfg.m2, b), dtype=bool)
                part[:, :cfg.k] = True
            else:
                part = rng.uniform((cfg.m2, b)) < cfg.k / b
            affected[i, lo:hi] = part.ravel()
    x = np.where(affected, cfg.mu0 + cfg.delta + cfg.sigma1 * x, cfg.mu0 + cfg.sigma0 * x)
    return x, affected


def _evaluate(cfg: ScenarioConfig, strategy: str, method: str, reps: range):
    x, affected = _draw(cfg, reps)
    if strategy == "srw":
        p = normal_sf((x - cfg.mu0) / cfg.sigma0)
        alt = affected
    else:
        t = x.reshape(len(reps), cfg.m, cfg.b).mean(axis=2)
        p = normal_sf(math.sqrt(cfg.b) * (t - cfg.mu0) / cfg.sigma0)
        alt = np.zeros(cfg.m, dtype=bool)
        alt[:cfg.m1 + cfg.m2] = True
        alt = np.broadcast_to(alt, p.shape)
    R, V = mtp.rejection_counts(p, ~alt, method, cfg.alpha)
    n_alt = alt.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        power = np.where(n_alt > 0, (R - V) / n_alt, np.nan)
    return power, (V >= 1).astype(float), V / np.maximum(R, 1)


@dataclass
class SweepCell:
    strategy: str
    method: str
    delta: float
    k_over_b: float
    b: int
    avg_power: float
    fwer: float
    fdr: float
    se_power: float
    n_sim: int
    se_fwer: float
    se_fdr: float
    analytic_power: float | None
    M: int
    m: int
    m1: int
    m2: int
    alpha: float
    placement: str
    seed: int


COLUMNS = tuple(SweepCell.__dataclass_fields__)


def analytic_power(cfg: ScenarioConfig, strategy: str, method: str) -> float | None:
    """Closed-form counterpart of a Monte Carlo cell (Bonferroni only)."""
    if str(method) != "bonferroni":
        return None
    if strategy == "srw":
        if cfg.M1 == 0:
            return None
        return analytic_power_srw(cfg.delta, cfg.alpha, cfg.M, cfg.sigma0, cfg.sigma1)
    if cfg.m1 + cfg.m2 == 0:
        return None
    full = analytic_power_bwa_full(cfg.delta, cfg.alpha, cfg.m, cfg.b, cfg.sigma0, cfg.sigma1)
    part = (analytic_power_bwa_partial(cfg.delta, cfg.alpha, cfg.m, cfg.b, cfg.k, cfg.sigma0, cfg.sigma1)
            if cfg.m2 else 0.0)
    return (cfg.m1 * full + cfg.m2 * part) / (cfg.m1 + cfg.m2)


def simulate_scenario(cfg: ScenarioConfig, strategy: Strategy, method="bonferroni",
                      threads: int = 1) -> SweepCell:
    """Monte Carlo average power, FWER and FDR of one strategy/procedure pair.

    Average power is the mean of ``S / M1`` over replications, counted in
    regions for ``srw`` and in blocks for ``mean_bwa``.
    """
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}")
    method = mtp.ProcedureKind(str(method)).value
    chunks = [range(s, min(s + CHUNK, cfg.n_sim)) for s in range(0, cfg.n_sim, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda r: _evaluate(cfg, strategy, method, r), chunks))
    else:
        parts = [_evaluate(cfg, strategy, method, r) for r in chunks]
    power, any_fp, fdp = (np.concatenate(col) for col in zip(*parts))
    n = cfg.n_sim
    fwer = float(np.mean(any_fp))
    if np.all(np.isnan(power)):
        avg_power = se_power = float("nan")
    else:
        avg_power = float(np.nanmean(power))
        se_power = float(np.nanstd(power, ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return SweepCell(
        strategy=strategy, method=method, delta=float(cfg.delta), k_over_b=cfg.k_over_b, b=cfg.b,
        avg_power=avg_power, fwer=fwer, fdr=float(np.mean(fdp)), se_power=se_power, n_sim=n,
        se_fwer=math.sqrt(fwer * (1 - fwer) / n),
        se_fdr=float(np.std(fdp, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        analytic_power=analytic_power(cfg, strategy, method),
        M=cfg.M, m=cfg.m, m1=cfg.m1, m2=cfg.m2, alpha=cfg.alpha, placement=cfg.placement,
        seed=cfg.seed,
    )


@dataclass
class SweepResult:
    cells: list[SweepCell] = field(default_factory=list)

    def select(self, **criteria) -> list[SweepCell]:
        return [c for c in self.cells
                if all(getattr(c, key) == val for key, val in criteria.items())]

    def one(self, **criteria) -> SweepCell:
        found = self.select(**criteria)
        if len(found) != 1:
            raise KeyError(f"{len(found)} cells match {criteria}")
        return found[0]

    def as_dict(self) -> dict:
        return {"columns": list(COLUMNS), "cells": [_clean(asdict(c)) for c in self.cells]}


def _clean(row: dict) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}


def power_sweep(tasks: Iterable[tuple[ScenarioConfig, str, str]], threads: int = 1) -> SweepResult:
    """Run a list of ``(config, strategy, method)`` cells in order."""
    return SweepResult([simulate_scenario(cfg, s, m, threads) for cfg, s, m in tasks])


FIGURES = ("1a", "1b", "1c", "1d", "2")


def figure_tasks(figure: str, deltas: Sequence[float] | None = None,
                 bs: Sequence[int] | None = None, n_sim: int = 10_000, seed: int = 0,
                 placement: str = "fixed", M: int = 1000, M1: int = 100, alpha: float = 0.05
                 ) -> list[tuple[ScenarioConfig, str, str]]:
    """Cells for one figure preset.

    Presets ``1a``-``1d`` sweep ``delta`` at ``M=1000, M1=100``; small-region
    cells use ``b=1``. Preset ``2`` sweeps ``k = 1..b`` for every
    ``(delta, b)`` pair with ``m1=0, m2=m/5``.
    """
    common = dict(alpha=alpha, n_sim=n_sim, seed=seed)
    tasks: list[tuple[ScenarioConfig, str, str]] = []
    if figure in ("1a", "1b", "1c", "1d"):
        deltas = list(deltas) if deltas is not None else [0.5 * i for i in range(11)]
        if figure in ("1a", "1b"):
            method = "bonferroni" if figure == "1a" else "bh95"
            bs = list(bs) if bs is not None else [2, 4, 5]
            for d in deltas:
                for b in bs:
                    tasks.append((ScenarioConfig.figure1(b, d, M, M1, **common), "mean_bwa", method))
                tasks.append((ScenarioConfig.figure1(1, d, M, M1, **common), "srw", method))
        else:
            bs = list(bs) if bs is not None else [2]
            for d in deltas:
                for b in bs:
                    tasks.append((ScenarioConfig.figure1(b, d, M, M1, **common), "mean_bwa", "bonferroni"))
                tasks.append((ScenarioConfig.figure1(1, d, M, M1, **common), "srw", "bh95"))
    elif figure == "2":
        deltas = list(deltas) if deltas is not None else [2.0, 3.0]
        bs = list(bs) if bs is not None else [5, 20]
        for d in deltas:
            for b in bs:
                for k in range(1, b + 1):
                    cfg = ScenarioConfig.figure2(b, k, d, M, placement=placement, **common)
                    tasks.append((cfg, "mean_bwa", "bonferroni"))
                    tasks.append((cfg, "srw", "bh95"))
                    tasks.append((cfg, "srw", "bonferroni"))
    else:
        raise DomainError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    return tasks


def format_number(v) -> str:
    """Shortest round-trip decimal; empty for missing values."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sweep_csv(path, result: SweepResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for cell in result.cells:
            w.writerow([format_number(getattr(cell, c)) for c in COLUMNS])


def write_sweep_json(path, result: SweepResult, manifest: dict | None = None) -> None:
    doc = result.as_dict()
    if manifest is not None:
        doc = {"manifest": manifest, **doc}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")


# --- worked example: 8 x 8 grid of z-values, six blocks -----------------------

EXAMPLE2_TABLE = np.array([
    [3.26, 4.48, 2.27, -0.83, 0.06, 0.32, 6.32, 1.07],
    [2.17, 4.26, 4.21, 0.67, -1.39, 0.69, -0.62, -1.1],
    [4.48, 1.47, 2.1, -2.58, 1.36, 6.23, 0.72, 0.46],
    [2.89, 2.74, 1.74, 0.86, 2.2, 1.01, 0.5, -1.79],
    [-0.29, 1.06, 2.73, -0.49, 1.13, 0.72, 9.18, -1.73],
    [0.22, -0.28, -0.16, 0.45, -5.45, -0.7, -0.19, -1.27],
    [-0.49, 0.51, -0.64, 0.2, 0.44, 0.18, -0.63, 0.59],
    [-1.87, 1.29, -0.23, 0.6, 1.37, 1.94, -1.91, -0.33],
])
EXAMPLE2_BLOCKS = ("top-left", "top-middle", "top-right", "bottom-left", "bottom-middle", "bottom-right")


@dataclass
class Example2:
    table: np.ndarray
    region: GlobalRegion
    partition: BlockPartition
    affected_regions: np.ndarray
    affected_blocks: list[str]

    def entry(self, row: int, col: int) -> float:
        """1-based lookup, as the grid is printed."""
        return float(self.table[row - 1, col - 1])


def example2_fixture() -> Example2:
    """The 8 x 8 grid split into rows 1-4 / 5-8 and columns 1-3 / 4-5 / 6-8.

    Only the top-left block (12 regions) carries an effect.
    """
    table = EXAMPLE2_TABLE.copy()
    rows = (range(0, 4), range(4, 8))
    cols = (range(0, 3), range(3, 5), range(5, 8))
    members = [np.array([r * 8 + c for r in rr for c in cc]) for rr in rows for cc in cols]
    part = BlockPartition(members, list(EXAMPLE2_BLOCKS))
    return Example2(table, GlobalRegion(table.ravel()), part, members[0].copy(), ["top-left"])


def analyze_example2(alpha: float = 0.05, method="bonferroni") -> dict:
    """Small-region and block-wise decisions on the 8 x 8 example grid."""
    ex = example2_fixture()
    x = ex.region.values
    M = x.size
    p = normal_sf(x)
    rejected = mtp.reject(p, method, alpha)
    table = mtp.tabulate(rejected, ex.affected_regions, M)
    out = {
        "srw": {
            "critical_value": normal_isf(alpha / M),
            "rejected_cells": [(int(j // 8) + 1, int(j % 8) + 1) for j in rejected],
            "table": table.as_dict(),
            "rates": mtp.empirical_rates(table).as_dict(),
        },
        "bwa": {},
    }
    m = ex.partition.m
    for kind in ("mean", "median", "huber"):
        summaries = [summarize_block(x[mem], kind, block=lab)
                     for lab, mem in zip(ex.partition.labels, ex.partition.members)]
        pv = np.array([float(block_z_pvalue(s, s.size)) for s in summaries])
        rej = mtp.reject(pv, method, alpha)
        tab = mtp.tabulate(rej, [0], m)
        out["bwa"][kind] = {
            "summaries": {s.block: s.value for s in summaries},
            "critical_values": {s.block: normal_isf(alpha / m) / math.sqrt(s.size) for s in summaries},
            "rejected": [ex.partition.labels[i] for i in rej],
            "table": tab.as_dict(),
            "rates": mtp.empirical_rates(tab).as_dict(),
        }
    return out


def with_seed(tasks, seed: int):
    return [(replace(cfg, seed=seed), s, m) for cfg, s, m in tasks]
