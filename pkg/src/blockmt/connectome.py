"""Connectivity matrices: density, ingestion, parcel blocks, synthesis and group tests.

A block is the set of upper-triangle cells ``(k, l)``, ``k < l``, whose fine
ROIs fall into one pair of coarse parcels ``(P, Q)``, ``P <= Q``. Cell
coordinates in messages and files are 0-based.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np

from . import mtp
from .blockwise import (BlockPartition, GlobalRegion, bivariate_block_test,
                        two_sample_location_test, validate_partition)
from .errors import DomainError, LoadError
from .stats import RngStream, wmw_test

STANDARD_LEVELS = (1000, 483, 241, 133, 66)
SYMMETRY_TOL = 1e-9
ConnStrategy = Literal["srw", "mean_bwa", "truncated_bwa", "bivariate_bwa"]
CONN_STRATEGIES = ("srw", "mean_bwa", "truncated_bwa", "bivariate_bwa")


@dataclass(frozen=True)
class FiberBundle:
    lengths: tuple[float, ...]
    surface_k: float
    surface_l: float


def connection_density(bundle: FiberBundle | Iterable[float], surface_k: float | None = None,
                       surface_l: float | None = None) -> float:
    """``2 / (S(k) + S(l)) * sum_f 1 / l(f)`` over the fibers joining two ROIs.

    Accepts a :class:`FiberBundle` or fiber lengths plus both surfaces.
    """
    if isinstance(bundle, FiberBundle):
        lengths, surface_k, surface_l = bundle.lengths, bundle.surface_k, bundle.surface_l
    else:
        lengths = bundle
    if surface_k is None or surface_l is None or surface_k <= 0 or surface_l <= 0:
        raise DomainError("ROI surfaces must be positive")
    arr = np.asarray(list(lengths), dtype=float)
    if arr.size and not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
        raise DomainError("fiber lengths must be positive")
    return 2.0 / (surface_k + surface_l) * math.fsum((1.0 / arr).tolist())


# --- matrices ---------------------------------------------------------------

def _split(line: str, delim: str | None) -> list[str]:
    return [t for t in (line.split(delim) if delim else line.split())]


def load_matrix(path) -> np.ndarray:
    """Read a dense square grid (comma- or whitespace-delimited, no header).

    Symmetrizes entries that differ by at most ``1e-9``.

    Raises
    ------
    LoadError
        For unparsable, non-finite or negative entries, ragged or non-square
        grids and asymmetry beyond tolerance. The cell is reported 0-based.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(str(exc), path) from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LoadError("empty matrix file", path)
    delim = "," if "," in lines[0] else None
    n = len(lines)
    mat = np.empty((n, n))
    for r, line in enumerate(lines):
        tokens = _split(line, delim)
        if len(tokens) != n:
            raise LoadError(f"row has {len(tokens)} entries, expected {n}", path, (r, min(len(tokens), n)))
        for c, tok in enumerate(tokens):
            try:
                v = float(tok)
            except ValueError:
                raise LoadError(f"cannot parse {tok.strip()!r}", path, (r, c)) from None
            if not math.isfinite(v):
                raise LoadError("non-finite entry", path, (r, c))
            if v < 0:
                raise LoadError(f"negative density {v!r}", path, (r, c))
            mat[r, c] = v
    gap = np.abs(mat - mat.T)
    if gap.max() > SYMMETRY_TOL:
        r, c = np.argwhere(np.triu(gap > SYMMETRY_TOL))[0]
        raise LoadError(f"asymmetric: M({r},{c})={mat[r, c]!r} but M({c},{r})={mat[c, r]!r}",
                        path, (int(r), int(c)))
    return 0.5 * (mat + mat.T)


def write_matrix(path, mat: np.ndarray, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.asarray(mat, dtype=float):
            fh.write(delimiter.join(repr(float(v)) for v in row) + "\n")


def _group_files(source) -> list[Path]:
    if isinstance(source, (str, Path)):
        p = Path(source)
        if not p.is_dir():
            raise LoadError("not a directory", p)
        return sorted(f for f in p.iterdir() if f.is_file() and not f.name.startswith("."))
    return [Path(f) for f in source]


def load_group(source) -> np.ndarray:
    """Load every matrix in a directory (sorted by name) or a list of files.

    Returns a ``(subjects, N, N)`` array.
    """
    files = _group_files(source)
    if not files:
        raise LoadError("no matrix files found", source)
    mats = []
    for f in files:
        m = load_matrix(f)
        if mats and m.shape != mats[0].shape:
            raise LoadError(f"size {m.shape[0]} differs from {mats[0].shape[0]} in {files[0].name}", f)
        mats.append(m)
    return np.stack(mats)


def write_group(directory, group: np.ndarray, prefix: str = "subject") -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(group))))
    paths = []
    for i, mat in enumerate(group):
        p = d / f"{prefix}_{i + 1:0{width}d}.csv"
        write_matrix(p, mat)
        paths.append(p)
    return paths


# --- parcellations and blocks ------------------------------------------------

@dataclass
class ParcellationHierarchy:
    """Nested parcellations.

    ``table[r, j]`` is the parcel at level ``sizes[j]`` of the finest ROI
    ``r``; column 0 is the identity.
    """

    sizes: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.table = np.asarray(self.table, dtype=np.int64)
        if self.table.ndim != 2 or self.table.shape[1] != len(self.sizes):
            raise DomainError("hierarchy table needs one column per level")
        if list(self.sizes) != sorted(self.sizes, reverse=True) or len(set(self.sizes)) != len(self.sizes):
            raise DomainError("levels must be strictly decreasing in size")
        if self.table.shape[0] != self.sizes[0]:
            raise DomainError(f"expected {self.sizes[0]} finest ROIs, got {self.table.shape[0]}")
        if not np.array_equal(self.table[:, 0], np.arange(self.sizes[0])):
            raise DomainError("first column must list the finest ROIs 0..N-1 in order")
        for j, size in enumerate(self.sizes):
            col = self.table[:, j]
            if col.min() < 0 or col.max() >= size:
                raise DomainError(f"level {size} has parcel ids outside 0..{size - 1}")
            if np.unique(col).size != size:
                raise DomainError(f"level {size} does not use every parcel")
        for j in range(len(self.sizes) - 1):
            self.mapping(self.sizes[j], self.sizes[j + 1])

    def level(self, size: int) -> int:
        try:
            return self.sizes.index(int(size))
        except ValueError:
            raise DomainError(f"level {size} not in hierarchy {self.sizes}") from None

    def mapping(self, fine: int, coarse: int) -> np.ndarray:
        """Parcel at level ``coarse`` for each parcel of level ``fine``."""
        jf, jc = self.level(fine), self.level(coarse)
        if jc < jf:
            raise DomainError(f"level {coarse} is finer than {fine}")
        out = np.full(fine, -1, dtype=np.int64)
        for f, c in zip(self.table[:, jf].tolist(), self.table[:, jc].tolist()):
            if out[f] not in (-1, c):
                raise DomainError(f"parcel {f} at level {fine} splits across level {coarse}")
            out[f] = c
        return out


def synthetic_hierarchy(sizes: Sequence[int] = STANDARD_LEVELS) -> ParcellationHierarchy:
    """Nested parcellation merging neighbouring ROIs (in index order) level by level."""
    sizes = tuple(int(s) for s in sizes)
    cols = [np.arange(sizes[0])]
    for coarse in sizes[1:]:
        prev = cols[-1]
        n_prev = int(prev.max()) + 1
        lookup = np.empty(n_prev, dtype=np.int64)
        for c, chunk in enumerate(np.array_split(np.arange(n_prev), coarse)):
            lookup[chunk] = c
        cols.append(lookup[prev])
    return ParcellationHierarchy(sizes, np.column_stack(cols))


def load_hierarchy(path) -> ParcellationHierarchy:
    """Header of level sizes, then one row of parcel ids per finest ROI."""
    path = Path(path)
    rows = [ln.split("#", 1)[0].replace(",", " ").split() for ln in path.read_text().splitlines()]
    rows = [r for r in rows if r]
    if not rows:
        raise LoadError("empty hierarchy file", path)
    try:
        sizes = [int(t) for t in rows[0]]
    except ValueError:
        raise LoadError("header must list the level sizes", path, (0, 0)) from None
    table = []
    for i, r in enumerate(rows[1:], 1):
        if len(r) != len(sizes):
            raise LoadError(f"expected {len(sizes)} fields", path, (i, len(r)))
        try:
            table.append([int(t) for t in r])
        except ValueError:
            raise LoadError("non-integer parcel id", path, (i, 0)) from None
    try:
        return ParcellationHierarchy(tuple(sizes), np.array(table, dtype=np.int64).reshape(-1, len(sizes)))
    except DomainError as exc:
        raise LoadError(str(exc), path) from None


def write_hierarchy(path, hier: ParcellationHierarchy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(map(str, hier.sizes)) + "\n")
        for row in hier.table:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


@dataclass
class MatrixBlockIndex:
    """Upper-triangle cells grouped into parcel-pair blocks.

    ``rows[i], cols[i]`` is cell ``i``; cells are stored block by block, so
    each member array of ``partition`` is a contiguous range.
    """

    N: int
    rows: np.ndarray
    cols: np.ndarray
    pairs: list[tuple[int, int]]
    partition: BlockPartition
    parcel: np.ndarray

    @property
    def labels(self) -> list[str]:
        return self.partition.labels

    @property
    def m(self) -> int:
        return self.partition.m

    @property
    def n_cells(self) -> int:
        return self.rows.size

    @property
    def starts(self) -> np.ndarray:
        return np.array([mem[0] for mem in self.partition.members], dtype=np.int64)

    def block_position(self, block) -> int:
        """Position of a block given as a label ``"P-Q"`` or a pair ``(P, Q)``."""
        if isinstance(block, str):
            label = block
        else:
            p, q = sorted(int(v) for v in block)
            label = f"{p}-{q}"
        try:
            return self._pos[label]
        except KeyError:
            raise DomainError(f"block {block!r} is not in the index") from None

    def __post_init__(self):
        self._pos = {lab: i for i, lab in enumerate(self.partition.labels)}

    def cell_values(self, group: np.ndarray) -> np.ndarray:
        """``(subjects, cells)`` values of a ``(subjects, N, N)`` group."""
        g = np.asarray(group, dtype=float)
        if g.ndim == 2:
            g = g[None]
        if g.shape[1:] != (self.N, self.N):
            raise DomainError(f"matrices must be {self.N} x {self.N}, got {g.shape[1]} x {g.shape[2]}")
        return g[:, self.rows, self.cols]


def blocks_from_hierarchy(hier: ParcellationHierarchy, fine_level: int, coarse_level: int,
                          include_diagonal: bool = False) -> MatrixBlockIndex:
    """Group the upper triangle of a ``fine_level`` matrix by coarse parcel pairs.

    Within-parcel (diagonal) blocks are left out unless ``include_diagonal``;
    blocks without cells are never formed.
    """
    parcel = hier.mapping(fine_level, coarse_level)
    N = fine_level
    r, c = np.triu_indices(N, k=1)
    p, q = parcel[r], parcel[c]
    lo, hi = np.minimum(p, q), np.maximum(p, q)
    keep = include_diagonal | (lo != hi)
    r, c, lo, hi = r[keep], c[keep], lo[keep], hi[keep]
    order = np.lexsort((c, r, hi, lo))
    r, c, lo, hi = r[order], c[order], lo[order], hi[order]
    if r.size == 0:
        raise DomainError("no cells to analyse at these levels")
    key = lo * coarse_level + hi
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    bounds = np.r_[starts, key.size]
    members = [np.arange(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    pairs = [(int(lo[s]), int(hi[s])) for s in starts]
    part = BlockPartition(members, [f"{a}-{b}" for a, b in pairs])
    validate_partition(GlobalRegion(np.zeros(r.size)), part).raise_if_invalid()
    return MatrixBlockIndex(N, r, c, pairs, part, parcel)


# --- synthetic data ----------------------------------------------------------

@dataclass
class SyntheticPopulation:
    """Seeded non-clinical generator of control connectivity matrices.

    ROI ``k`` sits at position ``k / N`` on a line. A connection between
    ``k`` and ``l`` is present in a subject with probability
    ``p_max * exp(-d / decay)`` (``d = |k - l| / N``) and, when present, has a
    log-normal density whose log-median falls linearly with distance.
    """

    N: int
    seed: int = 0
    p_max: float = 0.98
    p_min: float = 0.05
    decay: float = 0.2
    log_median: float = 2.0
    log_slope: float = 1.5
    log_sd: float = 0.6
    cell_sd: float = 0.3
    presence: np.ndarray = field(init=False, repr=False)
    mu_log: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 2:
            raise DomainError("need at least two ROIs")
        r, c = np.triu_indices(self.N, k=1)
        d = (c - r) / self.N
        self.presence = np.clip(self.p_max * np.exp(-d / self.decay), self.p_min, 1.0)
        jitter = RngStream(self.seed, (0,)).standard_normal(r.size)
        self.mu_log = self.log_median - self.log_slope * d + self.cell_sd * jitter

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        """``(n, N, N)`` symmetric non-negative matrices with zero diagonal."""
        size = (n, self.presence.size)
        present = rng.uniform(size) < self.presence
        dens = np.exp(self.mu_log + self.log_sd * rng.standard_normal(size))
        vals = np.where(present, dens, 0.0)
        out = np.zeros((n, self.N, self.N))
        r, c = np.triu_indices(self.N, k=1)
        out[:, r, c] = vals
        out[:, c, r] = vals
        return out


def synthetic_controls(N: int, n: int, seed: int, **population) -> np.ndarray:
    """``n`` control matrices from :class:`SyntheticPopulation` (non-clinical)."""
    pop = SyntheticPopulation(N, seed, **population)
    return pop.sample(n, RngStream(seed, (1,)))


def choose_affected_blocks(index: MatrixBlockIndex, m1: int, seed: int,
                           low: float = 0.2, high: float = 1.0) -> dict[str, float]:
    """``m1`` distinct blocks, each with an affected fraction drawn from ``U(low, high]``."""
    if not 0 <= m1 <= index.m:
        raise DomainError(f"m1 must lie in 0..{index.m}")
    if not 0 < low <= high <= 1:
        raise DomainError("need 0 < low <= high <= 1")
    rng = RngStream(seed, (2,))
    picks = rng.choice(index.m, m1)
    fracs = high - (high - low) * rng.uniform(m1)
    return {index.labels[i]: float(f) for i, f in zip(picks.tolist(), fracs.tolist())}


@dataclass
class Synthesis:
    treatments: np.ndarray
    affected_cells: np.ndarray
    affected_blocks: list[str]
    injected: dict[str, int]


def synthesize_treatment_group(controls: np.ndarray, index: MatrixBlockIndex,
                               affected: Mapping, delta: float, n_t: int, seed: int
                               ) -> Synthesis:
    """Treatment matrices drawn cell-wise around the control means.

    Every upper-triangle cell gets ``N(mean, s)`` with the control mean and
    standard deviation of that cell, negatives set to zero. In each affected
    block, ``ceil(fraction * b)`` seeded cells receive an extra ``N(delta, s)``
    draw, after which negatives are again set to zero.
    """
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 3 or controls.shape[0] < 2:
        raise DomainError("need at least two control matrices")
    if controls.shape[1:] != (index.N, index.N):
        raise DomainError("control matrices do not match the block index")
    if n_t < 1:
        raise DomainError("n_t must be positive")
    N = index.N
    r, c = np.triu_indices(N, k=1)
    cells = controls[:, r, c]
    mean = cells.mean(axis=0)
    sd = cells.std(axis=0, ddof=1)
    # identical controls: keep the common value exactly rather than a rounded mean
    same = np.ptp(cells, axis=0) == 0
    mean[same] = cells[0, same]
    sd[same] = 0.0
    root = RngStream(seed)
    vals = np.maximum(mean + sd * root.child(0).standard_normal((n_t, r.size)), 0.0)

    tri_pos = np.full((N, N), -1, dtype=np.int64)
    tri_pos[r, c] = np.arange(r.size)
    cell_tri = tri_pos[index.rows, index.cols]
    affected_cells = np.zeros(index.n_cells, dtype=bool)
    injected: dict[str, int] = {}
    pick_rng, effect_rng = root.child(1), root.child(2)
    positions = sorted((index.block_position(b), float(f)) for b, f in affected.items())
    for pos, frac in positions:
        if not 0 < frac <= 1:
            raise DomainError(f"affected fraction must lie in (0, 1], got {frac!r}")
        mem = index.partition.members[pos]
        k = math.ceil(frac * mem.size - 1e-12)
        chosen = mem[pick_rng.choice(mem.size, k)]
        affected_cells[chosen] = True
        injected[index.labels[pos]] = k
        tri = cell_tri[chosen]
        vals[:, tri] += delta + sd[tri] * effect_rng.standard_normal((n_t, k))
    vals = np.maximum(vals, 0.0)

    out = np.zeros((n_t, N, N))
    out[:, r, c] = vals
    out[:, c, r] = vals
    diag = np.arange(N)
    out[:, diag, diag] = controls[:, diag, diag].mean(axis=0)
    return Synthesis(out, affected_cells, [index.labels[p] for p, _ in positions], injected)


# --- group comparison --------------------------------------------------------

@dataclass
class GroupComparison:
    strategy: str
    method: str
    alpha: float
    unit: Literal["cell", "block"]
    labels: list[str]
    pvalues: np.ndarray
    adjusted: np.ndarray
    rejected: np.ndarray
    fallbacks: list
    truth: np.ndarray | None = None
    table: mtp.DecisionTable | None = None
    rates: mtp.ErrorRates | None = None

    @property
    def power(self) -> float | None:
        """``S / m1`` in this comparison's units, ``None`` without affected units."""
        if self.table is None or self.table.m1 == 0:
            return None
        return self.table.S / self.table.m1

    @property
    def n_fallback(self) -> int:
        return sum(1 for f in self.fallbacks if f)

    def summary(self) -> dict:
        return {
            "strategy": self.strategy, "method": self.method, "alpha": self.alpha,
            "unit": self.unit, "tests": len(self.labels), "rejections": int(self.rejected.sum()),
            "power": self.power, "fallback_blocks": self.n_fallback,
            "table": self.table.as_dict() if self.table else None,
            "rates": self.rates.as_dict() if self.rates else None,
        }

    def as_dict(self) -> dict:
        doc = self.summary()
        doc["tests_detail"] = [
            {"label": lab, "p": float(p), "adjusted": float(a), "rejected": bool(rj),
             "affected": None if self.truth is None else bool(t), "fallback": fb}
            for lab, p, a, rj, t, fb in zip(
                self.labels, self.pvalues, self.adjusted, self.rejected,
                self.truth if self.truth is not None else [None] * len(self.labels),
                self.fallbacks)
        ]
        return doc


def block_summaries(values: np.ndarray, index: MatrixBlockIndex, threshold: float = 0.0
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject block means and truncated means, each ``(subjects, m)``."""
    sizes = index.partition.sizes
    starts = index.starts
    means = np.add.reduceat(values, starts, axis=1) / sizes
    trunc = np.add.reduceat((values > threshold).astype(float), starts, axis=1) / sizes
    return means, trunc


def compare_groups(controls: np.ndarray, treatments: np.ndarray, index: MatrixBlockIndex,
                   strategy: ConnStrategy, method="bonferroni", alpha: float = 0.05,
                   affected_cells: np.ndarray | None = None, threshold: float = 0.0,
                   reference: str = "t", constant: str = "standard") -> GroupComparison:
    """Test treatment against control with one of four strategies.

    ``srw`` tests every cell; the block strategies test the block mean, the
    truncated mean (rank test) or both jointly (bivariate F). All tests are
    one-sided for an increase in the treatment group. With
    ``affected_cells`` the result carries the decision table: cells for
    ``srw``, and for block strategies a block is affected when it contains an
    affected cell.
    """
    if strategy not in CONN_STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}")
    xc = index.cell_values(controls)
    xt = index.cell_values(treatments)
    if xc.shape[0] < 2 or xt.shape[0] < 2:
        raise DomainError("each group needs at least two subjects")
    truth = None
    fallbacks: list = []
    if strategy == "srw":
        unit = "cell"
        labels = [f"{a},{b}" for a, b in zip(index.rows.tolist(), index.cols.tolist())]
        p = np.asarray(two_sample_location_test(xc, xt, "greater", reference), dtype=float)
        fallbacks = [None] * p.size
        if affected_cells is not None:
            truth = np.asarray(affected_cells, dtype=bool)
    else:
        unit = "block"
        labels = list(index.labels)
        mc, tc = block_summaries(xc, index, threshold)
        mt, tt = block_summaries(xt, index, threshold)
        if strategy == "mean_bwa":
            p = np.asarray(two_sample_location_test(mc, mt, "greater", reference), dtype=float)
            fallbacks = [None] * index.m
        elif strategy == "truncated_bwa":
            p = np.array([wmw_test(tt[:, i], tc[:, i], "greater") for i in range(index.m)])
            fallbacks = [None] * index.m
        else:
            p = np.empty(index.m)
            for i in range(index.m):
                bt = bivariate_block_test(np.column_stack([mc[:, i], tc[:, i]]),
                                          np.column_stack([mt[:, i], tt[:, i]]),
                                          constant, "greater", reference)
                p[i] = bt.p
                fallbacks.append(bt.fallback)
        if affected_cells is not None:
            hits = np.add.reduceat(np.asarray(affected_cells, dtype=np.int64), index.starts)
            truth = hits > 0
    adjusted = mtp.adjust_pvalues(p, method)
    rejected = adjusted <= alpha
    res = GroupComparison(strategy, str(mtp.ProcedureKind(str(method))), alpha, unit, labels,
                          p, adjusted, rejected, fallbacks, truth)
    if truth is not None:
        res.table = mtp.tabulate(rejected, truth, len(labels))
        res.rates = mtp.empirical_rates(res.table)
    return res


def null_fwer_repairings(population: SyntheticPopulation, index: MatrixBlockIndex, n_c: int,
                         n_t: int, reps: int, seed: int, strategies: Sequence[str] = CONN_STRATEGIES,
                         method="bonferroni", alpha: float = 0.05) -> dict[str, tuple[float, float]]:
    """FWER of each strategy when both groups come from one population.

    Replication ``r`` draws ``n_c + n_t`` subjects from a stream keyed by
    ``(seed, r)`` and splits them into the two groups. Returns
    ``strategy -> (fwer, standard error)``.
    """
    hits = {s: 0 for s in strategies}
    for rep in range(reps):
        subjects = population.sample(n_c + n_t, RngStream(seed, (3, rep)))
        for s in strategies:
            res = compare_groups(subjects[:n_c], subjects[n_c:], index, s, method, alpha)
            hits[s] += bool(res.rejected.any())
    out = {}
    for s in strategies:
        f = hits[s] / reps
        out[s] = (f, math.sqrt(f * (1 - f) / reps))
    return out


# --- affected-block files, histograms, results -------------------------------

def load_affected_blocks(path, index: MatrixBlockIndex) -> dict[str, float]:
    """Records ``P Q fraction``; ``#`` starts a comment."""
    path = Path(path)
    out: dict[str, float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].replace(",", " ").split()
        if not line:
            continue
        if len(line) != 3:
            raise LoadError("expected 'P Q fraction'", path, (lineno, len(line)))
        try:
            p, q, frac = int(line[0]), int(line[1]), float(line[2])
        except ValueError:
            raise LoadError(f"malformed record {raw.strip()!r}", path, (lineno, 0)) from None
        if not 0 < frac <= 1:
            raise LoadError(f"fraction {frac!r} outside (0, 1]", path, (lineno, 2))
        try:
            label = index.labels[index.block_position((p, q))]
        except DomainError as exc:
            raise LoadError(str(exc), path, (lineno, 0)) from None
        out[label] = frac
    return out


def write_affected_blocks(path, affected: Mapping[str, float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, frac in affected.items():
            p, q = label.split("-")
            fh.write(f"{p} {q} {float(frac)!r}\n")


def block_size_histogram(index: MatrixBlockIndex, bins: int | Sequence[float] = 10) -> dict:
    counts, edges = np.histogram(index.partition.sizes, bins=bins)
    return {"counts": counts.tolist(), "edges": edges.tolist()}


def fraction_histogram(fractions: Iterable[float], bins: int | Sequence[float] = 10) -> dict:
    counts, edges = np.histogram(np.asarray(list(fractions), dtype=float), bins=bins, range=(0.0, 1.0))
    return {"counts": counts.tolist(), "edges": edges.tolist()}


FLAT_COLUMNS = ("strategy", "method", "unit", "label", "p", "adjusted", "rejected", "affected", "fallback")


def write_results_csv(path, results: Sequence[GroupComparison]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLAT_COLUMNS)
        for res in results:
            truth = res.truth if res.truth is not None else [None] * len(res.labels)
            for lab, p, a, rj, t, fb in zip(res.labels, res.pvalues, res.adjusted, res.rejected,
                                             truth, res.fallbacks):
                w.writerow([res.strategy, res.method, res.unit, lab, repr(float(p)), repr(float(a)),
                            int(bool(rj)), "" if t is None else int(bool(t)), fb or ""])


def write_results_json(path, results: Sequence[GroupComparison], extra: dict | None = None) -> None:
    doc = dict(extra or {})
    doc["results"] = [r.as_dict() for r in results]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")
