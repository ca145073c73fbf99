"""Multiple-testing procedures and outcome bookkeeping.

Every procedure is exposed through adjusted p-values: rejecting
``{j : adjusted[j] <= alpha}`` reproduces the procedure's step rule at level
``alpha``. :func:`rejection_counts` is the batched form used by the Monte
Carlo code; it evaluates the step rule directly from critical values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from . import kernels
from .errors import DomainError


class ProcedureKind(str, Enum):
    BONFERRONI = "bonferroni"
    SIDAK = "sidak"
    HOLM = "holm"
    HOCHBERG = "hochberg"
    BH95 = "bh95"
    BY01 = "by01"

    def __str__(self) -> str:
        return self.value


PROCEDURES = tuple(k.value for k in ProcedureKind)
FWER_PROCEDURES = ("bonferroni", "sidak", "holm", "hochberg")
FDR_PROCEDURES = ("bh95", "by01")


def _kind(method) -> ProcedureKind:
    try:
        return ProcedureKind(str(method).lower())
    except ValueError:
        raise DomainError(f"unknown procedure {method!r}; choose from {', '.join(PROCEDURES)}") from None


def _pvalues(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float).ravel()
    if np.any(np.isnan(arr)) or np.any((arr < 0) | (arr > 1)):
        raise DomainError("p-values must lie in [0, 1]")
    return arr


def harmonic(m: int) -> float:
    """``c(m) = sum_{i=1..m} 1/i``, the BY01 dependence correction."""
    return math.fsum(1.0 / i for i in range(1, m + 1))


def adjust_pvalues(p, method) -> np.ndarray:
    """Adjusted p-values for one of the six procedures.

    Sorting is stable, so tied raw p-values keep their original index order.
    """
    kind = _kind(method)
    p = _pvalues(p)
    m = p.size
    if m == 0:
        return p.copy()
    if kind is ProcedureKind.BONFERRONI:
        return np.minimum(1.0, m * p)
    if kind is ProcedureKind.SIDAK:
        # mathematically <= m * p; the clamp keeps that true after rounding
        with np.errstate(divide="ignore"):
            return np.clip(np.minimum(-np.expm1(m * np.log1p(-p)), m * p), 0.0, 1.0)

    order = np.argsort(p, kind="stable")
    ps = p[order]
    i = np.arange(1, m + 1)
    if kind is ProcedureKind.HOLM:
        adj = np.maximum.accumulate(np.minimum(1.0, (m - i + 1) * ps))
    elif kind is ProcedureKind.HOCHBERG:
        adj = np.minimum.accumulate(np.minimum(1.0, (m - i + 1) * ps)[::-1])[::-1]
    else:
        scale = m * (harmonic(m) if kind is ProcedureKind.BY01 else 1.0)
        adj = np.minimum.accumulate(np.minimum(1.0, ps * (scale / i))[::-1])[::-1]
    out = np.empty(m)
    out[order] = adj
    return out


def reject(p, method, alpha: float) -> np.ndarray:
    """Sorted indices of the hypotheses rejected at level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    return np.flatnonzero(adjust_pvalues(p, method) <= alpha)


def critical_values(method, m: int, alpha: float) -> tuple[np.ndarray, bool]:
    """Level-wise thresholds ``t_1..t_m`` and whether the rule is step-up.

    Single-step procedures return constant thresholds (either direction then
    gives the same answer).
    """
    kind = _kind(method)
    i = np.arange(1, m + 1, dtype=float)
    if kind is ProcedureKind.BONFERRONI:
        return np.full(m, alpha / m), False
    if kind is ProcedureKind.SIDAK:
        return np.full(m, -math.expm1(math.log1p(-alpha) / m)), False
    if kind is ProcedureKind.HOLM:
        return alpha / (m - i + 1), False
    if kind is ProcedureKind.HOCHBERG:
        return alpha / (m - i + 1), True
    if kind is ProcedureKind.BH95:
        return alpha * i / m, True
    return alpha * i / (m * harmonic(m)), True


def rejection_counts(pmat, is_null, method, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise ``(R, V)`` for a replications-by-tests p-value matrix.

    ``is_null`` marks true null hypotheses (1-D shared across rows, or 2-D).
    """
    pmat = np.asarray(pmat, dtype=float)
    if pmat.ndim != 2:
        raise DomainError("pmat must be 2-D")
    thresholds, step_up = critical_values(method, pmat.shape[1], alpha)
    return kernels.step_reject_counts(pmat, is_null, thresholds, step_up)


@dataclass(frozen=True)
class DecisionTable:
    """Outcome counts of one multiple-testing run.

    ``V`` false rejections and ``U`` correct acceptances among the ``m0``
    true nulls, ``S`` correct rejections and ``T`` misses among the ``m1``
    false nulls.
    """

    U: int
    V: int
    T: int
    S: int

    @property
    def m0(self) -> int:
        return self.U + self.V

    @property
    def m1(self) -> int:
        return self.T + self.S

    @property
    def m(self) -> int:
        return self.m0 + self.m1

    @property
    def R(self) -> int:
        return self.V + self.S

    def as_dict(self) -> dict:
        return {"U": self.U, "V": self.V, "T": self.T, "S": self.S,
                "m0": self.m0, "m1": self.m1, "m": self.m, "R": self.R}


def _index_mask(indices: Iterable[int], m: int, what: str) -> np.ndarray:
    arr = np.asarray(indices if isinstance(indices, np.ndarray) else list(indices))
    if arr.dtype == bool:
        if arr.shape != (m,):
            raise DomainError(f"{what} mask must have length {m}")
        return arr.copy()
    arr = arr.astype(np.int64).ravel()
    if arr.size and (arr.min() < 0 or arr.max() >= m):
        raise DomainError(f"{what} index out of range 0..{m - 1}")
    mask = np.zeros(m, dtype=bool)
    mask[arr] = True
    return mask


def tabulate(rejected: Iterable[int], false_nulls: Iterable[int], m: int) -> DecisionTable:
    """Cross-tabulate decisions against the truth.

    Both arguments accept index collections or boolean masks of length ``m``.
    """
    rej = _index_mask(rejected, m, "rejected")
    alt = _index_mask(false_nulls, m, "ground-truth")
    return DecisionTable(
        U=int(np.sum(~rej & ~alt)),
        V=int(np.sum(rej & ~alt)),
        T=int(np.sum(~rej & alt)),
        S=int(np.sum(rej & alt)),
    )


@dataclass(frozen=True)
class ErrorRates:
    type_i: float | None
    type_ii: float | None
    fdp: float
    any_false_positive: bool

    def as_dict(self) -> dict:
        return {"type_i": self.type_i, "type_ii": self.type_ii, "fdp": self.fdp,
                "any_false_positive": self.any_false_positive}


def empirical_rates(table: DecisionTable) -> ErrorRates:
    """``V/m0``, ``T/m1``, ``V/max(R, 1)`` and the indicator ``V >= 1``.

    A rate whose denominator is zero is reported as ``None``.
    """
    return ErrorRates(
        type_i=table.V / table.m0 if table.m0 else None,
        type_ii=table.T / table.m1 if table.m1 else None,
        fdp=table.V / max(table.R, 1),
        any_false_positive=table.V >= 1,
    )
