"""Backend selection for the hot loops.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy reference in ``_pykernels`` is used. Set ``BLOCKMT_PURE=1`` to force the
reference implementation.
"""
import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("BLOCKMT_PURE") == "1":
        raise ImportError("pure backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def step_reject_counts(pmat, is_null, thresholds, step_up):
    pmat = np.ascontiguousarray(pmat, dtype=np.float64)
    if pmat.ndim != 2:
        raise ValueError("pmat must be 2-D (replications x tests)")
    is_null = np.broadcast_to(np.asarray(is_null, dtype=np.uint8), pmat.shape)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    if thresholds.shape != (pmat.shape[1],):
        raise ValueError("need one threshold per test")
    return _impl.step_reject_counts(pmat, is_null, thresholds, bool(step_up))


def rank_sum_tail_counts(scores, nx, observed):
    scores = np.ascontiguousarray(scores, dtype=np.int64)
    return _impl.rank_sum_tail_counts(scores, int(nx), int(observed))
