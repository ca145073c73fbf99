import os
import subprocess
import sys

import numpy as np
import pytest

from blockmt import _pykernels, kernels
from blockmt.mtp import PROCEDURES, critical_values

try:
    from blockmt import _ckernels
except ImportError:
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_pure_backend_forced_by_environment():
    env = dict(os.environ, BLOCKMT_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import blockmt; print(blockmt.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
@pytest.mark.parametrize("method", PROCEDURES)
@pytest.mark.parametrize("m", [1, 2, 7, 150])
def test_step_counts_backends_agree(method, m):
    rng = np.random.default_rng(m)
    pmat = rng.random((300, m)) ** 3
    pmat[::7] = np.round(pmat[::7], 2)
    null = np.broadcast_to((rng.random(m) < 0.6).astype(np.uint8), pmat.shape)
    t, up = critical_values(method, m, 0.1)
    a = _pykernels.step_reject_counts(pmat, null, t, up)
    b = _ckernels.step_reject_counts(np.ascontiguousarray(pmat), null, t, up)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@needs_ext
def test_step_counts_boundary_values():
    # p-values sitting exactly on the critical values
    m = 10
    t, up = critical_values("bh95", m, 0.05)
    pmat = np.ascontiguousarray(np.vstack([t, t[::-1], np.full(m, t[-1]), np.ones(m), np.zeros(m)]))
    null = np.ones_like(pmat, dtype=np.uint8)
    for step_up in (True, False):
        a = _pykernels.step_reject_counts(pmat, null, t, step_up)
        b = _ckernels.step_reject_counts(pmat, null, t, step_up)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@needs_ext
@pytest.mark.parametrize("seed", range(40))
def test_rank_sum_backends_agree(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    nx = int(rng.integers(0, n + 1))
    scores = np.sort(rng.integers(2, 2 * n + 1, n)).astype(np.int64)
    obs = int(rng.choice(scores, size=nx, replace=False).sum()) if nx else 0
    assert _pykernels.rank_sum_tail_counts(scores, nx, obs) == _ckernels.rank_sum_tail_counts(scores, nx, obs)


def test_wrapper_validates_shapes():
    with pytest.raises(ValueError):
        kernels.step_reject_counts(np.zeros(3), np.ones(3), np.zeros(3), True)
    with pytest.raises(ValueError):
        kernels.step_reject_counts(np.zeros((2, 3)), np.ones(3), np.zeros(2), True)


def test_empty_test_set():
    R, V = kernels.step_reject_counts(np.zeros((4, 0)), np.ones(0), np.zeros(0), True)
    assert R.tolist() == [0] * 4 and V.tolist() == [0] * 4
