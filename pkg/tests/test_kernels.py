import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from molcyclegan import kernels
from molcyclegan._accel import backend


def grid_case(seed, n, dim):
    rng = np.random.default_rng(seed)
    table = rng.integers(-2, 3, size=(n, dim)).astype(np.float64)
    queries = rng.integers(-2, 3, size=(7, dim)).astype(np.float64)
    rank = rng.permutation(n).astype(np.int64)
    return table, queries, rank


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.integers(1, 5))
def test_knn_variants_agree(seed, n, dim):
    table, queries, rank = grid_case(seed, n, dim)
    k = min(n, 6)
    a = kernels._knn_scan_loop(table, queries, k, rank)
    b = kernels._knn_scan_numpy(table, queries, k, rank)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_knn_ties_follow_rank():
    table = np.array([[1.0], [-1.0], [1.0], [3.0]])
    idx, d2 = kernels.knn_scan(table, np.zeros(1), 3, np.array([3, 1, 0, 2]))
    assert idx[0].tolist() == [2, 1, 0]
    assert d2[0].tolist() == [1.0, 1.0, 1.0]


def test_knn_validation():
    with pytest.raises(ValueError):
        kernels.knn_scan(np.zeros((3, 2)), np.zeros((1, 3)), 1)
    with pytest.raises(ValueError):
        kernels.knn_scan(np.zeros((3, 2)), np.zeros((1, 2)), 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 200), st.integers(1, 40))
def test_tanimoto_variants_agree(seed, n, words):
    rng = np.random.default_rng(seed)
    # sparse words so empty unions occur
    pool = rng.integers(0, 2**63, size=(n, words), dtype=np.uint64) & rng.integers(0, 2**63, size=(n, words),
                                                                                  dtype=np.uint64)
    pool[rng.random(n) < 0.2] = 0
    query = pool[0].copy()
    a = kernels._tanimoto_many_loop(query, pool)
    b = kernels._tanimoto_many_numpy(query, pool)
    assert np.array_equal(a, b)
    assert a[0] == 1.0


def test_tanimoto_small_sets():
    q = np.array([0b1110], dtype=np.uint64)
    pool = np.array([[0b11100], [0b1110], [0b10000], [0]], dtype=np.uint64)
    assert kernels.tanimoto_many(q, pool).tolist() == [0.5, 1.0, 0.0, 0.0]
    assert kernels.tanimoto_many(np.zeros(1, np.uint64), np.zeros((1, 1), np.uint64)).tolist() == [1.0]


def test_env_flag_selects_numpy():
    env = dict(os.environ, MOLCYCLEGAN_DISABLE_NUMBA="1")
    code = ("import numpy as np; from molcyclegan import kernels; from molcyclegan._accel import backend;"
            "print(backend()); print(kernels.knn_scan(np.eye(3), np.eye(3)[1], 1)[0][0, 0])")
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.split() == ["numpy", "1"]


def test_default_backend():
    expected = "numpy" if os.environ.get("MOLCYCLEGAN_DISABLE_NUMBA") else "numba"
    assert backend() == expected
