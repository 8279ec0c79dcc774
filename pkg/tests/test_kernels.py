import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tlsreflect import kernels
from tlsreflect.core import SpatialIndex


def unit_rows(r, n):
    v = r.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, 7, 11]))
def test_hausdorff_rows_flavours_agree(seed, n):
    r = np.random.default_rng(seed)
    a, b = r.random((50, n)), r.random((50, n))
    assert np.array_equal(kernels.hausdorff_rows_nb(a, b), kernels.hausdorff_rows_np(a, b))


def test_hausdorff_rows_np_chunking():
    r = np.random.default_rng(0)
    a, b = r.random((1000, 11)), r.random((1000, 11))
    assert np.array_equal(kernels.hausdorff_rows_np(a, b, chunk=64), kernels.hausdorff_rows_np(a, b))


@given(st.integers(0, 10 ** 6))
def test_relsfh_hist_flavours_agree(seed):
    r = np.random.default_rng(seed)
    pos = r.uniform(0, 2, (400, 3))
    normals = unit_rows(r, 400)
    ids = r.choice(400, 30, replace=False)
    axes = unit_rows(r, 30)
    indptr, indices = SpatialIndex(pos).radius_csr(pos[ids], 0.5, exclude=ids)
    args = (pos, normals, pos[ids], axes, indptr, indices, 0.5, 11, 7)
    for x, y in zip(kernels.relsfh_hist_nb(*args), kernels.relsfh_hist_np(*args)):
        np.testing.assert_allclose(x, y, atol=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(1, 8))
def test_dbscan_labels_flavours_agree(seed, min_pts):
    r = np.random.default_rng(seed)
    pos = r.uniform(0, 3, (300, 3))
    ids = np.arange(300)
    indptr, indices = SpatialIndex(pos).radius_csr(pos, 0.35, exclude=ids)
    assert np.array_equal(kernels.dbscan_labels_nb(indptr, indices, min_pts),
                          kernels.dbscan_labels_np(indptr, indices, min_pts))


@pytest.mark.parametrize("flag, expect", [("1", "numpy"), ("", "numba")])
def test_environment_switch(flag, expect):
    env = dict(os.environ, TLSREFLECT_NO_NUMBA=flag)
    code = ("from tlsreflect import _accel, kernels; "
            "print(_accel.backend(), kernels.dbscan_labels.__name__)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    suffix = "_np" if expect == "numpy" else "_nb"
    assert out[0] == expect and out[1].endswith(suffix)
