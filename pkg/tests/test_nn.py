"""Nearest-neighbor index vs the brute-force oracle."""
import numpy as np
import pytest

from pvlab import kernels
from pvlab.geometry import Window
from pvlab.nn import EmptySampleError, build_index, nearest, nearest_bruteforce
from pvlab.process import derive_stream, sample_poisson


def test_oracle_equivalence_random_instances():
    # random instances across sizes; queries reach one window-width outside
    rng = np.random.default_rng(2468)
    for trial in range(100):
        n = int(rng.integers(1, 2001))
        d = 2 if trial % 3 else 3
        lo = rng.uniform(-2.0, 0.0, d)
        hi = lo + rng.uniform(0.5, 3.0, d)
        w = Window(lo, hi)
        pts = rng.uniform(lo, hi, size=(n, d))
        idx = build_index(pts, w)
        width = hi - lo
        q = rng.uniform(lo - width, hi + width, size=(64, d))
        gi, gd = nearest(idx, q)
        bi, bd = nearest_bruteforce(pts, q)
        np.testing.assert_array_equal(gi, bi)
        np.testing.assert_array_equal(gd, bd)


def test_exact_tie_on_midpoint():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    idx = build_index(pts, Window(np.array([0.0, -1.0]), np.array([2.0, 1.0])))
    i, dist = nearest(idx, np.array([1.0, 0.0]))
    assert i == 0  # tie resolved to the lowest index
    assert dist == 1.0
    bi, bdist = nearest_bruteforce(pts, np.array([1.0, 0.0]))
    assert (bi, bdist) == (0, 1.0)


def test_ties_with_many_coincident_points():
    # several copies of the same point: lowest original index must win
    rng = np.random.default_rng(11)
    base = rng.uniform(0.0, 1.0, size=(40, 2))
    pts = np.concatenate([base, base[5:25], base[7:9]])
    perm = rng.permutation(len(pts))
    pts = pts[perm]
    w = Window(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    idx = build_index(pts, w)
    q = base + rng.normal(0.0, 1e-3, size=base.shape)
    gi, gd = nearest(idx, q)
    bi, bd = nearest_bruteforce(pts, q)
    np.testing.assert_array_equal(gi, bi)
    np.testing.assert_array_equal(gd, bd)


def test_grid_tie_across_cells():
    # symmetric points straddling a cell boundary, query on the boundary
    w = Window(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    rng = np.random.default_rng(3)
    fill = rng.uniform(-1.0, 1.0, size=(100, 2))
    special = np.array([[0.25, 0.0], [-0.25, 0.0]])
    pts = np.concatenate([fill, special])
    idx = build_index(pts, w)
    gi, gd = nearest(idx, np.array([[0.0, 0.0]]))
    bi, bd = nearest_bruteforce(pts, np.array([[0.0, 0.0]]))
    assert gi[0] == bi[0] and gd[0] == bd[0]


def test_far_outside_queries():
    rng = np.random.default_rng(8)
    w = Window(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    pts = sample_poisson(300.0, w, derive_stream(4, 0, 0).generator()).points
    idx = build_index(pts, w)
    q = np.array([[5.0, 5.0], [-3.0, 0.5], [0.5, 9.0], [-2.0, -2.0]])
    gi, gd = nearest(idx, q)
    bi, bd = nearest_bruteforce(pts, q)
    np.testing.assert_array_equal(gi, bi)
    np.testing.assert_array_equal(gd, bd)


def test_reported_distance_matches_expression():
    # distance equals sqrt of the coordinate-ordered sum of squares
    rng = np.random.default_rng(21)
    w = Window(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    pts = rng.uniform(0.0, 1.0, size=(500, 2))
    idx = build_index(pts, w)
    q = rng.uniform(0.0, 1.0, size=(200, 2))
    gi, gd = nearest(idx, q)
    diff = q - pts[gi]
    expect = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2)
    np.testing.assert_array_equal(gd, expect)


def test_single_point_and_empty():
    w = Window(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    idx = build_index(np.array([[0.3, 0.7]]), w)
    i, dist = nearest(idx, np.array([0.3, 0.7]))
    assert i == 0 and dist == 0.0
    with pytest.raises(EmptySampleError):
        build_index(np.empty((0, 2)), w)


def test_flat_scan_small_samples():
    rng = np.random.default_rng(6)
    w = Window(np.array([0.0, 0.0]), np.array([1.0, 1.0]))
    pts = rng.uniform(0.0, 1.0, size=(10, 2))
    idx = build_index(pts, w)
    assert idx.flat
    q = rng.uniform(-0.5, 1.5, size=(50, 2))
    gi, gd = nearest(idx, q)
    bi, bd = nearest_bruteforce(pts, q)
    np.testing.assert_array_equal(gi, bi)
    np.testing.assert_array_equal(gd, bd)


@pytest.mark.skipif(not kernels.NUMBA_ENABLED, reason="needs the numba path")
def test_numba_and_numpy_paths_agree():
    rng = np.random.default_rng(99)
    for d in (2, 3):
        w = Window(np.zeros(d), np.ones(d))
        pts = sample_poisson(800.0, w, derive_stream(12, d, 0).generator()).points
        idx = build_index(pts, w)
        q = rng.uniform(-0.5, 1.5, size=(2000, d))
        out_i = np.empty(len(q), dtype=np.int64)
        out_d = np.empty(len(q))
        kernels._grid_query_loop(idx.pts_sorted, idx.orig, idx.cell_start, idx.lo,
                                 idx.inv_cs, idx.cs_min, idx.ncells, idx.strides,
                                 q, out_i, out_d)
        vec_i = np.empty(len(q), dtype=np.int64)
        vec_d = np.empty(len(q))
        kernels._grid_query_vec(idx.pts_sorted, idx.orig, idx.cell_table, idx.lo,
                                idx.inv_cs, idx.cs_min, idx.ncells, idx.strides,
                                q, vec_i, vec_d)
        np.testing.assert_array_equal(out_i, vec_i)
        np.testing.assert_array_equal(out_d, vec_d)
