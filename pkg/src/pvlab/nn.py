"""Exact nearest-neighbor queries over a point sample.

A uniform grid sized at roughly one point per cell, searched in expanding
rings around the query's cell. Results are exact: identical point index and
distance to a brute-force scan, with ties broken by lowest point index.
Queries outside the window clamp to the nearest cell and widen the ring
search, so correctness does not depend on the query lying inside.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Window
from .process import PointSample

# below this size a vectorized full scan beats building and probing the grid
FLAT_SCAN_MAX = 64

# refuse to materialize pathological per-cell tables (numpy fallback only;
# queries then repair through the full scan)
_TABLE_MAX_ENTRIES = 50_000_000


class EmptySampleError(ValueError):
    """An index needs at least one point."""


@dataclass(eq=False)
class NnIndex:
    points: np.ndarray          # original order, (n, d)
    window: Window
    flat: bool
    # grid state, unset when flat
    pts_sorted: np.ndarray | None = None
    orig: np.ndarray | None = None
    cell_start: np.ndarray | None = None
    cell_table: np.ndarray | None = None
    lo: np.ndarray | None = None
    inv_cs: np.ndarray | None = None
    cs_min: float = 0.0
    ncells: np.ndarray | None = None
    strides: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.points.shape[0]


def build_index(sample: PointSample | np.ndarray, window: Window | None = None) -> NnIndex:
    """Build the query structure for a sample (EmptySampleError if empty)."""
    if isinstance(sample, PointSample):
        points, window = sample.points, sample.window
    else:
        points = np.asarray(sample, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must have shape (n, d)")
    n, d = points.shape
    if n == 0:
        raise EmptySampleError("cannot build an index over an empty sample")
    if window is None:
        lo, hi = points.min(axis=0), points.max(axis=0)
        pad = np.maximum(hi - lo, 1.0)
        window = Window(lo - 1e-9 * pad, hi + 1e-9 * pad)

    if n < FLAT_SCAN_MAX:
        return NnIndex(points, window, flat=True)

    side = window.side_lengths
    target = (window.volume() / n) ** (1.0 / d)
    ncells = np.maximum(1, np.rint(side / target)).astype(np.int64)
    cs = side / ncells
    inv_cs = 1.0 / cs
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * ncells[k + 1]
    ntot = int(np.prod(ncells))

    cell = ((points - window.lo) * inv_cs).astype(np.int64)
    np.clip(cell, 0, ncells - 1, out=cell)
    flat_id = cell @ strides
    order = np.argsort(flat_id, kind="stable")
    pts_sorted = np.ascontiguousarray(points[order])
    flat_sorted = flat_id[order]
    counts = np.bincount(flat_id, minlength=ntot)
    cell_start = np.zeros(ntot + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])

    cap = int(counts.max())
    if ntot * cap <= _TABLE_MAX_ENTRIES:
        cell_table = np.full((ntot, cap), -1, dtype=np.int64)
        pos = np.arange(n) - cell_start[flat_sorted]
        cell_table[flat_sorted, pos] = np.arange(n)
    else:
        cell_table = None

    return NnIndex(points, window, flat=False, pts_sorted=pts_sorted,
                   orig=order.astype(np.int64), cell_start=cell_start,
                   cell_table=cell_table, lo=window.lo.copy(), inv_cs=inv_cs,
                   cs_min=float(cs.min()), ncells=ncells, strides=strides)


def nearest(index: NnIndex, queries: np.ndarray):
    """Exact nearest sample point for each query: (index, distance).

    Accepts a single point (d,) or a batch (m, d); ties go to the lowest
    point index, exactly as in `nearest_bruteforce`.
    """
    q = np.asarray(queries, dtype=np.float64)
    single = q.ndim == 1
    q = np.ascontiguousarray(q[None, :] if single else q)
    full_scan = index.flat or (not kernels.NUMBA_ENABLED and index.cell_table is None)
    if full_scan:
        idx, d2 = kernels._brute_tiebreak(index.points,
                                          np.arange(index.n, dtype=np.int64), q)
        dist = np.sqrt(d2)
    else:
        idx, dist = kernels.grid_query(index.pts_sorted, index.orig,
                                       index.cell_start, index.cell_table,
                                       index.lo, index.inv_cs, index.cs_min,
                                       index.ncells, index.strides, q)
    if single:
        return int(idx[0]), float(dist[0])
    return idx, dist


def nearest_bruteforce(points: np.ndarray, queries: np.ndarray):
    """Reference scan: argmin of the distance vector, first minimum wins.

    The independent oracle the grid path is validated against.
    """
    points = np.asarray(points, dtype=np.float64)
    q = np.asarray(queries, dtype=np.float64)
    single = q.ndim == 1
    idx, dist = kernels.brute_force_query(points, q[None, :] if single else q)
    if single:
        return int(idx[0]), float(dist[0])
    return idx, dist
