"""Hot numeric kernels with a JIT path and a pure-numpy fallback.

Two families live here: batched nearest-neighbor queries against a uniform
grid (the inner loop of every estimator) and half-plane clipping of convex
polygons (the inner loop of the exact 2-d oracle). Each has a numba
implementation and a numpy implementation with identical results; set
PVLAB_DISABLE_NUMBA=1 before import to force the fallback. numba runs with
fastmath off, so both paths do the same IEEE arithmetic in the same order.

Distances are compared as squared Euclidean distances accumulated over
coordinates in ascending axis order; ties go to the lowest original point
index, matching a first-minimum scan of the brute-force distance vector.
"""
from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = False
if os.environ.get("PVLAB_DISABLE_NUMBA", "").strip().lower() not in ("1", "true", "yes"):
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
        pass

if NUMBA_ENABLED:
    import functools

    jit = functools.partial(numba.njit, cache=True, nogil=True)
else:
    def jit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap

# safety factor for the ring-search stopping rule: covers the ulp-level slack
# between a point's real cell and its floating-point cell assignment, and
# forces one extra ring whenever an unscanned point could tie exactly
RING_SLACK = 1.0 - 1e-12

_INT_MAX = np.iinfo(np.int64).max


# ---------------------------------------------------------------------------
# nearest neighbor: brute force


def brute_force_query(points: np.ndarray, queries: np.ndarray,
                      chunk_bytes: int = 1 << 26):
    """Exact nearest neighbor by full scan; first minimum wins ties.

    Returns (index, distance) arrays. The reference implementation the grid
    path is tested against, and the repair path of the numpy fallback.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n, d = points.shape
    m = queries.shape[0]
    out_idx = np.empty(m, dtype=np.int64)
    out_d2 = np.empty(m, dtype=np.float64)
    step = max(1, chunk_bytes // (n * d * 8))
    for s in range(0, m, step):
        q = queries[s:s + step]
        d2 = np.sum((q[:, None, :] - points[None, :, :]) ** 2, axis=2)
        idx = np.argmin(d2, axis=1)
        out_idx[s:s + step] = idx
        out_d2[s:s + step] = d2[np.arange(len(q)), idx]
    return out_idx, np.sqrt(out_d2)


# ---------------------------------------------------------------------------
# nearest neighbor: uniform grid, expanding ring search (JIT path)


@jit()
def _grid_query_loop2(pts, orig, cell_start, lo, inv_cs, cs_min, ncells, strides,
                      queries, out_idx, out_dist):
    # d = 2 specialization of _grid_query_loop (same algorithm, unrolled)
    m = queries.shape[0]
    n0, n1 = ncells[0], ncells[1]
    s0, s1 = strides[0], strides[1]
    for qi in range(m):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        c0 = int((qx - lo[0]) * inv_cs[0])
        if c0 < 0:
            c0 = 0
        elif c0 >= n0:
            c0 = n0 - 1
        c1 = int((qy - lo[1]) * inv_cs[1])
        if c1 < 0:
            c1 = 0
        elif c1 >= n1:
            c1 = n1 - 1
        span0 = c0 if c0 > n0 - 1 - c0 else n0 - 1 - c0
        span1 = c1 if c1 > n1 - 1 - c1 else n1 - 1 - c1
        maxspan = span0 if span0 > span1 else span1
        best = np.inf
        bidx = np.int64(-1)
        r = 0
        while True:
            a_lo = c0 - r if c0 - r >= 0 else 0
            a_hi = c0 + r if c0 + r < n0 else n0 - 1
            for a in range(a_lo, a_hi + 1):
                da = a - c0
                on_edge = da == r or da == -r
                b_first = c1 - r
                b_step = 1 if on_edge else 2 * r
                b = b_first
                while b <= c1 + r:
                    if 0 <= b < n1:
                        flat = a * s0 + b * s1
                        for j in range(cell_start[flat], cell_start[flat + 1]):
                            t0 = qx - pts[j, 0]
                            t1 = qy - pts[j, 1]
                            d2 = t0 * t0 + t1 * t1
                            if d2 < best or (d2 == best and orig[j] < bidx):
                                best = d2
                                bidx = orig[j]
                    if b_step == 0:
                        break
                    b += b_step
            if bidx >= 0:
                thr = r * cs_min * RING_SLACK
                if best < thr * thr or r >= maxspan:
                    break
            r += 1
        out_idx[qi] = bidx
        out_dist[qi] = np.sqrt(best)


@jit()
def _grid_query_loop3(pts, orig, cell_start, lo, inv_cs, cs_min, ncells, strides,
                      queries, out_idx, out_dist):
    # d = 3 specialization
    m = queries.shape[0]
    n0, n1, n2 = ncells[0], ncells[1], ncells[2]
    s0, s1, s2 = strides[0], strides[1], strides[2]
    for qi in range(m):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        c0 = int((qx - lo[0]) * inv_cs[0])
        if c0 < 0:
            c0 = 0
        elif c0 >= n0:
            c0 = n0 - 1
        c1 = int((qy - lo[1]) * inv_cs[1])
        if c1 < 0:
            c1 = 0
        elif c1 >= n1:
            c1 = n1 - 1
        c2 = int((qz - lo[2]) * inv_cs[2])
        if c2 < 0:
            c2 = 0
        elif c2 >= n2:
            c2 = n2 - 1
        maxspan = c0 if c0 > n0 - 1 - c0 else n0 - 1 - c0
        t = c1 if c1 > n1 - 1 - c1 else n1 - 1 - c1
        if t > maxspan:
            maxspan = t
        t = c2 if c2 > n2 - 1 - c2 else n2 - 1 - c2
        if t > maxspan:
            maxspan = t
        best = np.inf
        bidx = np.int64(-1)
        r = 0
        while True:
            for da in range(-r, r + 1):
                a = c0 + da
                if a < 0 or a >= n0:
                    continue
                edge_a = da == r or da == -r
                for db in range(-r, r + 1):
                    b = c1 + db
                    if b < 0 or b >= n1:
                        continue
                    edge_ab = edge_a or db == r or db == -r
                    c_step = 1 if edge_ab else 2 * r
                    dc = -r
                    while dc <= r:
                        c = c2 + dc
                        if 0 <= c < n2:
                            flat = a * s0 + b * s1 + c * s2
                            for j in range(cell_start[flat], cell_start[flat + 1]):
                                t0 = qx - pts[j, 0]
                                t1 = qy - pts[j, 1]
                                t2 = qz - pts[j, 2]
                                d2 = t0 * t0 + t1 * t1 + t2 * t2
                                if d2 < best or (d2 == best and orig[j] < bidx):
                                    best = d2
                                    bidx = orig[j]
                        if c_step == 0:
                            break
                        dc += c_step
            if bidx >= 0:
                thr = r * cs_min * RING_SLACK
                if best < thr * thr or r >= maxspan:
                    break
            r += 1
        out_idx[qi] = bidx
        out_dist[qi] = np.sqrt(best)


@jit()
def _grid_query_loop(pts, orig, cell_start, lo, inv_cs, cs_min, ncells, strides,
                     queries, out_idx, out_dist):
    m, d = queries.shape
    home = np.empty(d, dtype=np.int64)
    off = np.empty(d, dtype=np.int64)
    for qi in range(m):
        maxspan = 0
        for k in range(d):
            c = int((queries[qi, k] - lo[k]) * inv_cs[k])
            if c < 0:
                c = 0
            elif c >= ncells[k]:
                c = ncells[k] - 1
            home[k] = c
            span = c if c > ncells[k] - 1 - c else ncells[k] - 1 - c
            if span > maxspan:
                maxspan = span
        best = np.inf
        bidx = np.int64(-1)
        r = 0
        while True:
            for k in range(d):
                off[k] = -r
            while True:
                cheb = 0
                for k in range(d):
                    a = off[k] if off[k] >= 0 else -off[k]
                    if a > cheb:
                        cheb = a
                if cheb == r:
                    flat = np.int64(0)
                    ok = True
                    for k in range(d):
                        c = home[k] + off[k]
                        if c < 0 or c >= ncells[k]:
                            ok = False
                            break
                        flat += c * strides[k]
                    if ok:
                        for j in range(cell_start[flat], cell_start[flat + 1]):
                            d2 = 0.0
                            for k in range(d):
                                t = queries[qi, k] - pts[j, k]
                                d2 += t * t
                            if d2 < best or (d2 == best and orig[j] < bidx):
                                best = d2
                                bidx = orig[j]
                k = d - 1
                while k >= 0 and off[k] == r:
                    off[k] = -r
                    k -= 1
                if k < 0:
                    break
                off[k] += 1
            if bidx >= 0:
                thr = r * cs_min * RING_SLACK
                if best < thr * thr or r >= maxspan:
                    break
            r += 1
        out_idx[qi] = bidx
        out_dist[qi] = np.sqrt(best)


# ---------------------------------------------------------------------------
# nearest neighbor: uniform grid, vectorized 3^d neighborhood (numpy path)


def _neighbor_offsets(d: int) -> np.ndarray:
    grids = np.meshgrid(*([np.array([-1, 0, 1], dtype=np.int64)] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _grid_query_vec(pts, orig, cell_table, lo, inv_cs, cs_min, ncells, strides,
                    queries, out_idx, out_dist):
    m, d = queries.shape
    offsets = _neighbor_offsets(d)
    cap = cell_table.shape[1]
    thr2 = (cs_min * RING_SLACK) ** 2
    step = max(1, (1 << 24) // (offsets.shape[0] * cap * 8))
    for s in range(0, m, step):
        q = queries[s:s + step]
        home = ((q - lo) * inv_cs).astype(np.int64)
        np.clip(home, 0, ncells - 1, out=home)
        nbr = home[:, None, :] + offsets[None, :, :]
        valid_cell = np.all((nbr >= 0) & (nbr < ncells), axis=2)
        flat = np.einsum("ijk,k->ij", np.where(valid_cell[:, :, None], nbr, 0), strides)
        cand = cell_table[flat]                             # (mc, 3^d, cap)
        cand[~valid_cell] = -1
        cand = cand.reshape(len(q), -1)
        ok = cand >= 0
        diff = pts[np.where(ok, cand, 0)] - q[:, None, :]
        d2 = np.sum(diff * diff, axis=2)
        d2[~ok] = np.inf
        best = d2.min(axis=1)
        tie = d2 == best[:, None]
        cand_orig = np.where(tie & ok, orig[np.where(ok, cand, 0)], _INT_MAX)
        bidx = cand_orig.min(axis=1)
        bad = ~(best < thr2)                                # includes best == inf
        if np.any(bad):
            bi, bd2 = _brute_tiebreak(pts, orig, q[bad])
            bidx[bad] = bi
            best[bad] = bd2
        out_idx[s:s + step] = bidx
        out_dist[s:s + step] = np.sqrt(best)


def _brute_tiebreak(pts, orig, queries, chunk_bytes: int = 1 << 25):
    """Full scan with ties broken by lowest original index (repair path)."""
    n, d = pts.shape
    m = queries.shape[0]
    out_idx = np.empty(m, dtype=np.int64)
    out_d2 = np.empty(m, dtype=np.float64)
    step = max(1, chunk_bytes // (n * d * 8))
    for s in range(0, m, step):
        q = queries[s:s + step]
        d2 = np.sum((q[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        best = d2.min(axis=1)
        cand = np.where(d2 == best[:, None], orig[None, :], _INT_MAX)
        out_idx[s:s + step] = cand.min(axis=1)
        out_d2[s:s + step] = best
    return out_idx, out_d2


def grid_query(pts, orig, cell_start, cell_table, lo, inv_cs, cs_min, ncells,
               strides, queries):
    """Batched exact nearest neighbor against a built grid."""
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    m = queries.shape[0]
    out_idx = np.empty(m, dtype=np.int64)
    out_dist = np.empty(m, dtype=np.float64)
    if NUMBA_ENABLED:
        d = queries.shape[1]
        loop = {2: _grid_query_loop2, 3: _grid_query_loop3}.get(d, _grid_query_loop)
        loop(pts, orig, cell_start, lo, inv_cs, cs_min, ncells, strides,
             queries, out_idx, out_dist)
    else:
        _grid_query_vec(pts, orig, cell_table, lo, inv_cs, cs_min, ncells,
                        strides, queries, out_idx, out_dist)
    return out_idx, out_dist


# ---------------------------------------------------------------------------
# convex polygon clipping


@jit(inline="always")
def _clip_halfplane(src, n, nx, ny, c, dst):
    # keep the side nx*x + ny*y <= c; src/dst are (cap, 2) buffers
    m = 0
    px = src[n - 1, 0]
    py = src[n - 1, 1]
    pd = nx * px + ny * py - c
    for k in range(n):
        qx = src[k, 0]
        qy = src[k, 1]
        qd = nx * qx + ny * qy - c
        if pd <= 0.0:
            dst[m, 0] = px
            dst[m, 1] = py
            m += 1
            if qd > 0.0:
                t = pd / (pd - qd)
                dst[m, 0] = px + t * (qx - px)
                dst[m, 1] = py + t * (qy - py)
                m += 1
        elif qd <= 0.0:
            t = pd / (pd - qd)
            dst[m, 0] = px + t * (qx - px)
            dst[m, 1] = py + t * (qy - py)
            m += 1
        px = qx
        py = qy
        pd = qd
    return m


@jit(inline="always")
def _shoelace(buf, n):
    s = 0.0
    for k in range(n):
        k2 = k + 1 if k + 1 < n else 0
        s += buf[k, 0] * buf[k2, 1] - buf[k2, 0] * buf[k, 1]
    return 0.5 * abs(s)


@jit()
def _clip_cells_loop(sites, indptr, nbrs, wlo, whi, cap, verts, offsets, nv,
                     areas, touches):
    n = sites.shape[0]
    bufa = np.empty((cap, 2), dtype=np.float64)
    bufb = np.empty((cap, 2), dtype=np.float64)
    tol0 = 1e-12 * (abs(whi[0] - wlo[0]) + abs(whi[1] - wlo[1]))
    for i in range(n):
        bufa[0, 0] = wlo[0]
        bufa[0, 1] = wlo[1]
        bufa[1, 0] = whi[0]
        bufa[1, 1] = wlo[1]
        bufa[2, 0] = whi[0]
        bufa[2, 1] = whi[1]
        bufa[3, 0] = wlo[0]
        bufa[3, 1] = whi[1]
        na = 4
        src, dst = bufa, bufb
        for e in range(indptr[i], indptr[i + 1]):
            j = nbrs[e]
            nx = sites[j, 0] - sites[i, 0]
            ny = sites[j, 1] - sites[i, 1]
            c = 0.5 * (nx * (sites[i, 0] + sites[j, 0]) + ny * (sites[i, 1] + sites[j, 1]))
            na = _clip_halfplane(src, na, nx, ny, c, dst)
            src, dst = dst, src
            if na == 0:
                break
        nv[i] = na
        areas[i] = _shoelace(src, na)
        touch = False
        base = offsets[i]
        for k in range(na):
            verts[base + k, 0] = src[k, 0]
            verts[base + k, 1] = src[k, 1]
            if (abs(src[k, 0] - wlo[0]) <= tol0 or abs(src[k, 0] - whi[0]) <= tol0
                    or abs(src[k, 1] - wlo[1]) <= tol0 or abs(src[k, 1] - whi[1]) <= tol0):
                touch = True
        touches[i] = touch


def _clip_halfplane_py(poly, nx, ny, c):
    out = []
    px, py = poly[-1]
    pd = nx * px + ny * py - c
    for qx, qy in poly:
        qd = nx * qx + ny * qy - c
        if pd <= 0.0:
            out.append((px, py))
            if qd > 0.0:
                t = pd / (pd - qd)
                out.append((px + t * (qx - px), py + t * (qy - py)))
        elif qd <= 0.0:
            t = pd / (pd - qd)
            out.append((px + t * (qx - px), py + t * (qy - py)))
        px, py, pd = qx, qy, qd
    return out


def _shoelace_py(poly):
    s = 0.0
    for k in range(len(poly)):
        x0, y0 = poly[k]
        x1, y1 = poly[(k + 1) % len(poly)]
        s += x0 * y1 - x1 * y0
    return 0.5 * abs(s)


def _clip_cells_py(sites, indptr, nbrs, wlo, whi, cap, verts, offsets, nv,
                   areas, touches):
    n = sites.shape[0]
    tol0 = 1e-12 * (abs(whi[0] - wlo[0]) + abs(whi[1] - wlo[1]))
    rect = [(wlo[0], wlo[1]), (whi[0], wlo[1]), (whi[0], whi[1]), (wlo[0], whi[1])]
    for i in range(n):
        poly = rect
        six, siy = sites[i]
        for e in range(indptr[i], indptr[i + 1]):
            j = nbrs[e]
            nx = sites[j, 0] - six
            ny = sites[j, 1] - siy
            c = 0.5 * (nx * (six + sites[j, 0]) + ny * (siy + sites[j, 1]))
            poly = _clip_halfplane_py(poly, nx, ny, c)
            if not poly:
                break
        nv[i] = len(poly)
        areas[i] = _shoelace_py(poly)
        touch = False
        base = offsets[i]
        for k, (x, y) in enumerate(poly):
            verts[base + k] = (x, y)
            if (abs(x - wlo[0]) <= tol0 or abs(x - whi[0]) <= tol0
                    or abs(y - wlo[1]) <= tol0 or abs(y - whi[1]) <= tol0):
                touch = True
        touches[i] = touch


def clip_cells_window(sites, indptr, nbrs, wlo, whi):
    """Clip each site's bisector cell against the window rectangle.

    For site i the cell is the window intersected with the half-planes
    "closer to i than to j" over the listed neighbors j. Returns
    (areas, verts, offsets, nv, touches) with the cell polygons stored
    flat in ccw order: cell i occupies verts[offsets[i] : offsets[i]+nv[i]].
    """
    sites = np.ascontiguousarray(sites, dtype=np.float64)
    n = sites.shape[0]
    deg = np.diff(indptr)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg + 5, out=offsets[1:])
    cap = int(deg.max()) + 6 if n else 6
    verts = np.empty((offsets[-1], 2), dtype=np.float64)
    nv = np.empty(n, dtype=np.int64)
    areas = np.empty(n, dtype=np.float64)
    touches = np.zeros(n, dtype=np.bool_)
    impl = _clip_cells_loop if NUMBA_ENABLED else _clip_cells_py
    impl(sites, indptr, nbrs, np.asarray(wlo, dtype=np.float64),
         np.asarray(whi, dtype=np.float64), cap, verts, offsets[:-1], nv,
         areas, touches)
    return areas, verts, offsets[:-1], nv, touches


@jit()
def _clip_edges_loop(verts, offsets, nv, cand, edge_nx, edge_ny, edge_c,
                     sub_indptr, sub_edges, cap, areas):
    bufa = np.empty((cap, 2), dtype=np.float64)
    bufb = np.empty((cap, 2), dtype=np.float64)
    for ci in range(cand.shape[0]):
        i = cand[ci]
        na = nv[i]
        base = offsets[i]
        for k in range(na):
            bufa[k, 0] = verts[base + k, 0]
            bufa[k, 1] = verts[base + k, 1]
        src, dst = bufa, bufb
        for e in range(sub_indptr[ci], sub_indptr[ci + 1]):
            ei = sub_edges[e]
            na = _clip_halfplane(src, na, edge_nx[ei], edge_ny[ei], edge_c[ei], dst)
            src, dst = dst, src
            if na == 0:
                break
        areas[ci] = _shoelace(src, na)


def _clip_edges_py(verts, offsets, nv, cand, edge_nx, edge_ny, edge_c,
                   sub_indptr, sub_edges, cap, areas):
    for ci in range(cand.shape[0]):
        i = cand[ci]
        base = offsets[i]
        poly = [tuple(p) for p in verts[base:base + nv[i]]]
        for e in range(sub_indptr[ci], sub_indptr[ci + 1]):
            ei = sub_edges[e]
            poly = _clip_halfplane_py(poly, edge_nx[ei], edge_ny[ei], edge_c[ei])
            if not poly:
                break
        areas[ci] = _shoelace_py(poly)


def clip_cells_against_edges(verts, offsets, nv, cand, edge_normals, edge_offsets,
                             sub_indptr, sub_edges):
    """Area of cell ∩ {y : n_e . y <= c_e for the cell's listed edges}.

    `cand` selects which cells to clip; `sub_indptr`/`sub_edges` give each
    candidate its own subset of the half-plane family (the edges whose lines
    actually pass near the cell; the caller guarantees the others are
    redundant for it).
    """
    areas = np.empty(cand.shape[0], dtype=np.float64)
    if cand.shape[0] == 0:
        return areas
    cap = int((nv[cand] + np.diff(sub_indptr)).max()) + 2
    impl = _clip_edges_loop if NUMBA_ENABLED else _clip_edges_py
    impl(verts, offsets, nv, cand,
         np.ascontiguousarray(edge_normals[:, 0]),
         np.ascontiguousarray(edge_normals[:, 1]),
         np.ascontiguousarray(edge_offsets), sub_indptr, sub_edges, cap, areas)
    return areas
