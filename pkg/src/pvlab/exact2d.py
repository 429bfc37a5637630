"""Exact Poisson-Voronoi functionals in the plane.

Independent oracle for the MC estimator: build the Voronoi diagram of the
sample, clip every cell to the observation window by half-plane clipping,
and sum exact polygon areas. Each cell is the window intersected with the
bisector half-planes against the site's Delaunay neighbors, which is the
full cell by duality, so the cell areas tile the window exactly.

The volume of the approximation needs only nucleus membership and is exact
for every body kind. The symmetric difference additionally clips cells
against the body; curved bodies (ball, ellipse) are sandwiched between an
inscribed and a circumscribed 4096-gon and both values are reported, their
midpoint serving as the estimate and the sandwich width as the
discretization bound.

Triangulation is delegated to Qhull (scipy.spatial.Delaunay); the
empty-circumcircle property is verified independently here with adaptive
orientation/in-circle predicates (float filter, exact rational fallback).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.spatial import Delaunay as _QhullDelaunay
from scipy.spatial import QhullError

from . import kernels
from .geometry import BALL, BOX, ELLIPSE, POLYGON, ConvexBody, Window
from .process import PointSample

# sites closer than this merge into one nucleus
DEDUP_TOL = 1e-14

# boundary discretization for curved bodies
NGON_SIDES = 4096


class CollinearSitesError(ValueError):
    """All sites lie on one line; no triangulation exists."""


@dataclass(frozen=True, eq=False)
class Triangulation:
    sites: np.ndarray       # (n, 2), deduplicated
    triangles: np.ndarray   # (m, 3) site indices, counterclockwise
    indptr: np.ndarray      # neighbor adjacency in CSR form
    indices: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]


@dataclass(frozen=True, eq=False)
class ClippedCell:
    nucleus_index: int      # index into the original site array
    nucleus: np.ndarray
    vertices: np.ndarray    # (k, 2) counterclockwise
    area: float
    touches_boundary: bool


@dataclass(frozen=True, eq=False)
class PvExactResult:
    """Exact window-truncated functionals of one realization.

    symdiff_pair holds the value against the inscribed and circumscribed
    polygon for curved bodies (equal entries when the body is polygonal);
    symdiff_bound is a rigorous bound on the discretization error of
    symdiff_area, zero for polygonal bodies.
    """

    pv_area: float
    symdiff_area: float
    symdiff_pair: tuple[float, float]
    symdiff_bound: float
    covering_gap: float     # |sum of cell areas - window area|, diagnostics
    n_sites: int
    n_in_body: int


def dedup_sites(points: np.ndarray, tol: float = DEDUP_TOL):
    """Indices of representative sites, coincident points merged.

    Keeps the lowest original index of every cluster; clusters are groups
    within Euclidean distance `tol` (coincident points share one cell, and
    membership is unambiguous because they share one location).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n <= 1:
        return np.arange(n)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    keep_mask = np.ones(n, dtype=bool)
    # scan x-clusters, then y-sorted chains inside them
    xs = pts[order, 0]
    start = 0
    for i in range(1, n + 1):
        if i == n or xs[i] - xs[i - 1] > tol:
            if i - start > 1:
                grp = order[start:i]
                grp = grp[np.argsort(pts[grp, 1], kind="stable")]
                anchor = grp[0]
                for g in grp[1:]:
                    if (abs(pts[g, 1] - pts[anchor, 1]) <= tol
                            and np.hypot(*(pts[g] - pts[anchor])) <= tol):
                        loser = max(g, anchor)
                        winner = min(g, anchor)
                        keep_mask[loser] = False
                        anchor = winner
                    else:
                        anchor = g
            start = i
    return np.flatnonzero(keep_mask)


def delaunay(sites: np.ndarray) -> Triangulation:
    """Delaunay triangulation (Qhull) with neighbor adjacency.

    Raises CollinearSitesError when the sites span no area; callers fall
    back to the slab decomposition below.
    """
    sites = np.ascontiguousarray(sites, dtype=np.float64)
    if sites.ndim != 2 or sites.shape[1] != 2:
        raise ValueError("sites must have shape (n, 2)")
    if len(sites) < 3:
        raise ValueError(f"triangulation needs >= 3 sites, got {len(sites)}")
    try:
        tri = _QhullDelaunay(sites)
    except QhullError as exc:
        if "QH6013" in str(exc) or "less than" in str(exc) or "flat" in str(exc):
            raise CollinearSitesError("sites are collinear") from exc
        raise
    if tri.coplanar.size:
        raise RuntimeError(
            "triangulation dropped input sites; deduplicate before calling")
    indptr, indices = tri.vertex_neighbor_vertices
    return Triangulation(sites, tri.simplices.astype(np.int64),
                         indptr.astype(np.int64), indices.astype(np.int64))


def _chain_adjacency(sites: np.ndarray):
    # collinear (or two-site) fallback: order along the spread direction;
    # only the two run neighbors matter, bisectors are parallel slabs
    span = sites.max(axis=0) - sites.min(axis=0)
    axis = int(np.argmax(span))
    proj = sites[:, axis]
    order = np.argsort(proj, kind="stable")
    n = len(sites)
    indptr = np.zeros(n + 1, dtype=np.int64)
    nbr_lists = [[] for _ in range(n)]
    for k, i in enumerate(order):
        if k > 0:
            nbr_lists[i].append(order[k - 1])
        if k + 1 < n:
            nbr_lists[i].append(order[k + 1])
    indices = np.fromiter((j for lst in nbr_lists for j in lst),
                          dtype=np.int64, count=sum(map(len, nbr_lists)))
    indptr[1:] = np.cumsum([len(lst) for lst in nbr_lists])
    return indptr, indices


def _cells_arrays(points: np.ndarray, clip: Window):
    """Clipped cell geometry for (deduplicated) sites.

    Returns (keep, sites, areas, verts, offsets, nv, touches) where `keep`
    maps each cell to its original site index.
    """
    keep = dedup_sites(points)
    sites = np.ascontiguousarray(np.asarray(points, dtype=np.float64)[keep])
    n = len(sites)
    if n == 0:
        raise ValueError("need at least one site")
    if n == 1:
        indptr = np.zeros(2, dtype=np.int64)
        indices = np.empty(0, dtype=np.int64)
    elif n == 2:
        indptr = np.array([0, 1, 2], dtype=np.int64)
        indices = np.array([1, 0], dtype=np.int64)
    else:
        try:
            tri = delaunay(sites)
            indptr, indices = tri.indptr, tri.indices
        except CollinearSitesError:
            indptr, indices = _chain_adjacency(sites)
    areas, verts, offsets, nv, touches = kernels.clip_cells_window(
        sites, indptr, indices, clip.lo, clip.hi)
    return keep, sites, areas, verts, offsets, nv, touches


def voronoi_cells_clipped(points: np.ndarray, clip: Window) -> list[ClippedCell]:
    """Voronoi cells of the sites clipped to the window, one per distinct site."""
    keep, sites, areas, verts, offsets, nv, touches = _cells_arrays(points, clip)
    return [ClippedCell(int(keep[i]), sites[i],
                        verts[offsets[i]:offsets[i] + nv[i]].copy(),
                        float(areas[i]), bool(touches[i]))
            for i in range(len(sites))]


# ---------------------------------------------------------------------------
# body polygonalization for the symmetric difference


_GON_CACHE: dict = {}


def _body_polygons(body: ConvexBody):
    """(inner, outer, gap_area, gap_width) polygonal sandwich of the body.

    Polygonal bodies return themselves twice with zero gaps. Curved bodies
    return the inscribed/circumscribed NGON_SIDES-gon; tangency survives the
    affine map from the circle, so the sandwich is rigorous. gap_width bounds
    how far either polygon boundary strays from the true boundary.
    """
    if body.kind in (POLYGON, BOX):
        if body.kind == POLYGON:
            poly = body
        else:
            hw = body.half_widths
            cx, cy = body.center
            poly = ConvexBody.polygon([(cx - hw[0], cy - hw[1]), (cx + hw[0], cy - hw[1]),
                                       (cx + hw[0], cy + hw[1]), (cx - hw[0], cy + hw[1])])
        return poly, poly, 0.0, 0.0

    if body.kind == BALL:
        a = b = body.radius
    else:
        a, b = float(body.semi_axes[0]), float(body.semi_axes[1])
    key = (round(float(body.center[0]), 15), round(float(body.center[1]), 15),
           round(a, 15), round(b, 15))
    hit = _GON_CACHE.get(key)
    if hit is not None:
        return hit
    n = NGON_SIDES
    th = 2.0 * math.pi * np.arange(n) / n
    u = np.column_stack([np.cos(th), np.sin(th)])
    inner = ConvexBody.polygon(body.center + u * [a, b])
    scale = 1.0 / math.cos(math.pi / n)
    th2 = th + math.pi / n
    u2 = np.column_stack([np.cos(th2), np.sin(th2)]) * scale
    outer = ConvexBody.polygon(body.center + u2 * [a, b])
    gap_area = outer.volume() - inner.volume()
    gap_width = max(a, b) * (scale - 1.0)
    out = (inner, outer, gap_area, gap_width)
    _GON_CACHE[key] = out
    return out


def _cell_poly_areas(sites, areas, verts, offsets, nv, poly: ConvexBody,
                     rc: np.ndarray, delta: np.ndarray, gap_pad: float):
    """area(cell ∩ poly) for every cell, by clipping only where needed.

    Cells whose bounding ball (center site, radius rc) clears the boundary
    band keep their full area or drop to zero by membership; the rest are
    clipped against the polygon edges whose lines pass through the ball.
    """
    n = len(sites)
    out = np.where(poly.contains(sites), areas, 0.0)
    cand = np.flatnonzero(delta <= rc + gap_pad)
    if cand.size == 0:
        return out
    normals = poly._edge_normals
    offs = poly._edge_offsets
    slack = offs[None, :] - sites[cand] @ normals.T      # >= 0 inside each edge
    dead = np.any(slack <= -rc[cand, None], axis=1)
    near = np.abs(slack) < rc[cand, None] + 1e-12
    out[cand[dead]] = 0.0
    todo = ~dead & np.any(near, axis=1)
    full = ~dead & ~np.any(near, axis=1)
    out[cand[full]] = areas[cand[full]]                  # strictly inside every edge
    sel = cand[todo]
    if sel.size:
        near_sel = near[todo]
        counts = near_sel.sum(axis=1)
        sub_indptr = np.zeros(len(sel) + 1, dtype=np.int64)
        np.cumsum(counts, out=sub_indptr[1:])
        sub_edges = np.flatnonzero(near_sel) % normals.shape[0]
        out[sel] = kernels.clip_cells_against_edges(
            verts, offsets, nv, sel.astype(np.int64), normals, offs,
            sub_indptr, sub_edges.astype(np.int64))
    return out


def pv_exact(body: ConvexBody, sample: PointSample | np.ndarray,
             clip: Window) -> PvExactResult:
    """Exact (pv_area, symdiff_area) of one realization, truncated to `clip`.

    pv_area is Vol{y in clip : nearest site in K}: the sum of clipped cell
    areas over nuclei in the body, exact for every kind. The clip window
    should contain the body with margin (normally W_out).
    """
    if body.dim != 2:
        raise ValueError("the exact oracle is 2-d only")
    points = sample.points if isinstance(sample, PointSample) else np.asarray(sample)
    if len(points) == 0:
        area = body.volume()
        return PvExactResult(0.0, area, (area, area), 0.0, 0.0, 0, 0)
    keep, sites, areas, verts, offsets, nv, touches = _cells_arrays(points, clip)
    in_k = body.contains(sites)
    pv_area = float(areas[in_k].sum())
    covering_gap = abs(float(areas.sum()) - clip.volume())

    # bounding radius of each cell around its site (verts is slot-padded,
    # so gather the live vertex runs before reducing per cell)
    n_cells = len(sites)
    rc = np.zeros(n_cells)
    starts = np.cumsum(nv) - nv
    live = np.repeat(offsets - starts, nv) + np.arange(int(nv.sum()))
    d2 = ((verts[live] - np.repeat(sites, nv, axis=0)) ** 2).sum(axis=1)
    nz = nv > 0
    if d2.size:
        rc[nz] = np.sqrt(np.maximum.reduceat(d2, starts[nz]))
    delta = body.boundary_distance(sites)

    inner, outer, gap_area, gap_width = _body_polygons(body)
    vals = []
    for poly in ((inner, outer) if gap_area else (inner,)):
        cell_in_poly = _cell_poly_areas(sites, areas, verts, offsets, nv, poly,
                                        rc, delta, gap_width)
        s = np.where(in_k, areas - cell_in_poly, cell_in_poly).sum()
        vals.append(float(s))
    if gap_area:
        s_in, s_out = vals
        symdiff = 0.5 * (s_in + s_out)
        bound = 0.5 * abs(s_out - s_in) + gap_area
        pair = (s_in, s_out)
    else:
        symdiff = vals[0]
        bound = 0.0
        pair = (vals[0], vals[0])
    return PvExactResult(pv_area, symdiff, pair, bound, covering_gap,
                         len(sites), int(in_k.sum()))


# ---------------------------------------------------------------------------
# adaptive predicates (verification instruments)


def orient2d(a, b, c) -> int:
    """Sign of the signed area of triangle abc (+1 ccw, -1 cw, 0 collinear)."""
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    mag = (abs(b[0] - a[0]) * abs(c[1] - a[1]) + abs(b[1] - a[1]) * abs(c[0] - a[0]))
    if abs(det) > 8.0 * np.finfo(float).eps * mag:
        return int(np.sign(det))
    fa, fb, fc = ([Fraction(x) for x in p] for p in (a, b, c))
    det = (fb[0] - fa[0]) * (fc[1] - fa[1]) - (fb[1] - fa[1]) * (fc[0] - fa[0])
    return (det > 0) - (det < 0)


def incircle(a, b, c, d) -> int:
    """+1 when d is strictly inside the circumcircle of ccw triangle abc,
    -1 outside, 0 on the circle. Exact: falls back to rationals near zero."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad2, bd2, cd2 = adx * adx + ady * ady, bdx * bdx + bdy * bdy, cdx * cdx + cdy * cdy
    det = (adx * (bdy * cd2 - cdy * bd2)
           - ady * (bdx * cd2 - cdx * bd2)
           + ad2 * (bdx * cdy - cdx * bdy))
    mag = (abs(adx) * (abs(bdy) * cd2 + abs(cdy) * bd2)
           + abs(ady) * (abs(bdx) * cd2 + abs(cdx) * bd2)
           + ad2 * (abs(bdx) * abs(cdy) + abs(cdx) * abs(bdy)))
    if abs(det) > 32.0 * np.finfo(float).eps * mag:
        return int(np.sign(det))
    fa, fb, fc, fd = ([Fraction(x) for x in p] for p in (a, b, c, d))
    adx, ady = fa[0] - fd[0], fa[1] - fd[1]
    bdx, bdy = fb[0] - fd[0], fb[1] - fd[1]
    cdx, cdy = fc[0] - fd[0], fc[1] - fd[1]
    ad2, bd2, cd2 = adx * adx + ady * ady, bdx * bdx + bdy * bdy, cdx * cdx + cdy * cdy
    det = (adx * (bdy * cd2 - cdy * bd2)
           - ady * (bdx * cd2 - cdx * bd2)
           + ad2 * (bdx * cdy - cdx * bdy))
    return (det > 0) - (det < 0)
