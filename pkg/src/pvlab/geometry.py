"""Convex test bodies and axis-aligned observation windows.

Provides the geometric substrate for the estimators: a small family of
convex bodies (ball, axis-aligned box, 2-d ellipse, 2-d convex polygon)
with exact volume, intrinsic volumes, membership, distance-to-boundary
and inradius, plus the axis-aligned sampling windows derived from them.

Conventions: points are float64 arrays of shape (d,) or (n, d); all sets
are closed, so boundary points count as inside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import ellipe

# Cross products below this fraction of the squared edge scale are treated
# as collinear and rejected; degenerate edges would break clipping later.
COLLINEAR_TOL = 1e-12

BALL = "ball"
BOX = "box"
ELLIPSE = "ellipse"
POLYGON = "polygon"


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d (2, pi, 4pi/3, ...); 1 for d = 0."""
    if d < 0:
        raise ValueError(f"dimension must be >= 0, got {d}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True, eq=False)
class Window:
    """Axis-aligned box [lo_1, hi_1] x ... x [lo_d, hi_d]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("window bounds must be 1-d arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"window must satisfy lo < hi per axis, got lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def side_lengths(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        single = points.ndim == 1
        pts = points[None, :] if single else points
        ok = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
        return bool(ok[0]) if single else ok

    def dilate(self, margin: float) -> "Window":
        return Window(self.lo - margin, self.hi + margin)


def box_hull(a: Window, b: Window) -> Window:
    """Smallest axis-aligned box containing both windows."""
    return Window(np.minimum(a.lo, b.lo), np.maximum(a.hi, b.hi))


def _validate_polygon(vertices: np.ndarray) -> np.ndarray:
    verts = np.asarray(vertices, dtype=np.float64)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise ValueError("polygon vertices must have shape (m, 2)")
    # drop consecutive duplicates (incl. a repeated closing vertex)
    scale = float(np.max(np.abs(verts))) or 1.0
    keep = [0]
    for i in range(1, len(verts)):
        if np.max(np.abs(verts[i] - verts[keep[-1]])) > 1e-12 * scale:
            keep.append(i)
    if len(keep) > 1 and np.max(np.abs(verts[keep[-1]] - verts[keep[0]])) <= 1e-12 * scale:
        keep.pop()
    verts = verts[keep]
    if len(verts) < 3:
        raise ValueError("polygon needs at least 3 distinct vertices")
    edges = np.roll(verts, -1, axis=0) - verts
    edge_scale = float(np.max(np.sum(edges * edges, axis=1)))
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    if np.all(cross < 0):
        raise ValueError("polygon vertices must be in counterclockwise order")
    if np.any(cross <= COLLINEAR_TOL * edge_scale):
        raise ValueError("polygon must be strictly convex (collinear or reflex vertices found)")
    return verts


@dataclass(frozen=True, eq=False)
class ConvexBody:
    """One of the supported convex bodies, tagged by `kind`.

    Use the constructors `ball`, `box`, `ellipse`, `polygon`; the raw
    dataclass fields are an implementation detail.
    """

    kind: str
    dim: int
    center: np.ndarray
    radius: float = 0.0
    half_widths: np.ndarray | None = None
    semi_axes: np.ndarray | None = None
    vertices: np.ndarray | None = None
    # polygon edges as inward half-planes n.y <= c, unit normals
    _edge_normals: np.ndarray | None = field(default=None, repr=False)
    _edge_offsets: np.ndarray | None = field(default=None, repr=False)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def ball(center, radius: float) -> "ConvexBody":
        center = np.asarray(center, dtype=np.float64)
        if center.ndim != 1 or center.shape[0] < 2:
            raise ValueError("ball center must be a point in dimension >= 2")
        if not radius > 0:
            raise ValueError(f"ball radius must be > 0, got {radius}")
        return ConvexBody(BALL, center.shape[0], center, radius=float(radius))

    @staticmethod
    def box(center, half_widths) -> "ConvexBody":
        center = np.asarray(center, dtype=np.float64)
        half = np.asarray(half_widths, dtype=np.float64)
        if center.ndim != 1 or center.shape != half.shape or center.shape[0] < 2:
            raise ValueError("box needs matching center and half_widths in dimension >= 2")
        if not np.all(half > 0):
            raise ValueError(f"box half_widths must be > 0, got {half}")
        return ConvexBody(BOX, center.shape[0], center, half_widths=half)

    @staticmethod
    def ellipse(center, semi_axes) -> "ConvexBody":
        center = np.asarray(center, dtype=np.float64)
        axes = np.asarray(semi_axes, dtype=np.float64)
        if center.shape != (2,) or axes.shape != (2,):
            raise ValueError("ellipse is 2-d: center and semi_axes must have shape (2,)")
        if not np.all(axes > 0):
            raise ValueError(f"ellipse semi_axes must be > 0, got {axes}")
        return ConvexBody(ELLIPSE, 2, center, semi_axes=axes)

    @staticmethod
    def polygon(vertices) -> "ConvexBody":
        verts = _validate_polygon(vertices)
        center = verts.mean(axis=0)
        edges = np.roll(verts, -1, axis=0) - verts
        lengths = np.sqrt(np.sum(edges * edges, axis=1))
        normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1) / lengths[:, None]
        # CCW order puts the interior on the left, so these normals point out;
        # store inward form n.y <= c
        offsets = np.sum(normals * verts, axis=1)
        return ConvexBody(POLYGON, 2, center, vertices=verts,
                          _edge_normals=normals, _edge_offsets=offsets)

    # -- measures ----------------------------------------------------------

    def volume(self) -> float:
        if self.kind == BALL:
            return unit_ball_volume(self.dim) * self.radius ** self.dim
        if self.kind == BOX:
            return float(np.prod(2.0 * self.half_widths))
        if self.kind == ELLIPSE:
            return math.pi * float(self.semi_axes[0] * self.semi_axes[1])
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(0.5 * np.abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def perimeter(self) -> float:
        """Boundary length (2-d bodies only)."""
        if self.dim != 2:
            raise ValueError("perimeter is only defined here for 2-d bodies")
        if self.kind == BALL:
            return 2.0 * math.pi * self.radius
        if self.kind == BOX:
            return float(4.0 * np.sum(self.half_widths))
        if self.kind == ELLIPSE:
            a, b = float(np.max(self.semi_axes)), float(np.min(self.semi_axes))
            # complete elliptic integral of the second kind, parameter m = e^2
            return 4.0 * a * float(ellipe(1.0 - (b / a) ** 2))
        edges = np.roll(self.vertices, -1, axis=0) - self.vertices
        return float(np.sum(np.sqrt(np.sum(edges * edges, axis=1))))

    def intrinsic_volumes(self) -> np.ndarray:
        """Vector (V_0, ..., V_d); V_d is the volume, V_0 = 1."""
        d = self.dim
        if self.kind == BALL:
            kd = unit_ball_volume(d)
            return np.array([math.comb(d, i) * kd * self.radius ** i / unit_ball_volume(d - i)
                             for i in range(d + 1)])
        if self.kind == BOX:
            # V_i is the i-th elementary symmetric polynomial of the side lengths
            return _esp(2.0 * self.half_widths)
        # remaining kinds are 2-d
        return np.array([1.0, 0.5 * self.perimeter(), self.volume()])

    def inradius(self) -> float:
        if self.kind == BALL:
            return self.radius
        if self.kind == BOX:
            return float(np.min(self.half_widths))
        if self.kind == ELLIPSE:
            return float(np.min(self.semi_axes))
        # Chebyshev center: maximize r subject to n.x + r <= c for every edge
        n = self._edge_normals
        res = linprog(c=[0.0, 0.0, -1.0],
                      A_ub=np.column_stack([n, np.ones(len(n))]),
                      b_ub=self._edge_offsets,
                      bounds=[(None, None), (None, None), (0, None)],
                      method="highs")
        if not res.success:
            raise RuntimeError(f"Chebyshev center LP failed: {res.message}")
        return float(res.x[2])

    # -- point queries -----------------------------------------------------

    def contains(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        single = points.ndim == 1
        pts = points[None, :] if single else points
        q = pts - self.center
        if self.kind == BALL:
            ok = np.sum(q * q, axis=1) <= self.radius * self.radius
        elif self.kind == BOX:
            ok = np.all(np.abs(q) <= self.half_widths, axis=1)
        elif self.kind == ELLIPSE:
            s = q / self.semi_axes
            ok = np.sum(s * s, axis=1) <= 1.0
        else:
            ok = np.all(pts @ self._edge_normals.T <= self._edge_offsets, axis=1)
        return bool(ok[0]) if single else ok

    def boundary_distance(self, points: np.ndarray):
        """Euclidean distance to the boundary (same value inside and out)."""
        points = np.asarray(points, dtype=np.float64)
        single = points.ndim == 1
        pts = points[None, :] if single else points
        q = pts - self.center
        if self.kind == BALL:
            out = np.abs(np.sqrt(np.sum(q * q, axis=1)) - self.radius)
        elif self.kind == BOX:
            gap = np.abs(q) - self.half_widths
            outside = np.sqrt(np.sum(np.maximum(gap, 0.0) ** 2, axis=1))
            inside = -np.max(gap, axis=1)
            out = np.where(np.any(gap > 0.0, axis=1), outside, inside)
        elif self.kind == ELLIPSE:
            a, b = float(self.semi_axes[0]), float(self.semi_axes[1])
            out = np.array([_ellipse_boundary_distance(a, b, qx, qy) for qx, qy in q])
        else:
            out = _polygon_boundary_distance(self.vertices, pts)
        return float(out[0]) if single else out

    def support(self, direction) -> float:
        """Support function: max of u . y over the body, for unit u."""
        u = np.asarray(direction, dtype=np.float64)
        if u.shape != (self.dim,):
            raise ValueError(f"direction must have shape ({self.dim},)")
        norm = math.sqrt(float(np.dot(u, u)))
        if not norm > 0:
            raise ValueError("direction must be nonzero")
        u = u / norm
        base = float(np.dot(u, self.center))
        if self.kind == BALL:
            return base + self.radius
        if self.kind == BOX:
            return base + float(np.dot(np.abs(u), self.half_widths))
        if self.kind == ELLIPSE:
            a, b = self.semi_axes
            return base + math.hypot(a * u[0], b * u[1])
        return float(np.max(self.vertices @ u))

    # -- derived windows ---------------------------------------------------

    def bounding_box(self) -> Window:
        if self.kind == BALL:
            r = self.radius
            return Window(self.center - r, self.center + r)
        if self.kind == BOX:
            return Window(self.center - self.half_widths, self.center + self.half_widths)
        if self.kind == ELLIPSE:
            return Window(self.center - self.semi_axes, self.center + self.semi_axes)
        return Window(self.vertices.min(axis=0), self.vertices.max(axis=0))

    def dilated_window(self, margin: float) -> Window:
        """Bounding box of the body grown by `margin` on every side."""
        if margin < 0:
            raise ValueError(f"margin must be >= 0, got {margin}")
        return self.bounding_box().dilate(margin)

    def dilated_volume(self, r: float) -> float:
        """Volume of the parallel body (Minkowski sum with a ball of radius r),
        from the Steiner expansion in the intrinsic volumes."""
        iv = self.intrinsic_volumes()
        d = self.dim
        return float(sum(unit_ball_volume(d - i) * iv[i] * r ** (d - i) for i in range(d + 1)))


def _esp(values: np.ndarray) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_n of the given values,
    read off the coefficients of prod_i (1 + v_i x)."""
    poly = np.array([1.0])
    for v in values:
        poly = np.convolve(poly, np.array([1.0, v]))
    return poly


def _polygon_boundary_distance(verts: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # min over edges of point-to-segment distance, vectorized over points
    a = verts
    b = np.roll(verts, -1, axis=0)
    ab = b - a                                      # (m, 2)
    len2 = np.sum(ab * ab, axis=1)                  # (m,)
    ap = pts[:, None, :] - a[None, :, :]            # (n, m, 2)
    t = np.clip(np.sum(ap * ab[None, :, :], axis=2) / len2[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    diff = pts[:, None, :] - proj
    return np.sqrt(np.min(np.sum(diff * diff, axis=2), axis=1))


def _ellipse_boundary_distance(a: float, b: float, qx: float, qy: float) -> float:
    """Distance from (qx, qy) to the ellipse x^2/a^2 + y^2/b^2 = 1.

    Solves the one-parameter projection condition sum_k (a_k q_k/(t+a_k^2))^2 = 1
    by bisection-safeguarded Newton; points on the axes get the closed forms.
    """
    u, v = abs(qx), abs(qy)
    if u == 0.0 and v == 0.0:
        return min(a, b)
    if v == 0.0:
        return _axis_distance(a, b, u)
    if u == 0.0:
        return _axis_distance(b, a, v)

    au2, bv2 = (a * u) ** 2, (b * v) ** 2
    a2, b2 = a * a, b * b

    def f_and_df(t):
        p, r = t + a2, t + b2
        f = au2 / (p * p) + bv2 / (r * r) - 1.0
        df = -2.0 * (au2 / (p * p * p) + bv2 / (r * r * r))
        return f, df

    lo = -min(a2, b2)  # f -> +inf as t -> lo from above
    hi = max(a * u, b * v) + max(a2, b2)  # f(hi) < 0: each term < 1/4 there
    while f_and_df(hi)[0] >= 0.0:
        hi *= 2.0
    t = 0.0 if f_and_df(0.0)[0] < 0.0 else 0.5 * (max(a * u, b * v) - min(a2, b2))
    for _ in range(60):
        f, df = f_and_df(t)
        if f > 0.0:
            lo = t
        else:
            hi = t
        if abs(f) < 1e-12:
            break
        step = t - f / df
        t = step if lo < step < hi else 0.5 * (lo + hi)
    px = a2 * u / (t + a2)
    py = b2 * v / (t + b2)
    return math.hypot(px - u, py - v)


def _axis_distance(a: float, b: float, u: float) -> float:
    # nearest boundary point from (u, 0) on x^2/a^2 + y^2/b^2 = 1, u >= 0
    best = abs(u - a)
    c2 = a * a - b * b
    if c2 > 0.0 and u * a < c2:
        px = a * a * u / c2
        py2 = b * b * (1.0 - (px / a) ** 2)
        best = min(best, math.hypot(px - u, math.sqrt(py2)))
    return best
