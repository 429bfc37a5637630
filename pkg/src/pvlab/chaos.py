"""Difference-kernel estimators for the covered-volume functional.

The covered volume is a square-integrable Poisson functional, so it has a
chaos decomposition whose order-n kernel is f_n(x_1..x_n) =
E D_{x_1..x_n} F / n!, built from iterated add-one differences. This
module estimates f_1 and f_2 pointwise by inserting virtual points into
sampled realizations, evaluates the analytic decay envelopes those kernels
must respect, and integrates f_1^2 by Monte Carlo so the first-order
variance contribution lambda * integral(f_1^2) can be compared against the
empirical variance of the estimator.

A virtual insertion never resamples: the change of F from adding x is
integrated with common query points over a window covering the influence
region of x, so per-realization differences carry no independent-noise
penalty. Inserting a point coincident with an existing one yields exactly
zero because distance ties keep the existing classification.

Stream layout: each outer replication k draws its points from role
ROLE_CHAOS and its queries from ROLE_CHAOS_QUERY at replication index
rep_offset + k, so nested evaluations (the f_1^2 integral) can keep their
realizations disjoint by spacing rep_offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimator, nn
from .estimator import DEFAULT_EPSILON
from .geometry import ConvexBody, Window, unit_ball_volume
from .process import (ROLE_CHAOS, ROLE_CHAOS_QUERY, ROLE_SCAN, derive_stream,
                      sample_poisson)

# query density for kernel estimates, per expected cell volume 1/lambda
QUERIES_PER_CELL = 4.0
MIN_QUERIES = 4096


@dataclass(frozen=True)
class KernelEstimate:
    """Monte Carlo estimate of a kernel value at fixed arguments."""

    value: float
    stderr: float
    n_outer: int
    n_query: int


@dataclass(frozen=True)
class ChaosNormEstimate:
    """Monte Carlo estimate of integral f_1(x)^2 dx."""

    value: float
    stderr: float
    n_eval: int
    n_outer: int
    n_query: int


def envelope_spread(lam: float, dim: int, order: int, radius: float) -> float:
    """Kernel magnitude bound decaying in the enclosing-ball radius.

    |f_n| <= exp(-lam * kappa_d * radius^d) / ((n-1)! * lam) where `radius`
    is the radius of the smallest ball containing all n arguments.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return (math.exp(-lam * unit_ball_volume(dim) * radius ** dim)
            / (math.factorial(order - 1) * lam))


def envelope_boundary_gap(lam: float, dim: int, order: int, gap: float) -> float:
    """Kernel magnitude bound decaying in the distance from the boundary.

    |f_n| <= 2 exp(-lam * kappa_d * gap^d / 8^d) / (n! * lam) where `gap`
    is the distance from the enclosing-ball center to the body boundary;
    only valid when gap > 8 * enclosing-ball radius (the caller checks).
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return (2.0 * math.exp(-lam * unit_ball_volume(dim) * gap ** dim / 8.0 ** dim)
            / (math.factorial(order) * lam))


def f1_norm_lower_bound(body: ConvexBody, lam: float) -> float:
    """Explicit lower bound on lambda * integral(f_1^2).

    Comes from points at depth ~lam^(-1/d) inside the body whose insertion
    flips a cell-sized region with probability bounded below; the constant
    is extremely small but strictly positive, which is what makes the
    variance lower bound (and with it the CLT) non-degenerate.
    """
    d = body.dim
    kd = unit_ball_volume(d)
    const = (kd ** 2 / 8.0 ** d
             * math.exp(-2.0 * (4.0 ** d - 2.0 ** -d) * kd)
             * (1.0 - math.exp(-(2.0 ** -d) * kd)) ** 2)
    v_dm1 = float(body.intrinsic_volumes()[d - 1])
    return const * 2.0 * v_dm1 * lam ** (-1.0 - 1.0 / d)


def _cover_window(w_out: Window, xs, reach: float) -> Window:
    lo = w_out.lo.copy()
    hi = w_out.hi.copy()
    for x in xs:
        lo = np.minimum(lo, x - reach)
        hi = np.maximum(hi, x + reach)
    return Window(lo, hi)


def _dist_to(queries: np.ndarray, x: np.ndarray) -> np.ndarray:
    # accumulate per axis in the same order as the nearest-neighbor kernels
    # so a virtual point coincident with a real one ties exactly
    d2 = (queries[:, 0] - x[0]) ** 2
    for a in range(1, queries.shape[1]):
        d2 = d2 + (queries[:, a] - x[a]) ** 2
    return np.sqrt(d2)


def add_one_cost(body: ConvexBody, sample, x, queries: np.ndarray,
                 cover_volume: float, index=None) -> float:
    """Signed change of covered volume when x joins one realization.

    Monte Carlo over the supplied common query points: positive where the
    insertion turns uncovered volume covered, negative the other way.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if index is None:
        index = nn.build_index(sample)
    points = sample.points if hasattr(sample, "points") else np.asarray(sample)
    idx, dn = nn.nearest(index, queries)
    flag = body.contains(points)[idx]
    dx = _dist_to(queries, x)
    cx = body.contains(x)
    with_x = np.where(dx < dn, cx, flag)
    signed = with_x.astype(np.int8) - flag.astype(np.int8)
    return cover_volume * float(signed.mean())


def _chaos_query_count(lam: float, w_cover: Window) -> int:
    return max(MIN_QUERIES, math.ceil(QUERIES_PER_CELL * lam * w_cover.volume()))


def estimate_f1(body: ConvexBody, lam: float, x, master_seed: int,
                n_outer: int = 400, n_query: int | None = None,
                epsilon: float = DEFAULT_EPSILON,
                rep_offset: int = 0) -> KernelEstimate:
    """First-order kernel f_1(x) = E[add-one cost at x], over n_outer
    independent realizations; stderr covers both realization and query noise."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (body.dim,):
        raise ValueError(f"x must have shape ({body.dim},)")
    w_out, w_proc = estimator.windows_for(body, lam, epsilon)
    m_out, _ = estimator.choose_margins(body, lam, epsilon)
    w_cover = _cover_window(w_out, [x], m_out)
    if n_query is None:
        n_query = _chaos_query_count(lam, w_cover)
    cx = body.contains(x)
    span = w_cover.hi - w_cover.lo
    vals = np.empty(n_outer)
    for k in range(n_outer):
        rng_p = derive_stream(master_seed, rep_offset + k, ROLE_CHAOS).generator()
        rng_q = derive_stream(master_seed, rep_offset + k, ROLE_CHAOS_QUERY).generator()
        spl = sample_poisson(lam, w_proc, rng_p)
        queries = w_cover.lo + rng_q.random((n_query, body.dim)) * span
        if spl.n == 0:
            vals[k] = w_cover.volume() if cx else 0.0
            continue
        idx, dn = nn.nearest(nn.build_index(spl), queries)
        flag = body.contains(spl.points)[idx]
        dx = _dist_to(queries, x)
        with_x = np.where(dx < dn, cx, flag)
        signed = with_x.astype(np.int8) - flag.astype(np.int8)
        vals[k] = w_cover.volume() * float(signed.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_outer)) if n_outer > 1 else math.inf
    return KernelEstimate(float(vals.mean()), stderr, n_outer, n_query)


def estimate_f2(body: ConvexBody, lam: float, x1, x2, master_seed: int,
                n_outer: int = 400, n_query: int | None = None,
                epsilon: float = DEFAULT_EPSILON,
                rep_offset: int = 0) -> KernelEstimate:
    """Second-order kernel f_2(x1, x2) = E[second difference] / 2.

    The four coverage evaluations (neither, x1, x2, both) share one
    realization and one query set, so the telescoping noise cancels.
    """
    x1 = np.asarray(x1, dtype=np.float64).reshape(-1)
    x2 = np.asarray(x2, dtype=np.float64).reshape(-1)
    if x1.shape != (body.dim,) or x2.shape != (body.dim,):
        raise ValueError(f"probe points must have shape ({body.dim},)")
    w_out, w_proc = estimator.windows_for(body, lam, epsilon)
    m_out, _ = estimator.choose_margins(body, lam, epsilon)
    w_cover = _cover_window(w_out, [x1, x2], m_out)
    if n_query is None:
        n_query = _chaos_query_count(lam, w_cover)
    c1 = int(body.contains(x1))
    c2 = int(body.contains(x2))
    span = w_cover.hi - w_cover.lo
    vals = np.empty(n_outer)
    for k in range(n_outer):
        rng_p = derive_stream(master_seed, rep_offset + k, ROLE_CHAOS).generator()
        rng_q = derive_stream(master_seed, rep_offset + k, ROLE_CHAOS_QUERY).generator()
        spl = sample_poisson(lam, w_proc, rng_p)
        queries = w_cover.lo + rng_q.random((n_query, body.dim)) * span
        d1 = _dist_to(queries, x1)
        d2 = _dist_to(queries, x2)
        if spl.n == 0:
            base = np.zeros(n_query, dtype=np.int8)
            a1 = np.full(n_query, c1, dtype=np.int8)
            a2 = np.full(n_query, c2, dtype=np.int8)
            a12 = np.where(d1 <= d2, c1, c2).astype(np.int8)
        else:
            idx, dn = nn.nearest(nn.build_index(spl), queries)
            base = body.contains(spl.points)[idx].astype(np.int8)
            a1 = np.where(d1 < dn, c1, base).astype(np.int8)
            a2 = np.where(d2 < dn, c2, base).astype(np.int8)
            a12 = np.where(dn <= np.minimum(d1, d2), base,
                           np.where(d1 <= d2, c1, c2)).astype(np.int8)
        second = a12 - a1 - a2 + base
        vals[k] = 0.5 * w_cover.volume() * float(second.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(n_outer)) if n_outer > 1 else math.inf
    return KernelEstimate(float(vals.mean()), stderr, n_outer, n_query)


def first_chaos_norm(body: ConvexBody, lam: float, master_seed: int,
                     n_eval: int = 400, n_outer: int = 150,
                     n_query: int | None = None,
                     epsilon: float = DEFAULT_EPSILON) -> ChaosNormEstimate:
    """integral f_1(x)^2 dx, by uniform x over the process window.

    Each x gets its own block of realizations so evaluation errors stay
    independent; f_1(x)^2 is debiased by subtracting the squared stderr of
    the inner estimate. The truncation to the process window only discards
    an epsilon-suppressed tail of the integrand.
    """
    w_out, w_proc = estimator.windows_for(body, lam, epsilon)
    rng_x = derive_stream(master_seed, 0, ROLE_SCAN).generator()
    xs = w_proc.lo + rng_x.random((n_eval, body.dim)) * (w_proc.hi - w_proc.lo)
    per = np.empty(n_eval)
    nq = n_query
    for i, x in enumerate(xs):
        est = estimate_f1(body, lam, x, master_seed, n_outer=n_outer,
                          n_query=n_query, epsilon=epsilon,
                          rep_offset=i * n_outer)
        per[i] = est.value ** 2 - est.stderr ** 2
        nq = est.n_query
    vol = w_proc.volume()
    value = vol * float(per.mean())
    stderr = vol * float(per.std(ddof=1) / math.sqrt(n_eval))
    return ChaosNormEstimate(value, stderr, n_eval, n_outer, int(nq))


def scan_segment(body: ConvexBody, lam: float, n_points: int,
                 epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Equally spaced probe points from the body center out along the first
    axis, ending one outer margin past the boundary."""
    if n_points < 2:
        raise ValueError(f"need at least 2 scan points, got {n_points}")
    u = np.zeros(body.dim)
    u[0] = 1.0
    reach = body.support(u) - float(body.center[0])
    m_out, _ = estimator.choose_margins(body, lam, epsilon)
    ts = np.linspace(0.0, reach + m_out, n_points)
    return body.center[None, :] + ts[:, None] * u[None, :]


def diameter_points(body: ConvexBody, n_points: int) -> np.ndarray:
    """Equally spaced probe points across the body along the first axis,
    endpoints on the boundary."""
    if n_points < 2:
        raise ValueError(f"need at least 2 scan points, got {n_points}")
    u = np.zeros(body.dim)
    u[0] = 1.0
    hi = body.support(u) - float(body.center[0])
    lo = -(body.support(-u) + float(body.center[0]))
    ts = np.linspace(lo, hi, n_points)
    return body.center[None, :] + ts[:, None] * u[None, :]


def kernel_scan(body: ConvexBody, lam: float, points: np.ndarray,
                master_seed: int, n_outer: int = 400,
                n_query: int | None = None,
                epsilon: float = DEFAULT_EPSILON) -> list[dict]:
    """Estimate f_1 at each probe point, with its envelopes and side of K.

    All points share realization streams (common random numbers), which
    smooths the scan profile; each row's stderr is valid on its own.
    """
    points = np.asarray(points, dtype=np.float64)
    rows = []
    for x in points:
        est = estimate_f1(body, lam, x, master_seed, n_outer=n_outer,
                          n_query=n_query, epsilon=epsilon)
        gap = float(body.boundary_distance(x))
        row = {f"x{a}": float(x[a]) for a in range(body.dim)}
        row.update({
            "f1_hat": est.value,
            "stderr": est.stderr,
            "env_spread": envelope_spread(lam, body.dim, 1, 0.0),
            "env_gap": envelope_boundary_gap(lam, body.dim, 1, gap),
            "boundary_gap": gap,
            "inside": int(body.contains(x)),
            "n_outer": est.n_outer,
            "n_query": est.n_query,
        })
        rows.append(row)
    return rows


def probe_pairs(body: ConvexBody, lam: float, n_pairs: int) -> np.ndarray:
    """Probe pair geometry for second-order kernel checks: pairs straddle a
    grid of depths across the boundary (along the first axis) and a range of
    separations around the typical cell scale (along the second axis).
    Returns shape (n_pairs, 2, dim)."""
    if n_pairs < 1:
        raise ValueError(f"need at least 1 pair, got {n_pairs}")
    u = np.zeros(body.dim)
    u[0] = 1.0
    v = np.zeros(body.dim)
    v[1] = 1.0
    boundary = body.center + (body.support(u) - float(body.center[0])) * u
    cell_scale = lam ** (-1.0 / body.dim)
    n_depth = max(1, int(round(math.sqrt(n_pairs))))
    n_sep = max(1, math.ceil(n_pairs / n_depth))
    depths = np.linspace(-2.0, 2.0, n_depth) * cell_scale
    seps = np.geomspace(0.25, 6.0, n_sep) * cell_scale
    pairs = []
    for dep in depths:
        for s in seps:
            if len(pairs) == n_pairs:
                break
            mid = boundary + dep * u
            pairs.append([mid - 0.5 * s * v, mid + 0.5 * s * v])
    return np.asarray(pairs[:n_pairs])


def pair_probe(body: ConvexBody, lam: float, pairs: np.ndarray,
               master_seed: int, n_outer: int = 400,
               n_query: int | None = None,
               epsilon: float = DEFAULT_EPSILON) -> list[dict]:
    """Estimate f_2 on each pair with the envelopes it must respect.

    env_gap_valid records whether the boundary-gap envelope applies (the
    pair's enclosing ball must be 8 times closer together than the midpoint
    is to the boundary).
    """
    pairs = np.asarray(pairs, dtype=np.float64)
    rows = []
    for x1, x2 in pairs:
        est = estimate_f2(body, lam, x1, x2, master_seed, n_outer=n_outer,
                          n_query=n_query, epsilon=epsilon)
        mid = 0.5 * (x1 + x2)
        radius = 0.5 * float(np.sqrt(np.sum((x2 - x1) ** 2)))
        gap = float(body.boundary_distance(mid))
        row = {}
        for a in range(body.dim):
            row[f"x1_{a}"] = float(x1[a])
            row[f"x2_{a}"] = float(x2[a])
        row.update({
            "separation": 2.0 * radius,
            "f2_hat": est.value,
            "stderr": est.stderr,
            "env_spread": envelope_spread(lam, body.dim, 2, radius),
            "env_gap": envelope_boundary_gap(lam, body.dim, 2, gap),
            "env_gap_valid": int(gap > 8.0 * radius),
            "boundary_gap": gap,
            "n_outer": est.n_outer,
            "n_query": est.n_query,
        })
        rows.append(row)
    return rows
