"""Monte Carlo estimation of the Poisson-Voronoi approximation volume.

The approximation of a body K by the Voronoi mosaic of a sample is the
union of all cells whose nucleus lies in K; its volume equals the volume
of the set of points whose nearest nucleus lies in K. We estimate that by
classifying uniform query points y in an observation window W_out: the
estimate is Vol(W_out) times the hit fraction.

Windows: the process is sampled on a larger window W_proc and queries stay
inside W_out, with margins chosen so that both truncation effects (mass of
the approximation outside W_out, and a query's true nearest point falling
outside W_proc) stay below a leak budget epsilon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ConvexBody, Window, unit_ball_volume
from .nn import NnIndex, build_index, nearest
from .process import PointSample, sample_poisson

DEFAULT_EPSILON = 1e-6

# queries per unit of expected cell count; keeps the query-sampling error
# below the across-realization spread
QUERIES_PER_CELL = 64

# floor so that tiny bodies still get a resolved hit fraction
MIN_QUERIES = 4096


def choose_margins(body: ConvexBody, lam: float, epsilon: float = DEFAULT_EPSILON):
    """Margins (m_out, m_proc) for the two windows around the body.

    Sized from the exponential tail exp(-lam kappa_d m^d) of the distance
    to the nearest process point, with the prefactor C_leak accounting for
    the number of independent chances to leak; enlarging W_out must not
    move the estimate (see the window-leak check in stats).
    """
    if not lam > 0.0:
        raise ValueError(f"intensity must be > 0, got {lam}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    d = body.dim
    c_leak = max(1.0, lam * body.dilated_volume(1.0))
    t = (math.log(c_leak / epsilon) / (lam * unit_ball_volume(d))) ** (1.0 / d)
    return 2.0 * t, 3.0 * t


def windows_for(body: ConvexBody, lam: float, epsilon: float = DEFAULT_EPSILON):
    """(W_out, W_proc) from `choose_margins`."""
    m_out, m_proc = choose_margins(body, lam, epsilon)
    return body.dilated_window(m_out), body.dilated_window(m_proc)


def default_n_query(body: ConvexBody, lam: float) -> int:
    return max(MIN_QUERIES, math.ceil(QUERIES_PER_CELL * lam * body.volume()))


def sample_realization(body: ConvexBody, lam: float, rng: np.random.Generator,
                       epsilon: float = DEFAULT_EPSILON) -> PointSample:
    """One process realization on W_proc."""
    _, w_proc = windows_for(body, lam, epsilon)
    return sample_poisson(lam, w_proc, rng)


@dataclass(frozen=True, eq=False)
class PvEstimate:
    """One replication's estimate with its query-sampling error.

    mc_stderr is the internal binomial error of the query sampling, not the
    across-realization spread. Degenerate realizations (no point of the
    sample in K, or none outside K) are flagged, never dropped.
    """

    value: float
    mc_stderr: float
    n_query: int
    n_points: int
    window_out: Window
    window_proc: Window
    epsilon: float
    degenerate: bool = False
    degenerate_reason: str | None = None


def query_points(w_out: Window, n_query: int, rng: np.random.Generator,
                 stratified: bool = False) -> np.ndarray:
    """Uniform queries in W_out; optionally one per cell of a jittered grid.

    The jittered grid is still exactly unbiased (each point is uniform in
    its cell) but removes most of the binomial noise; the grid shape is the
    closest per-axis split to the requested count, so the actual number of
    rows may differ slightly from n_query.
    """
    d = w_out.dim
    if not stratified:
        return rng.uniform(w_out.lo, w_out.hi, size=(n_query, d))
    side = w_out.side_lengths
    base = (n_query / w_out.volume()) ** (1.0 / d)
    m = np.maximum(1, np.rint(base * side)).astype(np.int64)
    cell = side / m
    grids = np.meshgrid(*[np.arange(mk) for mk in m], indexing="ij")
    corners = np.stack([g.ravel() for g in grids], axis=1)
    jitter = rng.random((len(corners), d))
    return w_out.lo + (corners + jitter) * cell


def _classify(body: ConvexBody, index: NnIndex, queries: np.ndarray):
    idx, _ = nearest(index, queries)
    in_k_points = body.contains(index.points)
    return in_k_points[idx], in_k_points


def estimate_pv(body: ConvexBody, lam: float, sample: PointSample,
                query_rng: np.random.Generator, n_query: int | None = None,
                stratified: bool = False, epsilon: float = DEFAULT_EPSILON,
                index: NnIndex | None = None) -> PvEstimate:
    """Estimate the approximation volume from one realization."""
    est, _ = estimate_both(body, lam, sample, query_rng, n_query=n_query,
                           stratified=stratified, epsilon=epsilon, index=index)
    return est


def estimate_symdiff(body: ConvexBody, lam: float, sample: PointSample,
                     query_rng: np.random.Generator, n_query: int | None = None,
                     stratified: bool = False, epsilon: float = DEFAULT_EPSILON,
                     index: NnIndex | None = None) -> PvEstimate:
    """Estimate the volume of the symmetric difference between the
    approximation and the body itself."""
    _, est = estimate_both(body, lam, sample, query_rng, n_query=n_query,
                           stratified=stratified, epsilon=epsilon, index=index)
    return est


def estimate_both(body: ConvexBody, lam: float, sample: PointSample,
                  query_rng: np.random.Generator, n_query: int | None = None,
                  stratified: bool = False, epsilon: float = DEFAULT_EPSILON,
                  index: NnIndex | None = None):
    """(volume estimate, symmetric-difference estimate) from shared queries.

    Both indicators are evaluated on the same query batch and the same
    nearest-neighbor pass, which is how campaigns record the pv and symdiff
    columns of one replication.
    """
    if n_query is None:
        n_query = default_n_query(body, lam)
    w_out = body.dilated_window(choose_margins(body, lam, epsilon)[0])
    vol_out = w_out.volume()
    q = query_points(w_out, n_query, query_rng, stratified=stratified)
    nq = len(q)

    def build(value, p_hat, degenerate=None):
        se = vol_out * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / nq)
        return PvEstimate(value, se, nq, sample.n, w_out, sample.window, epsilon,
                          degenerate is not None, degenerate)

    if sample.n == 0:
        zero = build(0.0, 0.0, "empty-sample")
        return zero, _empty_symdiff(body, zero)

    if index is None:
        index = build_index(sample)
    hits, in_k_points = _classify(body, index, q)
    n_in = int(in_k_points.sum())
    degenerate = None
    if n_in == 0:
        degenerate = "no-point-in-body"
    elif n_in == sample.n:
        degenerate = "no-point-outside-body"

    p_hit = float(hits.mean())
    pv = build(vol_out * p_hit, p_hit, degenerate)
    sym_flags = hits ^ body.contains(q)
    p_sym = float(sym_flags.mean())
    sym = build(vol_out * p_sym, p_sym, degenerate)
    return pv, sym


def _empty_symdiff(body: ConvexBody, like: PvEstimate) -> PvEstimate:
    # with no points at all the approximation is empty, so the symmetric
    # difference is exactly the body
    return PvEstimate(body.volume(), 0.0, like.n_query, 0, like.window_out,
                      like.window_proc, like.epsilon, True, "empty-sample")
