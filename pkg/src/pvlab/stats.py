"""Replication campaigns and the statistics used to judge them.

A campaign runs R independent replications of one (body, intensity)
configuration, each replication drawing its point process and query points
from counter-derived streams so any row can be reproduced in isolation.
Campaign rows serialize to CSV with round-trip float formatting, making
outputs byte-identical across runs and thread counts.

The analysis helpers are deliberately small and explicit: log-log scaling
fits, bias-corrected moment summaries, a Kolmogorov-Smirnov normality test,
and a jackknife standard error for the sample variance, which is the
quantity the variance scaling conclusions rest on.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from . import estimator, exact2d, nn
from .estimator import DEFAULT_EPSILON
from .geometry import ConvexBody
from .process import (ROLE_POINTS, ROLE_QUERY, derive_stream, sample_poisson)

# campaigns need the body populated often enough for variance estimates to
# mean anything
MIN_EXPECTED_HITS = 20.0

CAMPAIGN_COLUMNS = ["replication", "lambda", "pv", "symdiff", "mc_stderr",
                    "n_points", "degenerate_flag", "master_seed", "stream"]

ESTIMATOR_KINDS = ("mc", "exact2d")


@dataclass(frozen=True, eq=False)
class CampaignResult:
    """Per-replication outputs of one campaign, in replication order."""

    body: ConvexBody
    lam: float
    master_seed: int
    estimator_kind: str
    n_query: int
    stratified: bool
    epsilon: float
    pv: np.ndarray
    symdiff: np.ndarray
    mc_stderr: np.ndarray
    n_points: np.ndarray
    degenerate: tuple
    streams: np.ndarray

    @property
    def n_replications(self) -> int:
        return len(self.pv)

    @property
    def n_degenerate(self) -> int:
        return sum(1 for f in self.degenerate if f)


def _one_rep(body, lam, master_seed, rep, estimator_kind, n_query, stratified,
             epsilon, w_out):
    rng_p = derive_stream(master_seed, rep, ROLE_POINTS).generator()
    sample = estimator.sample_realization(body, lam, rng_p, epsilon)
    if estimator_kind == "exact2d":
        res = exact2d.pv_exact(body, sample, w_out)
        flag = "empty-sample" if sample.n == 0 else ""
        return res.pv_area, res.symdiff_area, 0.0, sample.n, flag
    rng_q = derive_stream(master_seed, rep, ROLE_QUERY).generator()
    pv, sym = estimator.estimate_both(body, lam, sample, rng_q,
                                      n_query=n_query, stratified=stratified,
                                      epsilon=epsilon)
    return (pv.value, sym.value, pv.mc_stderr, sample.n,
            pv.degenerate_reason or "")


def run_campaign(body: ConvexBody, lam: float, replications: int,
                 master_seed: int, estimator_kind: str = "mc",
                 n_query: int | None = None, stratified: bool = False,
                 epsilon: float = DEFAULT_EPSILON,
                 threads: int = 1) -> CampaignResult:
    """Run R independent replications; outputs do not depend on `threads`.

    Replication k draws points from stream (k, points role) and queries from
    (k, query role), so rows are reproducible individually and campaigns
    with different R share their common prefix.
    """
    if estimator_kind not in ESTIMATOR_KINDS:
        raise ValueError(f"estimator_kind must be one of {ESTIMATOR_KINDS}, "
                         f"got {estimator_kind!r}")
    if estimator_kind == "exact2d" and body.dim != 2:
        raise ValueError("the exact estimator supports 2-d bodies only")
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    expected = lam * body.volume()
    if expected < MIN_EXPECTED_HITS:
        raise ValueError(
            f"lambda * Vol(body) = {expected:.3g} is below {MIN_EXPECTED_HITS}; "
            "variance estimates would be dominated by empty realizations")
    if n_query is None and estimator_kind == "mc":
        n_query = estimator.default_n_query(body, lam)
    w_out, _ = estimator.windows_for(body, lam, epsilon)

    pv = np.empty(replications)
    sym = np.empty(replications)
    se = np.empty(replications)
    npts = np.empty(replications, dtype=np.int64)
    flags: list[str] = [""] * replications

    def work(rep):
        pv[rep], sym[rep], se[rep], npts[rep], flags[rep] = _one_rep(
            body, lam, master_seed, rep, estimator_kind, n_query, stratified,
            epsilon, w_out)

    if threads > 1:
        # compile the hot kernels once before fanning out
        work(0)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(1, replications)))
    else:
        for rep in range(replications):
            work(rep)

    streams = np.array([derive_stream(master_seed, rep, ROLE_POINTS).stream
                        for rep in range(replications)], dtype=np.uint64)
    return CampaignResult(body, float(lam), master_seed, estimator_kind,
                          int(n_query or 0), stratified, epsilon, pv, sym,
                          se, npts, tuple(flags), streams)


def write_campaign_csv(result: CampaignResult, path) -> None:
    """One row per replication; floats use round-trip (repr) formatting so
    rewriting the same campaign is byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CAMPAIGN_COLUMNS)
        for i in range(result.n_replications):
            w.writerow([i, repr(result.lam), repr(float(result.pv[i])),
                        repr(float(result.symdiff[i])),
                        repr(float(result.mc_stderr[i])),
                        int(result.n_points[i]), result.degenerate[i],
                        result.master_seed, int(result.streams[i])])


# ---------------------------------------------------------------------------
# analysis helpers


def fit_scaling(x, y):
    """Least-squares fit of log y against log x.

    Returns (slope, intercept, r_squared); both inputs must be positive.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        lx = np.log(np.asarray(x, dtype=np.float64))
        ly = np.log(np.asarray(y, dtype=np.float64))
    if lx.shape != ly.shape or lx.ndim != 1 or len(lx) < 2:
        raise ValueError("fit_scaling needs two equal-length vectors, n >= 2")
    if not (np.all(np.isfinite(lx)) and np.all(np.isfinite(ly))):
        raise ValueError("fit_scaling needs positive finite inputs")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def fit_slope_stderr(x, y) -> float:
    """Standard error of the fit_scaling slope (residual-based, n >= 3)."""
    lx = np.log(np.asarray(x, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    n = len(lx)
    if n < 3:
        return math.nan
    slope, intercept, _ = fit_scaling(x, y)
    resid = ly - (intercept + slope * lx)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    return math.sqrt(float(np.sum(resid ** 2)) / (n - 2) / sxx)


def ks_normal(values, mean: float | None = None, std: float | None = None):
    """Kolmogorov-Smirnov test against a normal distribution.

    With mean/std omitted they are estimated from the sample; the p-value
    then leans conservative (the classic distribution assumes a fully
    specified null), which only makes normality harder to reject. Returns
    (statistic, pvalue); needs at least 50 values.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = len(x)
    if n < 50:
        raise ValueError(f"ks_normal needs >= 50 values, got {n}")
    mu = x.mean() if mean is None else float(mean)
    sigma = x.std(ddof=1) if std is None else float(std)
    if not sigma > 0:
        raise ValueError("ks_normal needs positive dispersion")
    cdf = 0.5 * (1.0 + erf((x - mu) / (sigma * math.sqrt(2.0))))
    steps = np.arange(1, n + 1) / n
    d = float(max((steps - cdf).max(), (cdf - steps + 1.0 / n).max()))
    t = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    # alternating tail series of the Kolmogorov distribution
    p = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * t * t)
        p += term
        if abs(term) < 1e-10:
            break
    return d, float(min(max(p, 0.0), 1.0))


@dataclass(frozen=True)
class MomentSummary:
    n: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float


def moments(values) -> MomentSummary:
    """Sample moments with the standard bias corrections (needs n >= 4)."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n < 4:
        raise ValueError(f"moments needs >= 4 values, got {n}")
    mean = float(x.mean())
    c = x - mean
    m2 = float(np.mean(c ** 2))
    var = float(np.var(x, ddof=1))
    if m2 == 0.0:
        return MomentSummary(n, mean, 0.0, math.nan, math.nan)
    g1 = float(np.mean(c ** 3)) / m2 ** 1.5
    g2 = float(np.mean(c ** 4)) / m2 ** 2 - 3.0
    skew = g1 * math.sqrt(n * (n - 1.0)) / (n - 2.0)
    kurt = ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0))
    return MomentSummary(n, mean, var, skew, kurt)


def jackknife_variance_se(values) -> float:
    """Standard error of the sample variance by leave-one-out jackknife."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n < 3:
        raise ValueError(f"jackknife needs >= 3 values, got {n}")
    s1 = float(x.sum())
    s2 = float(np.sum(x * x))
    loo = (s2 - x * x - (s1 - x) ** 2 / (n - 1)) / (n - 2)
    return math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))


def standardized(values) -> np.ndarray:
    """Self-standardized values (sample mean and ddof=1 scale)."""
    x = np.asarray(values, dtype=np.float64)
    s = x.std(ddof=1)
    if not s > 0:
        raise ValueError("cannot standardize a constant sample")
    return (x - x.mean()) / s


# ---------------------------------------------------------------------------
# campaign summaries


def _float_or_none(v) -> float | None:
    v = float(v)
    return None if math.isnan(v) else v


def summarize_one(result: CampaignResult) -> dict:
    """Summary block for one campaign (moment fields null when R is too
    small, KS fields null below 50 replications)."""
    n = result.n_replications
    block = {
        "lambda": result.lam,
        "replications": n,
        "estimator": result.estimator_kind,
        "n_degenerate": result.n_degenerate,
        "mean_pv": float(result.pv.mean()),
        "mean_symdiff": float(result.symdiff.mean()),
        "mean_mc_stderr": float(result.mc_stderr.mean()),
        "var_pv": None, "var_pv_se": None,
        "skewness": None, "excess_kurtosis": None,
        "ks_stat": None, "ks_pvalue": None,
    }
    if n >= 4:
        mom = moments(result.pv)
        block["var_pv"] = _float_or_none(mom.variance)
        block["skewness"] = _float_or_none(mom.skewness)
        block["excess_kurtosis"] = _float_or_none(mom.excess_kurtosis)
        block["var_pv_se"] = _float_or_none(jackknife_variance_se(result.pv))
    elif n >= 2:
        block["var_pv"] = float(np.var(result.pv, ddof=1))
    if n >= 50 and float(result.pv.std(ddof=1)) > 0:
        d, p = ks_normal(result.pv)
        block["ks_stat"] = d
        block["ks_pvalue"] = p
    return block


def summarize_campaigns(results: list) -> dict:
    """Multi-campaign summary with the variance scaling fit across
    intensities (fit fields null unless two campaigns have variances)."""
    per = [summarize_one(r) for r in results]
    out = {"schema": "pv-lab/1", "per_lambda": per,
           "fit": {"slope": None, "intercept": None, "r2": None,
                   "slope_se": None, "n_points": 0}}
    lams = [b["lambda"] for b in per if b["var_pv"]]
    variances = [b["var_pv"] for b in per if b["var_pv"]]
    if len(lams) >= 2 and len(set(lams)) == len(lams):
        slope, intercept, r2 = fit_scaling(lams, variances)
        out["fit"] = {"slope": slope, "intercept": intercept, "r2": r2,
                      "slope_se": _float_or_none(fit_slope_stderr(lams, variances)),
                      "n_points": len(lams)}
    return out


# ---------------------------------------------------------------------------
# designed experiments


def variance_sweep(body: ConvexBody, lams, replications: int,
                   master_seed: int, estimator_kind: str = "mc",
                   stratified: bool = True, epsilon: float = DEFAULT_EPSILON,
                   threads: int = 1) -> list:
    """One campaign per intensity; campaign k gets replication indices
    offset so no two campaigns share streams."""
    results = []
    for k, lam in enumerate(lams):
        results.append(run_campaign(body, float(lam), replications,
                                    master_seed + k, estimator_kind,
                                    stratified=stratified, epsilon=epsilon,
                                    threads=threads))
    return results


def small_body_experiment(radii, lam: float, replications: int,
                          master_seed: int, dim: int = 2,
                          stratified: bool = True,
                          epsilon: float = DEFAULT_EPSILON,
                          threads: int = 1) -> dict:
    """Shrink a ball at fixed intensity and track how the variance falls.

    Rows record whether the shrunken body still satisfies the sampling
    regime lam >= (2 / inradius)^dim that the variance bracket assumes;
    the scaling fit is taken over the smallest decade of radii, where the
    surface-driven decay shows cleanly.
    """
    rows = []
    for k, r in enumerate(sorted(radii, reverse=True)):
        body = ConvexBody.ball(np.zeros(dim), float(r))
        expected = lam * body.volume()
        # tiny bodies fall below the campaign precondition by design; run
        # the replications directly so the decay can be followed down
        res = _raw_campaign(body, lam, replications, master_seed + k,
                            stratified, epsilon, threads)
        mom_var = float(np.var(res, ddof=1))
        rows.append({
            "radius": float(r),
            "surface_measure": float(body.intrinsic_volumes()[dim - 1]),
            "expected_hits": expected,
            "mean_pv": float(res.mean()),
            "var_pv": mom_var,
            "var_pv_se": _float_or_none(jackknife_variance_se(res)),
            "in_regime": int(lam >= (2.0 / body.inradius()) ** dim),
        })
    small = [row for row in rows
             if row["radius"] <= 10.0 * min(r["radius"] for r in rows)]
    fit = {"slope": None, "intercept": None, "r2": None, "n_points": len(small)}
    if len(small) >= 2:
        slope, intercept, r2 = fit_scaling([r["radius"] for r in small],
                                           [r["var_pv"] for r in small])
        fit = {"slope": slope, "intercept": intercept, "r2": r2,
               "n_points": len(small)}
    surf_slope, _, _ = fit_scaling([r["radius"] for r in rows],
                                   [r["surface_measure"] for r in rows])
    return {"schema": "pv-lab/1", "lambda": lam, "replications": replications,
            "rows": rows, "variance_fit_small_radii": fit,
            "surface_measure_slope": surf_slope}


def _raw_campaign(body, lam, replications, master_seed, stratified, epsilon,
                  threads) -> np.ndarray:
    """Replicated pv estimates without the minimum-occupancy precondition."""
    n_query = estimator.default_n_query(body, lam)
    out = np.empty(replications)

    def work(rep):
        rng_p = derive_stream(master_seed, rep, ROLE_POINTS).generator()
        sample = estimator.sample_realization(body, lam, rng_p, epsilon)
        rng_q = derive_stream(master_seed, rep, ROLE_QUERY).generator()
        pv, _ = estimator.estimate_both(body, lam, sample, rng_q,
                                        n_query=n_query, stratified=stratified,
                                        epsilon=epsilon)
        out[rep] = pv.value

    if threads > 1:
        work(0)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(1, replications)))
    else:
        for rep in range(replications):
            work(rep)
    return out


def window_leak_check(body: ConvexBody, lam: float, replications: int,
                      master_seed: int, epsilon: float = DEFAULT_EPSILON,
                      tighter: float = 100.0, n_query: int | None = None) -> dict:
    """Effect of enlarging both safety margins on the estimate.

    Couples the two margin choices through common random numbers: the
    enlarged-window realization is drawn once and the base realization is
    its restriction (restricting a Poisson process to a subwindow yields
    exactly the base-window process), and base queries are the enlarged
    queries that land inside the base query window. The returned mean_diff
    estimates the bias from the default margins and should be negligible
    against the campaign standard error.
    """
    eps_tight = epsilon / tighter
    w_out_b, w_proc_b = estimator.windows_for(body, lam, epsilon)
    w_out_t, w_proc_t = estimator.windows_for(body, lam, eps_tight)
    if n_query is None:
        n_query = estimator.default_n_query(body, lam)
    diffs = np.empty(replications)
    base_vals = np.empty(replications)
    for rep in range(replications):
        rng_p = derive_stream(master_seed, rep, ROLE_POINTS).generator()
        spl_t = sample_poisson(lam, w_proc_t, rng_p)
        inside = w_proc_b.contains(spl_t.points)
        pts_b = spl_t.points[inside]
        rng_q = derive_stream(master_seed, rep, ROLE_QUERY).generator()
        q_t = w_out_t.lo + rng_q.random((n_query, body.dim)) * (w_out_t.hi - w_out_t.lo)
        q_in_b = w_out_b.contains(q_t)

        flags_t = body.contains(spl_t.points)
        idx_t, _ = nn.nearest(nn.build_index(spl_t.points, w_proc_t), q_t)
        cover_t = flags_t[idx_t]
        val_t = w_out_t.volume() * float(cover_t.mean())

        if len(pts_b) == 0 or not q_in_b.any():
            val_b = 0.0
        else:
            idx_b, _ = nn.nearest(nn.build_index(pts_b, w_proc_b), q_t[q_in_b])
            val_b = w_out_b.volume() * float(body.contains(pts_b)[idx_b].mean())
        diffs[rep] = val_t - val_b
        base_vals[rep] = val_b
    campaign_se = float(base_vals.std(ddof=1) / math.sqrt(replications))
    return {
        "replications": replications,
        "epsilon_base": epsilon,
        "epsilon_tight": eps_tight,
        "mean_diff": float(diffs.mean()),
        "diff_se": float(diffs.std(ddof=1) / math.sqrt(replications)),
        "campaign_se": campaign_se,
        "within_one_se": int(abs(float(diffs.mean())) < campaign_se),
    }
