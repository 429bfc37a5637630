"""End-to-end statistical acceptance checks.

Each test prints one PASS/FAIL line (run with `pytest -s` to see them) and
asserts the same condition. The campaign fixtures are session-scoped and
shared across checks; the whole file takes roughly twenty minutes on one
core, dominated by the two variance sweeps and the chaos-norm estimate.

Every check is statistical with an explicit tolerance; the seeds below are
frozen so the suite is deterministic.
"""
import math
import subprocess
import sys

import numpy as np
import pytest

from pvlab import chaos, exact2d, stats
from pvlab.estimator import windows_for
from pvlab.geometry import ConvexBody
from pvlab.process import ROLE_POINTS, derive_stream, sample_poisson

pytestmark = pytest.mark.slow

MASTER_SEED = 20260823

D2_LAMS = (250.0, 500.0, 1000.0, 2000.0, 4000.0)
D2_REPS = 1000
D3_LAMS = (250.0, 1000.0, 4000.0)
D3_REPS = 600

UNIT_DISK = ConvexBody.ball(np.zeros(2), 1.0)
UNIT_BALL3 = ConvexBody.ball(np.zeros(3), 1.0)


def _line(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# shared campaign fixtures


@pytest.fixture(scope="session")
def d2_sweep():
    return stats.variance_sweep(UNIT_DISK, D2_LAMS, D2_REPS, MASTER_SEED,
                                stratified=True)


@pytest.fixture(scope="session")
def d3_sweep():
    return stats.variance_sweep(UNIT_BALL3, D3_LAMS, D3_REPS,
                                MASTER_SEED + 100, stratified=True)


@pytest.fixture(scope="session")
def oracle_rows():
    """Paired MC and exact evaluations of 200 shared realizations."""
    lam = 1000.0
    reps = 200
    seed = MASTER_SEED + 200
    mc = stats.run_campaign(UNIT_DISK, lam, reps, seed, "mc",
                            stratified=False)
    w_out, w_proc = windows_for(UNIT_DISK, lam)
    rows = []
    for rep in range(reps):
        rng = derive_stream(seed, rep, ROLE_POINTS).generator()
        sample = sample_poisson(lam, w_proc, rng)
        res = exact2d.pv_exact(UNIT_DISK, sample, w_out)
        rows.append((float(mc.pv[rep]), float(mc.mc_stderr[rep]),
                     res.pv_area, res.covering_gap))
    return rows


@pytest.fixture(scope="session")
def scan_rows():
    points = chaos.diameter_points(UNIT_DISK, 40)
    return chaos.kernel_scan(UNIT_DISK, 1000.0, points, MASTER_SEED + 300,
                             n_outer=400)


@pytest.fixture(scope="session")
def pair_rows():
    pairs = chaos.probe_pairs(UNIT_DISK, 1000.0, 20)
    return chaos.pair_probe(UNIT_DISK, 1000.0, pairs, MASTER_SEED + 400,
                            n_outer=400)


@pytest.fixture(scope="session")
def chaos_norm():
    return chaos.first_chaos_norm(UNIT_DISK, 1000.0, MASTER_SEED + 500,
                                  n_eval=400, n_outer=100)


@pytest.fixture(scope="session")
def small_body():
    # replication count sized so the rare-event variance estimates at the
    # smallest radii pin the decade slope to about +-0.1
    return stats.small_body_experiment((0.3, 0.1, 0.03, 0.017, 0.01,
                                        0.0055, 0.003),
                                       1000.0, 6400, MASTER_SEED + 600,
                                       dim=2, stratified=True)


def _block(sweep, lam):
    for res in sweep:
        if res.lam == lam:
            return res
    raise KeyError(lam)


# ---------------------------------------------------------------------------
# criteria


def test_unbiasedness_d2(d2_sweep):
    worst = 0.0
    for lam in (250.0, 1000.0, 4000.0):
        res = _block(d2_sweep, lam)
        se = float(res.pv.std(ddof=1)) / math.sqrt(res.n_replications)
        z = abs(float(res.pv.mean()) - math.pi) / se
        worst = max(worst, z)
    _line("unbiasedness-d2", worst <= 4.0,
          f"worst |mean - pi| = {worst:.2f} cross-replication SE (limit 4)")


def test_variance_order_d2(d2_sweep):
    lams = [r.lam for r in d2_sweep]
    variances = [float(np.var(r.pv, ddof=1)) for r in d2_sweep]
    slope, _, _ = stats.fit_scaling(lams, variances)
    normalized = [v * lam ** 1.5 for lam, v in zip(lams, variances)]
    ratio = max(normalized) / min(normalized)
    ok = -1.65 <= slope <= -1.35 and ratio <= 2.5
    _line("variance-order-d2", ok,
          f"slope {slope:.3f} (accept [-1.65, -1.35]), "
          f"bracket max/min {ratio:.3f} (limit 2.5)")


def test_variance_order_d3(d3_sweep):
    lams = [r.lam for r in d3_sweep]
    variances = [float(np.var(r.pv, ddof=1)) for r in d3_sweep]
    slope, _, _ = stats.fit_scaling(lams, variances)
    ok = -1.48 <= slope <= -1.18
    _line("variance-order-d3", ok,
          f"slope {slope:.3f} (accept [-1.48, -1.18], target -4/3)")


def test_clt_normality(d2_sweep):
    res = _block(d2_sweep, 4000.0)
    _, p = stats.ks_normal(res.pv)
    mom = stats.moments(res.pv)
    ok = p > 0.01 and abs(mom.skewness) < 0.15 and abs(mom.excess_kurtosis) < 0.3
    contrast = _block(d2_sweep, 250.0)
    cmom = stats.moments(contrast.pv)
    _line("clt-normality", ok,
          f"lam=4000: ks_p {p:.4f} (>0.01), skewness {mom.skewness:+.4f} "
          f"(|.|<0.15), excess kurtosis {mom.excess_kurtosis:+.4f} (|.|<0.3); "
          f"contrast lam=250 (report only): skewness {cmom.skewness:+.4f}, "
          f"excess kurtosis {cmom.excess_kurtosis:+.4f}")


def test_exact_oracle_agreement(oracle_rows):
    n_within = sum(1 for pv_mc, se, pv_ex, _ in oracle_rows
                   if abs(pv_mc - pv_ex) <= 4.0 * se)
    frac = n_within / len(oracle_rows)
    worst_gap = max(gap for _, _, _, gap in oracle_rows)
    ok = frac >= 0.95 and worst_gap <= 1e-9
    _line("exact-oracle-agreement", ok,
          f"{n_within}/{len(oracle_rows)} realizations within 4 mc_stderr "
          f"(need >=95%), worst covering gap {worst_gap:.2e} (limit 1e-9)")


def test_kernel_structure(scan_rows, pair_rows):
    sign_bad = env_bad = 0
    for row in scan_rows:
        slack = 4.0 * row["stderr"]
        if row["inside"] and row["f1_hat"] < -slack:
            sign_bad += 1
        if not row["inside"] and row["f1_hat"] > slack:
            sign_bad += 1
        if abs(row["f1_hat"]) - slack > min(row["env_spread"], row["env_gap"]):
            env_bad += 1
    pair_bad = 0
    for row in pair_rows:
        env = row["env_spread"]
        if row["env_gap_valid"]:
            env = min(env, row["env_gap"])
        if abs(row["f2_hat"]) - 4.0 * row["stderr"] > env:
            pair_bad += 1
    ok = sign_bad == 0 and env_bad == 0 and pair_bad == 0
    _line("kernel-structure", ok,
          f"{len(scan_rows)} diameter points: {sign_bad} sign and "
          f"{env_bad} envelope violations; {len(pair_rows)} pairs: "
          f"{pair_bad} envelope violations (all at 4 stderr)")


def test_first_chaos_sandwich(d2_sweep, chaos_norm):
    lam = 1000.0
    res = _block(d2_sweep, lam)
    var = float(np.var(res.pv, ddof=1))
    var_se = stats.jackknife_variance_se(res.pv)
    contribution = lam * chaos_norm.value
    contribution_se = lam * chaos_norm.stderr
    combined = math.sqrt(contribution_se ** 2 + var_se ** 2)
    lower = chaos.f1_norm_lower_bound(UNIT_DISK, lam)
    upper_ok = contribution <= var + 4.0 * combined
    lower_ok = contribution >= lower
    _line("first-chaos-sandwich", upper_ok and lower_ok,
          f"lam*norm {contribution:.3e} (+- {contribution_se:.1e}) vs "
          f"variance {var:.3e} (+- {var_se:.1e}); "
          f"explicit lower bound {lower:.1e}")


def test_small_body_scaling(small_body):
    fit = small_body["variance_fit_small_radii"]
    slope = fit["slope"]
    surface_slope = small_body["surface_measure_slope"]
    need = surface_slope + 0.5
    ok = slope >= need
    _line("small-body-scaling", ok,
          f"variance slope {slope:.3f} over smallest radius decade "
          f"(need >= surface slope {surface_slope:.3f} + 0.5)")


def test_property_suites_selftest():
    proc = subprocess.run([sys.executable, "-m", "pvlab.cli", "selftest"],
                          capture_output=True, text=True)
    ok = proc.returncode == 0 and "FAIL" not in proc.stdout
    summary = ", ".join(line.split(":")[0] for line in
                        proc.stdout.splitlines() if line.startswith("PASS"))
    _line("property-suites", ok,
          f"selftest exit {proc.returncode}; {summary or proc.stdout.strip()}")
