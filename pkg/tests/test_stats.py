"""Campaign mechanics, scaling fits, moment corrections, the normality
test, and the coupled window-margin check."""
import math
import os
import tempfile

import numpy as np
import pytest
from scipy.stats import kurtosis, skew

from pvlab import stats
from pvlab.geometry import ConvexBody

BALL = ConvexBody.ball([0.0, 0.0], 1.0)


def test_fit_scaling_recovers_power_law():
    lam = np.array([250.0, 500.0, 1000.0, 2000.0, 4000.0])
    vals = 3.7 * lam ** -1.5
    slope, intercept, r2 = stats.fit_scaling(lam, vals)
    assert slope == pytest.approx(-1.5, abs=1e-12)
    assert math.exp(intercept) == pytest.approx(3.7, rel=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_scaling_validates():
    with pytest.raises(ValueError):
        stats.fit_scaling([1.0], [2.0])
    with pytest.raises(ValueError):
        stats.fit_scaling([1.0, -1.0], [2.0, 3.0])


def test_fit_slope_stderr_matches_scatter():
    # noisy synthetic fits: the claimed SE should match the spread of
    # slopes over many independent draws
    rng = np.random.default_rng(8)
    lam = np.array([250.0, 500.0, 1000.0, 2000.0, 4000.0])
    slopes, claimed = [], []
    for _ in range(300):
        vals = 2.0 * lam ** -1.5 * np.exp(rng.normal(0.0, 0.05, size=len(lam)))
        s, _, _ = stats.fit_scaling(lam, vals)
        slopes.append(s)
        claimed.append(stats.fit_slope_stderr(lam, vals))
    assert np.mean(claimed) == pytest.approx(np.std(slopes, ddof=1), rel=0.2)


def test_moments_match_reference_corrections():
    rng = np.random.default_rng(9)
    x = rng.normal(size=300) ** 2
    m = stats.moments(x)
    assert m.mean == pytest.approx(x.mean(), rel=1e-13)
    assert m.variance == pytest.approx(np.var(x, ddof=1), rel=1e-13)
    assert m.skewness == pytest.approx(skew(x, bias=False), rel=1e-12)
    assert m.excess_kurtosis == pytest.approx(kurtosis(x, bias=False), rel=1e-12)
    with pytest.raises(ValueError):
        stats.moments([1.0, 2.0, 3.0])


def test_two_point_sample_variance_via_summary():
    # R=2 campaigns still report the ddof=1 variance: {-1, 1} gives 2
    res = stats.CampaignResult(BALL, 100.0, 0, "mc", 0, False, 1e-6,
                               np.array([-1.0, 1.0]), np.zeros(2), np.zeros(2),
                               np.zeros(2, dtype=np.int64), ("", ""),
                               np.zeros(2, dtype=np.uint64))
    block = stats.summarize_one(res)
    assert block["var_pv"] == pytest.approx(2.0)
    assert block["skewness"] is None
    assert block["ks_pvalue"] is None


def test_jackknife_variance_se_matches_normal_theory():
    rng = np.random.default_rng(10)
    x = rng.normal(size=2000)
    se = stats.jackknife_variance_se(x)
    theory = math.sqrt(2.0 / (len(x) - 1))
    assert se == pytest.approx(theory, rel=0.15)


def test_ks_normal_calibration():
    # with a fully specified null the asymptotic p-values are honest:
    # rejection rate at the 5 percent level stays near 5 percent
    rng = np.random.default_rng(31337)
    rejected = sum(
        stats.ks_normal(rng.normal(size=400), mean=0.0, std=1.0)[1] < 0.05
        for _ in range(200))
    assert 0.02 <= rejected / 200 <= 0.09


def test_ks_normal_rejects_uniform():
    rng = np.random.default_rng(21)
    _, p = stats.ks_normal(rng.random(4000), mean=0.5, std=math.sqrt(1 / 12))
    assert p < 1e-6


def test_ks_normal_validates():
    with pytest.raises(ValueError):
        stats.ks_normal(np.zeros(10))
    with pytest.raises(ValueError):
        stats.ks_normal(np.zeros(100))


def test_standardized():
    rng = np.random.default_rng(22)
    z = stats.standardized(rng.normal(3.0, 2.0, size=500))
    assert z.mean() == pytest.approx(0.0, abs=1e-12)
    assert z.std(ddof=1) == pytest.approx(1.0, rel=1e-12)


def test_campaign_rows_and_reproducibility():
    res = stats.run_campaign(BALL, 250.0, 12, master_seed=77, stratified=True)
    assert res.n_replications == 12
    assert res.n_degenerate == 0
    assert np.all(res.n_points > 100)
    assert np.all(res.mc_stderr > 0)
    again = stats.run_campaign(BALL, 250.0, 12, master_seed=77, stratified=True)
    assert np.array_equal(res.pv, again.pv)
    assert np.array_equal(res.symdiff, again.symdiff)
    # campaigns share their common replication prefix
    longer = stats.run_campaign(BALL, 250.0, 15, master_seed=77, stratified=True)
    assert np.array_equal(longer.pv[:12], res.pv)


def test_campaign_independent_of_thread_count():
    one = stats.run_campaign(BALL, 200.0, 10, master_seed=5, threads=1)
    two = stats.run_campaign(BALL, 200.0, 10, master_seed=5, threads=2)
    assert np.array_equal(one.pv, two.pv)
    assert np.array_equal(one.symdiff, two.symdiff)
    assert one.degenerate == two.degenerate


def test_campaign_preconditions():
    with pytest.raises(ValueError):
        stats.run_campaign(BALL, 2.0, 5, master_seed=1)
    with pytest.raises(ValueError):
        stats.run_campaign(BALL, 200.0, 0, master_seed=1)
    with pytest.raises(ValueError):
        stats.run_campaign(BALL, 200.0, 5, master_seed=1, estimator_kind="nope")
    ball3 = ConvexBody.ball([0.0, 0.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        stats.run_campaign(ball3, 200.0, 5, master_seed=1, estimator_kind="exact2d")


def test_exact_campaign_agrees_with_mc():
    mc = stats.run_campaign(BALL, 300.0, 8, master_seed=31)
    ex = stats.run_campaign(BALL, 300.0, 8, master_seed=31, estimator_kind="exact2d")
    # same point streams, so the exact value sits within the MC query noise
    assert np.all(np.abs(mc.pv - ex.pv) < 5.0 * mc.mc_stderr)
    assert np.all(ex.mc_stderr == 0.0)


def test_campaign_csv_byte_identical(tmp_path):
    res = stats.run_campaign(BALL, 200.0, 6, master_seed=13)
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    stats.write_campaign_csv(res, p1)
    stats.write_campaign_csv(res, p2)
    b1 = p1.read_bytes()
    assert b1 == p2.read_bytes()
    header = b1.decode().splitlines()[0]
    assert header.split(",") == stats.CAMPAIGN_COLUMNS
    assert len(b1.decode().splitlines()) == 7
    # floats round-trip exactly
    row = b1.decode().splitlines()[1].split(",")
    assert float(row[2]) == res.pv[0]


def test_summarize_campaigns_fit():
    results = stats.variance_sweep(BALL, [200.0, 400.0], 60, master_seed=91)
    summ = stats.summarize_campaigns(results)
    assert summ["schema"] == "pv-lab/1"
    assert len(summ["per_lambda"]) == 2
    blk = summ["per_lambda"][0]
    assert blk["replications"] == 60
    assert blk["ks_pvalue"] is not None
    assert summ["fit"]["n_points"] == 2
    # two intensities in ratio 2 should show a clearly negative slope
    assert summ["fit"]["slope"] < -0.8


def test_window_leak_check_couples_margins():
    out = stats.window_leak_check(BALL, 300.0, 40, master_seed=17)
    # the coupled difference must resolve far below the campaign noise
    assert out["diff_se"] < 0.5 * out["campaign_se"]
    assert abs(out["mean_diff"]) < 4.0 * out["diff_se"] + 1e-9
    assert out["within_one_se"] == 1


def test_small_body_experiment_shape():
    out = stats.small_body_experiment([0.3, 0.1, 0.05], 400.0, 50, master_seed=23)
    assert [r["radius"] for r in out["rows"]] == [0.3, 0.1, 0.05]
    assert out["surface_measure_slope"] == pytest.approx(1.0, abs=1e-12)
    regime = [r["in_regime"] for r in out["rows"]]
    assert regime == [1, 1, 0]
    assert all(r["var_pv"] > 0 for r in out["rows"])
    # variance falls with radius
    assert out["rows"][0]["var_pv"] > out["rows"][-1]["var_pv"]
