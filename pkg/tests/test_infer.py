"""Variances, confidence intervals, and studentized statistics.

The Monte Carlo block at the bottom verifies the claimed variances against
the empirical spread of the de-biased estimator over repeated draws.
"""

import numpy as np
import pytest

from mcuq.debias import DebiasedEstimate, debias_estimate
from mcuq.model import generate_ground_truth
from mcuq.observe import observe, sample_mask
from mcuq.solvers import default_lambda, solve_nonconvex
from mcuq.infer import (
    LOW_LEVERAGE_FLAG,
    ConfidenceInterval,
    VarianceEstimate,
    empirical_entry_variance,
    entry_ci,
    entry_stat,
    entry_variances,
    factor_inner_stat,
    factor_row_whitened_residual,
    factor_variances,
    normal_quantile,
    true_entry_variance,
)


def _truth_estimate(gt):
    """A degenerate 'estimate' equal to the ground truth itself."""
    return DebiasedEstimate(
        Md=gt.matrix(), Xd=gt.Xstar, Yd=gt.Ystar, source="nonconvex", r=gt.r
    )


# ---------------------------------------------------------------------------
# quantiles and CI mechanics


def test_normal_quantile_reference_values():
    assert normal_quantile(0.975) == pytest.approx(1.959963985, abs=1e-8)
    assert normal_quantile(0.5) == pytest.approx(0.0, abs=1e-12)
    assert normal_quantile(0.84134474) == pytest.approx(1.0, abs=1e-6)


def test_entry_ci_width_and_containment():
    ci = entry_ci(2.0, 0.25, 0.05)
    assert isinstance(ci, ConfidenceInterval)
    assert ci.half_width == pytest.approx(1.959963985 * 0.5, rel=1e-9)
    assert ci.level == pytest.approx(0.95)
    assert ci.contains(2.0) and ci.contains(2.9)
    assert not ci.contains(3.1)


def test_entry_ci_contains_iff_statistic_below_quantile():
    # |S_ij| <= z exactly when the CI covers the truth; check both sides
    # of the boundary by scaling the deviation
    v = 0.04
    z = normal_quantile(0.975)
    center = 1.0
    for scale in (0.5, 0.99, 1.01, 2.0):
        truth = center - scale * z * np.sqrt(v)
        s = (center - truth) / np.sqrt(v)
        ci = entry_ci(center, v, 0.05)
        assert ci.contains(truth) == (abs(s) <= z)


def test_entry_ci_alpha_monotonicity():
    widths = [entry_ci(0.0, 1.0, a).half_width for a in (0.01, 0.05, 0.2)]
    assert widths[0] > widths[1] > widths[2]


def test_entry_ci_validates_inputs():
    with pytest.raises(ValueError):
        entry_ci(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        entry_ci(0.0, -1.0, 0.05)


def test_entry_ci_propagates_flag():
    v = VarianceEstimate(value=1e-30, kind="empirical", flag=LOW_LEVERAGE_FLAG)
    ci = entry_ci(0.0, v, 0.05)
    assert ci.flag == LOW_LEVERAGE_FLAG


# ---------------------------------------------------------------------------
# variance formulas


def test_true_variance_matches_manual_formula():
    gt = generate_ground_truth(30, 3, seed=0)
    sigma, p = 0.2, 0.4
    for (i, j) in ((0, 0), (3, 17), (29, 1)):
        manual = (sigma**2 / p) * (
            gt.Ustar[i] @ gt.Ustar[i] + gt.Vstar[j] @ gt.Vstar[j]
        )
        v = true_entry_variance(gt, sigma, p, i, j)
        assert v.kind == "true"
        assert v.value == pytest.approx(manual, rel=1e-12)


def test_empirical_variance_plug_in_truth_is_exact():
    # evaluated at the truth factors the empirical formula must reproduce
    # the oracle variance to machine precision
    gt = generate_ground_truth(25, 2, seed=1)
    est = _truth_estimate(gt)
    sigma, p = 0.1, 0.5
    for (i, j) in ((0, 1), (5, 5), (24, 0)):
        emp = empirical_entry_variance(est, sigma, p, i, j)
        tru = true_entry_variance(gt, sigma, p, i, j)
        assert emp.value == pytest.approx(tru.value, rel=1e-12)
        assert emp.kind == "empirical"


def test_variances_rotation_invariant():
    # leverages depend only on the column span, not the chosen basis
    gt = generate_ground_truth(20, 3, seed=2)
    est = _truth_estimate(gt)
    rng = np.random.default_rng(3)
    Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    rot = DebiasedEstimate(
        Md=est.Md, Xd=est.Xd @ Q, Yd=est.Yd @ Q, source="nonconvex", r=3
    )
    rows = np.arange(20)
    cols = np.roll(rows, 7)
    a = entry_variances(est, 0.3, 0.6, rows, cols)
    b = entry_variances(rot, 0.3, 0.6, rows, cols)
    assert np.allclose(a, b, atol=1e-12 * a.max())
    fa = factor_variances(est, 0.3, 0.6, rows, cols)
    fb = factor_variances(rot, 0.3, 0.6, rows, cols)
    assert np.allclose(fa, fb, atol=1e-12 * fa.max())


def test_variance_scaling_in_sigma_and_p():
    gt = generate_ground_truth(20, 2, seed=4)
    est = _truth_estimate(gt)
    base = empirical_entry_variance(est, 0.1, 0.5, 2, 3).value
    assert empirical_entry_variance(est, 0.2, 0.5, 2, 3).value == pytest.approx(
        4 * base, rel=1e-12)
    assert empirical_entry_variance(est, 0.1, 0.25, 2, 3).value == pytest.approx(
        2 * base, rel=1e-12)


def test_low_leverage_flag_triggers_on_degenerate_rows():
    gt = generate_ground_truth(20, 2, seed=5)
    Xd = gt.Xstar.copy()
    Yd = gt.Ystar.copy()
    # crush one row on each side so its leverage nearly vanishes
    Xd[7] *= 1e-9
    Yd[11] *= 1e-9
    est = DebiasedEstimate(Md=Xd @ Yd.T, Xd=Xd, Yd=Yd, source="nonconvex", r=2)
    flagged = empirical_entry_variance(est, 0.1, 0.5, 7, 11)
    assert flagged.flag == LOW_LEVERAGE_FLAG
    normal = empirical_entry_variance(est, 0.1, 0.5, 0, 1)
    assert normal.flag is None


def test_variance_estimate_validation():
    with pytest.raises(ValueError):
        VarianceEstimate(value=-1.0, kind="true")
    with pytest.raises(ValueError):
        VarianceEstimate(value=np.nan, kind="true")
    with pytest.raises(ValueError):
        VarianceEstimate(value=1.0, kind="bogus")


# ---------------------------------------------------------------------------
# studentized statistics


def test_entry_stat_zero_at_truth():
    gt = generate_ground_truth(20, 2, seed=6)
    est = _truth_estimate(gt)
    assert entry_stat(est, gt, 0.1, 0.5, 3, 4) == pytest.approx(0.0, abs=1e-12)


def test_factor_stat_rejects_diagonal():
    gt = generate_ground_truth(20, 2, seed=7)
    est = _truth_estimate(gt)
    with pytest.raises(ValueError):
        factor_inner_stat(est, gt, 0.1, 0.5, 3, 3)


def test_factor_stat_zero_at_truth():
    gt = generate_ground_truth(20, 2, seed=8)
    est = _truth_estimate(gt)
    t, rho = factor_inner_stat(est, gt, 0.1, 0.5, 0, 5)
    assert t == pytest.approx(0.0, abs=1e-12)
    assert rho.kind == "factor" and rho.value > 0


def test_whitened_residual_zero_at_truth():
    gt = generate_ground_truth(20, 2, seed=9)
    est = _truth_estimate(gt)
    res = factor_row_whitened_residual(est, gt, 0.1, 0.5, 4)
    assert res.shape == (2,)
    assert np.linalg.norm(res) <= 1e-10


def test_index_bounds_raise():
    gt = generate_ground_truth(10, 2, seed=10)
    est = _truth_estimate(gt)
    with pytest.raises(ValueError):
        empirical_entry_variance(est, 0.1, 0.5, 10, 0)
    with pytest.raises(ValueError):
        true_entry_variance(gt, 0.1, 0.5, 0, -1)


# ---------------------------------------------------------------------------
# Monte Carlo validation of the variance formulas


def test_entry_and_factor_statistics_calibrated():
    # the studentized statistics must be near standard normal: their sample
    # std over repeated draws should be within 15% of one, and coverage of
    # the 95% interval within 5 points of nominal
    n, r, p, sigma = 250, 2, 0.3, 1e-3
    trials = 400
    gt = generate_ground_truth(n, r, seed=77)
    lam = default_lambda(sigma, n, p)
    s_vals = np.empty(trials)
    t_vals = np.empty(trials)
    hits = 0
    for k in range(trials):
        mask = sample_mask(n, n, p, seed=1000 + k)
        obs = observe(gt, mask, sigma, seed=1000 + k)
        est = solve_nonconvex(obs, r, lam)
        de = debias_estimate(est, obs, r, p)
        s_vals[k] = entry_stat(de, gt, sigma, p, 0, 1)
        t_vals[k], _ = factor_inner_stat(de, gt, sigma, p, 0, 1)
        ci = entry_ci(de.Md[0, 1], empirical_entry_variance(de, sigma, p, 0, 1), 0.05)
        hits += ci.contains(gt.matrix()[0, 1])
    assert abs(np.std(s_vals) - 1.0) <= 0.15
    assert abs(np.mean(s_vals)) <= 4 / np.sqrt(trials)
    assert abs(np.std(t_vals) - 1.0) <= 0.15
    assert abs(hits / trials - 0.95) <= 0.05
