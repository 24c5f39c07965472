"""Information-theoretic lower bounds checked by simulation and identities."""

import numpy as np
import pytest

from mcuq.model import generate_ground_truth
from mcuq.observe import observe, sample_mask
from mcuq.oracle import (
    CrlbRow,
    crlb_entry,
    crlb_row,
    ideal_row_estimator,
    oracle_l2_lower,
)
from mcuq.infer import true_entry_variance


def _problem(n=80, r=2, p=0.5, sigma=0.1, seed=0):
    gt = generate_ground_truth(n, r, seed=seed)
    mask = sample_mask(n, n, p, seed=seed)
    obs = observe(gt, mask, sigma, seed=seed)
    return gt, mask, obs


def _row_objective(obs, Ystar, i, a):
    sel = obs.rows == i
    cols = obs.cols[sel]
    vals = obs.values[sel]
    return float(np.sum((Ystar[cols] @ a - vals) ** 2))


# ---------------------------------------------------------------------------
# the ideal estimator with known column factors


def test_ideal_row_estimator_beats_grid_refinement():
    # rank-1 case: scan the coefficient line at three refinement levels and
    # confirm no grid point does better than the closed form
    gt, mask, obs = _problem(n=40, r=1, seed=1)
    i = 5
    a_hat = ideal_row_estimator(obs, gt.Ystar, i)
    best = _row_objective(obs, gt.Ystar, i, a_hat)
    center, width = float(a_hat[0]), 1.0
    for _ in range(3):
        grid = np.linspace(center - width, center + width, 201)
        vals = [_row_objective(obs, gt.Ystar, i, np.array([g])) for g in grid]
        k = int(np.argmin(vals))
        assert best <= vals[k] + 1e-12
        center, width = grid[k], width / 50


def test_ideal_row_estimator_beats_random_perturbations():
    gt, mask, obs = _problem(n=50, r=2, seed=2)
    i = 11
    a_hat = ideal_row_estimator(obs, gt.Ystar, i)
    best = _row_objective(obs, gt.Ystar, i, a_hat)
    rng = np.random.default_rng(3)
    for _ in range(200):
        trial = a_hat + 0.01 * rng.standard_normal(2)
        assert best <= _row_objective(obs, gt.Ystar, i, trial) + 1e-12


def test_ideal_row_estimator_unbiased():
    gt, mask, _ = _problem(n=60, r=2, p=0.5, sigma=0.2, seed=4)
    i = 0
    draws = 500
    ests = np.empty((draws, 2))
    for k in range(draws):
        obs = observe(gt, mask, 0.2, seed=1000 + k)
        ests[k] = ideal_row_estimator(obs, gt.Ystar, i)
    C = crlb_row(obs, gt.Ystar, 0.2, i).matrix
    se = np.sqrt(np.diag(C) / draws)
    assert np.all(np.abs(ests.mean(axis=0) - gt.Xstar[i]) <= 4 * se)


def test_ideal_estimator_attains_crlb():
    # for Gaussian noise the least-squares row estimator is efficient, so
    # its Monte Carlo covariance must match the bound up to sampling error
    gt, mask, _ = _problem(n=60, r=2, p=0.5, sigma=0.3, seed=5)
    i = 7
    draws = 2000
    ests = np.empty((draws, 2))
    for k in range(draws):
        obs = observe(gt, mask, 0.3, seed=5000 + k)
        ests[k] = ideal_row_estimator(obs, gt.Ystar, i)
    emp = np.cov(ests.T)
    bound = crlb_row(obs, gt.Ystar, 0.3, i).matrix
    assert np.linalg.norm(emp - bound) <= 0.15 * np.linalg.norm(bound)


def test_noiseless_ideal_estimator_recovers_row():
    gt, mask, obs = _problem(n=40, r=2, sigma=0.0, seed=6)
    a = ideal_row_estimator(obs, gt.Ystar, 3)
    assert np.allclose(a, gt.Xstar[3], atol=1e-10)


# ---------------------------------------------------------------------------
# row bound structure


def test_crlb_row_full_sampling_closed_form():
    # with every entry observed the design Gram is exactly Y*^T Y* = Sigma*
    gt, mask, obs = _problem(n=30, r=2, p=1.0, sigma=0.4, seed=7)
    out = crlb_row(obs, gt.Ystar, 0.4, 2)
    assert isinstance(out, CrlbRow)
    expected = 0.4**2 * np.linalg.inv(np.diag(gt.Sigma))
    assert np.allclose(out.matrix, expected, atol=1e-10)
    assert out.row_index == 2


def test_crlb_row_sigma_homogeneity():
    gt, mask, obs = _problem(seed=8)
    a = crlb_row(obs, gt.Ystar, 0.1, 0).matrix
    b = crlb_row(obs, gt.Ystar, 0.2, 0).matrix
    assert np.allclose(b, 4 * a, atol=1e-12 * np.abs(a).max())


def test_crlb_row_concentrates_to_inverse_spectrum():
    # (p / sigma^2) x bound ~ (Sigma*)^{-1} once each row has many samples
    gt, mask, obs = _problem(n=400, r=2, p=0.6, sigma=0.1, seed=9)
    inv = np.linalg.inv(np.diag(gt.Sigma))
    for i in (0, 13, 200):
        scaled = (0.6 / 0.1**2) * crlb_row(obs, gt.Ystar, 0.1, i).matrix
        assert np.linalg.norm(scaled - inv) <= 0.2 * np.linalg.norm(inv)


def test_crlb_row_rejects_empty_row():
    gt = generate_ground_truth(6, 2, seed=10)
    from mcuq.observe import ObservationSet
    obs = ObservationSet(n1=6, n2=6, rows=[1, 1, 2], cols=[0, 3, 2],
                         values=[1.0, 2.0, 3.0], p_nominal=0.1)
    with pytest.raises(ValueError):
        crlb_row(obs, gt.Ystar, 0.1, 0)


# ---------------------------------------------------------------------------
# entry bound


def test_crlb_entry_close_to_oracle_variance():
    # the decoupled bound concentrates around v*_{ij}; the fluctuation scale
    # is 1/sqrt(n p) per design Gram
    n, p, sigma = 1000, 0.5, 0.1
    gt, mask, obs = _problem(n=n, r=2, p=p, sigma=sigma, seed=11)
    for (i, j) in ((0, 1), (5, 700), (999, 3)):
        bound = crlb_entry(obs, gt.Xstar, gt.Ystar, sigma, p, i, j)
        v = true_entry_variance(gt, sigma, p, i, j).value
        assert abs(bound - v) <= 5 / np.sqrt(n * p) * v


def test_crlb_entry_lower_bounds_oracle_variance():
    # Monte Carlo version of the one-sided comparison: the bound may dip
    # only slightly below v*_{ij}
    n, p, sigma = 600, 0.5, 0.2
    gt, mask, obs = _problem(n=n, r=3, p=p, sigma=sigma, seed=12)
    rng = np.random.default_rng(13)
    for _ in range(20):
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        bound = crlb_entry(obs, gt.Xstar, gt.Ystar, sigma, p, i, j)
        v = true_entry_variance(gt, sigma, p, i, j).value
        assert bound >= 0.85 * v


def test_crlb_entry_sigma_homogeneity():
    gt, mask, obs = _problem(n=100, seed=14)
    a = crlb_entry(obs, gt.Xstar, gt.Ystar, 0.1, 0.5, 1, 2)
    b = crlb_entry(obs, gt.Xstar, gt.Ystar, 0.3, 0.5, 1, 2)
    assert b == pytest.approx(9 * a, rel=1e-10)


def test_crlb_entry_transpose_symmetry():
    gt, mask, obs = _problem(n=60, seed=15)
    from mcuq.observe import ObservationSet
    order = np.lexsort((obs.rows, obs.cols))
    obs_t = ObservationSet(
        n1=obs.n2, n2=obs.n1,
        rows=obs.cols[order], cols=obs.rows[order],
        values=obs.values[order], p_nominal=obs.p_nominal,
    )
    a = crlb_entry(obs, gt.Xstar, gt.Ystar, 0.1, 0.5, 4, 9)
    b = crlb_entry(obs_t, gt.Ystar, gt.Xstar, 0.1, 0.5, 9, 4)
    assert a == pytest.approx(b, rel=1e-10)


# ---------------------------------------------------------------------------
# aggregate bound


def test_oracle_l2_lower_formula():
    assert oracle_l2_lower(100, 3, 0.5, 0.25) == pytest.approx(
        2 * 100 * 3 * 0.25 / 0.25)


def test_oracle_l2_lower_equals_summed_entry_variances():
    # summing v*_{ij} over the full grid collapses to 2 n r sigma^2 / p
    # because each orthonormal basis contributes total leverage r per side
    gt = generate_ground_truth(40, 3, seed=16)
    sigma, p = 0.2, 0.4
    total = 0.0
    for i in range(40):
        for j in range(40):
            total += true_entry_variance(gt, sigma, p, i, j).value
    assert total == pytest.approx(oracle_l2_lower(40, 3, sigma, p), rel=1e-10)


def test_oracle_l2_lower_validates():
    with pytest.raises(ValueError):
        oracle_l2_lower(0, 1, 0.1, 0.5)
    with pytest.raises(ValueError):
        oracle_l2_lower(10, 1, 0.1, 0.0)
