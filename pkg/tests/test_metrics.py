"""Predictive metrics: RMSE, unbiased MMD, marginal NLL."""

import numpy as np
import pytest

from gibbsdesign.distributions import Rng
from gibbsdesign.inference import ExperimentHistory, conjugate_lr_posterior
from gibbsdesign.metrics import (
    median_heuristic_bandwidth,
    mmd_metric,
    mmd_unbiased,
    predictive_nll,
    rmse_metric,
)
from gibbsdesign.models import LinearRegression, lr_prior


def test_rmse_pure_offset_is_exact():
    ref = np.full((3, 50), 2.0)
    pred_mean = np.array([5.0, 5.0, 5.0])
    assert rmse_metric(pred_mean, ref) == pytest.approx(3.0, abs=1e-12)


def test_rmse_mixes_offset_and_spread():
    # constant prediction p against refs with mean c and spread s:
    # per-design rmse = sqrt((p-c)^2 + s^2) exactly for a symmetric two-point ref
    ref = np.array([[1.0, 3.0]])  # mean 2, spread 1
    assert rmse_metric(np.array([2.0]), ref) == pytest.approx(1.0, abs=1e-12)
    assert rmse_metric(np.array([4.0]), ref) == pytest.approx(np.sqrt(4.0 + 1.0), abs=1e-12)


def test_rmse_validates_shapes():
    with pytest.raises(ValueError):
        rmse_metric(np.zeros(2), np.zeros((3, 5)))


def test_median_heuristic_hand_case():
    # points 0,0,1,1: squared pairwise distances 0,1,1,1,1,0 -> median 1
    sigma = median_heuristic_bandwidth(np.array([0.0, 0.0, 1.0, 1.0]))
    assert sigma == pytest.approx(np.sqrt(0.5), rel=1e-14)


def test_median_heuristic_identical_points_is_degenerate():
    with pytest.raises(ValueError):
        median_heuristic_bandwidth(np.full(6, 3.0))
    with pytest.raises(ValueError):
        median_heuristic_bandwidth(np.array([1.0]))


def test_mmd_frozen_hand_value():
    # x = {0,0}, y = {1,1}, sigma = sqrt(1/2): within terms 1, cross e^{-1}
    got = mmd_unbiased(np.array([0.0, 0.0]), np.array([1.0, 1.0]), np.sqrt(0.5))
    assert got == pytest.approx(2.0 - 2.0 / np.e, rel=1e-14)


def test_mmd_same_distribution_near_zero():
    gen = Rng(3).gen
    x = gen.standard_normal(800)
    y = gen.standard_normal(800)
    sigma = median_heuristic_bandwidth(np.concatenate([x, y]))
    assert abs(mmd_unbiased(x, y, sigma)) < 0.01


def test_mmd_separates_shifted_distributions():
    gen = Rng(4).gen
    x = gen.standard_normal(800)
    y = gen.standard_normal(800) + 3.0
    sigma = median_heuristic_bandwidth(np.concatenate([x, y]))
    near = mmd_unbiased(x, x[::-1].copy(), sigma)
    far = mmd_unbiased(x, y, sigma)
    assert far > 0.5
    assert far > 50 * abs(near)


def test_mmd_unbiasedness_sign():
    # the unbiased statistic may dip below zero for equal distributions
    vals = []
    for s in range(200):
        gen = Rng(1000 + s).gen
        vals.append(mmd_unbiased(gen.standard_normal(30), gen.standard_normal(30), 1.0))
    vals = np.asarray(vals)
    assert np.any(vals < 0)
    assert abs(vals.mean()) < 0.005


def test_mmd_input_validation():
    with pytest.raises(ValueError):
        mmd_unbiased(np.array([1.0]), np.array([1.0, 2.0]), 1.0)
    with pytest.raises(ValueError):
        mmd_unbiased(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.0)


def test_mmd_metric_averages_designs_with_per_design_bandwidth():
    gen = Rng(5).gen
    pred = np.stack([gen.standard_normal(300), gen.standard_normal(300) + 5.0])
    ref = np.stack([gen.standard_normal(300), gen.standard_normal(300)])
    per_design = []
    for d in range(2):
        sigma = median_heuristic_bandwidth(np.concatenate([pred[d], ref[d]]))
        per_design.append(mmd_unbiased(pred[d], ref[d], sigma))
    assert mmd_metric(pred, ref) == pytest.approx(np.mean(per_design), rel=1e-12)


def test_predictive_nll_exact_point_mass():
    # single theta draw: marginal likelihood is just the model density
    model = LinearRegression(sigma=1.0)
    theta = np.array([[0.0, 0.0]])
    designs = np.array([[0.0]])
    ref = np.array([[0.0, 1.0]])
    want = -np.mean([-0.5 * np.log(2 * np.pi), -0.5 * np.log(2 * np.pi) - 0.5])
    got = predictive_nll(model, theta, designs, ref)
    assert got == pytest.approx(want, rel=1e-12)


def test_predictive_nll_matches_conjugate_closed_form():
    # MC-marginalised NLL converges to the exact Gaussian predictive NLL
    model = LinearRegression(sigma=1.0)
    prior = lr_prior(model)
    hist = ExperimentHistory()
    for xi, y in [(-2.0, -3.1), (0.0, 1.2), (2.0, 4.7)]:
        hist.append([xi], y)
    mean, cov = conjugate_lr_posterior(prior, 1.0, hist)
    gen = Rng(6).gen
    theta = gen.multivariate_normal(mean, cov, size=10000)
    designs = np.array([[-1.0], [1.5]])
    gen2 = Rng(7).gen
    ref = np.empty((2, 400))
    exact = 0.0
    for d, xi in enumerate(designs[:, 0]):
        f = np.array([1.0, xi])
        pm, pv = f @ mean, f @ cov @ f + 1.0
        ref[d] = pm + np.sqrt(pv) * gen2.standard_normal(400)
        exact += np.mean(
            0.5 * np.log(2 * np.pi * pv) + (ref[d] - pm) ** 2 / (2 * pv)
        )
    exact /= 2
    got = predictive_nll(model, theta, designs, ref)
    assert got == pytest.approx(exact, abs=0.01)


def test_predictive_nll_validates_design_rows():
    model = LinearRegression(sigma=1.0)
    with pytest.raises(ValueError):
        predictive_nll(model, np.zeros((4, 2)), np.zeros((2, 1)), np.zeros((3, 5)))
