"""GP surrogate and the design selection strategies."""

import numpy as np
import pytest

from gibbsdesign.design_opt import (
    BayesOpt,
    GridSearch,
    RandomDesign,
    gp_fit,
    gp_predict,
    matern52,
    select_design,
)
from gibbsdesign.distributions import Rng

BOUNDS_1D = np.array([[-4.0, 4.0]])


def test_matern52_frozen_value_at_r_equals_length_scale():
    assert matern52(2.0, 2.0, 1.0) == pytest.approx(0.52399410883182031059, rel=1e-14)


def test_matern52_limits_and_scaling():
    assert matern52(0.0, 1.5, 3.0) == pytest.approx(3.0)
    assert matern52(100.0, 1.0, 1.0) < 1e-30
    r = np.linspace(0, 5, 30)
    k = matern52(r, 1.0, 2.0)
    assert np.all(np.diff(k) < 0)  # monotone decreasing in distance
    assert np.allclose(matern52(r, 1.0, 2.0), 2.0 * matern52(r, 1.0, 1.0))


def test_matern52_validation():
    with pytest.raises(ValueError):
        matern52(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        matern52(-0.5, 1.0, 1.0)


def test_gp_interpolates_noise_free_data():
    x = np.array([[-2.0], [0.0], [1.5], [3.0]])
    y = np.sin(x[:, 0])
    state = gp_fit(x, y, length_scale=1.5, variance=1.0)
    mean, std = gp_predict(state, x)
    assert np.allclose(mean, y, atol=1e-4)
    assert np.all(std < 1e-2)


def test_gp_uncertainty_grows_off_data():
    x = np.array([[0.0], [1.0]])
    y = np.array([0.3, -0.1])
    state = gp_fit(x, y, length_scale=1.0, variance=2.0)
    _, std_near = gp_predict(state, [[0.5]])
    _, std_far = gp_predict(state, [[30.0]])
    assert std_far[0] > std_near[0]
    assert std_far[0] == pytest.approx(np.sqrt(2.0), rel=1e-3)


def test_gp_jitter_escalates_on_duplicate_rows():
    x = np.array([[1.0], [1.0], [1.0], [2.0]])
    y = np.array([0.5, 0.5, 0.5, 1.0])
    state = gp_fit(x, y, length_scale=1.0, variance=1.0)
    assert state.jitter <= 1e-3
    mean, _ = gp_predict(state, [[1.0]])
    assert mean[0] == pytest.approx(0.5, abs=0.05)


def test_gp_fit_validation():
    with pytest.raises(ValueError):
        gp_fit(np.zeros((0, 1)), np.zeros(0), 1.0, 1.0)
    with pytest.raises(ValueError):
        gp_fit(np.zeros((2, 1)), np.zeros(3), 1.0, 1.0)


def test_grid_search_takes_first_maximum_on_ties():
    sel = select_design(GridSearch(n_points=9), lambda xi: float(xi[0] ** 2), BOUNDS_1D, Rng(0))
    # +-4 tie; ascending grid order means -4 wins
    assert sel.design[0] == pytest.approx(-4.0)
    assert sel.evaluated.shape == (9, 1)
    assert np.all(np.diff(sel.evaluated[:, 0]) > 0)


def test_grid_search_finds_interior_peak():
    sel = select_design(
        GridSearch(n_points=81), lambda xi: float(-((xi[0] - 1.3) ** 2)), BOUNDS_1D, Rng(0)
    )
    assert abs(sel.design[0] - 1.3) < 0.1


def test_random_design_never_evaluates():
    def boom(xi):
        raise AssertionError("random selection must not query the EIG")

    sel = select_design(RandomDesign(), boom, BOUNDS_1D, Rng(5))
    assert -4.0 <= sel.design[0] <= 4.0
    assert sel.evaluated.shape == (0, 1)
    again = select_design(RandomDesign(), boom, BOUNDS_1D, Rng(5))
    assert sel.design[0] == again.design[0]


def test_bayes_opt_respects_budget_and_returns_best_observed():
    calls = []

    def eig(xi):
        calls.append(float(xi[0]))
        return float(-((xi[0] - 2.0) ** 2))

    strat = BayesOpt(length_scale=2.0, variance=4.0, ucb_lambda=2.0, n_evaluations=20)
    sel = select_design(strat, eig, BOUNDS_1D, Rng(9))
    assert len(calls) == 20
    assert sel.evaluated.shape == (20, 1)
    best = np.argmax(sel.eig_values)
    assert np.array_equal(sel.design, sel.evaluated[best])
    assert abs(sel.design[0] - 2.0) < 0.5


def test_bayes_opt_two_dimensional():
    target = np.array([1.0, -2.0])

    def eig(xi):
        return float(-np.sum((xi - target) ** 2))

    bounds = np.array([[-4.0, 4.0], [-4.0, 4.0]])
    strat = BayesOpt(length_scale=3.0, variance=4.0, ucb_lambda=2.0, n_evaluations=40)
    sel = select_design(strat, eig, bounds, Rng(10))
    assert np.linalg.norm(sel.design - target) < 1.2


def test_bayes_opt_deterministic_given_stream():
    def eig(xi):
        return float(np.cos(xi[0]))

    strat = BayesOpt(length_scale=2.0, variance=1.0, ucb_lambda=3.0, n_evaluations=12)
    a = select_design(strat, eig, BOUNDS_1D, Rng(33))
    b = select_design(strat, eig, BOUNDS_1D, Rng(33))
    assert np.array_equal(a.evaluated, b.evaluated)
    assert a.design[0] == b.design[0]


def test_strategy_validation():
    with pytest.raises(ValueError):
        GridSearch(n_points=1)
    with pytest.raises(ValueError):
        BayesOpt(length_scale=1.0, variance=1.0, ucb_lambda=1.0, n_evaluations=3, n_seed=5)
    with pytest.raises(ValueError):
        select_design(GridSearch(), lambda xi: 0.0, np.array([[1.0, -1.0]]), Rng(0))
    with pytest.raises(TypeError):
        select_design(object(), lambda xi: 0.0, BOUNDS_1D, Rng(0))
