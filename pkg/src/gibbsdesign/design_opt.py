"""Design selection: exhaustive grid, uniform random, and GP-UCB search.

The EIG surface is expensive and noisy, so the Bayesian optimisation route
fits an exact noise-free Matern-5/2 GP to the EIG evaluations made so far
and picks the next candidate by upper confidence bound over a fresh uniform
pool each iteration.  The returned design is the best *observed* one, not
the GP optimum, which keeps the choice robust to surrogate misfit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .distributions import Rng

_JITTER_START = 1e-6
_JITTER_MAX = 1e-3


def matern52(r, length_scale: float, variance: float):
    """Matern-5/2 covariance as a function of distance r >= 0."""
    if not (length_scale > 0 and variance > 0):
        raise ValueError("length_scale and variance must be > 0")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distances must be nonnegative")
    u = np.sqrt(5.0) * r / length_scale
    return variance * (1.0 + u + u**2 / 3.0) * np.exp(-u)


@dataclass
class GPState:
    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)
    length_scale: float
    variance: float
    jitter: float
    chol: tuple  # scipy cho_factor output
    alpha: np.ndarray  # K^{-1} y


def _pairwise_dist(a, b):
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.sqrt(np.maximum(d2, 0.0))


def gp_fit(x, y, length_scale: float, variance: float) -> GPState:
    """Exact GP interpolation of noise-free observations.

    A small diagonal jitter keeps the Cholesky stable; it escalates tenfold
    on failure up to 1e-3 before giving up.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("x and y must hold the same positive number of rows")
    k = matern52(_pairwise_dist(x, x), length_scale, variance)
    jitter = _JITTER_START
    while True:
        try:
            chol = cho_factor(k + jitter * np.eye(x.shape[0]), lower=True)
            break
        except LinAlgError:
            jitter *= 10.0
            if jitter > _JITTER_MAX:
                raise RuntimeError(
                    f"GP covariance not positive definite even at jitter {_JITTER_MAX}"
                ) from None
    alpha = cho_solve(chol, y)
    return GPState(x, y, length_scale, variance, jitter, chol, alpha)


def gp_predict(state: GPState, xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and standard deviation at query designs."""
    xq = np.atleast_2d(np.asarray(xq, dtype=float))
    kq = matern52(_pairwise_dist(xq, state.x), state.length_scale, state.variance)
    mean = kq @ state.alpha
    v = cho_solve(state.chol, kq.T)
    var = state.variance - np.sum(kq * v.T, axis=1)
    return mean, np.sqrt(np.maximum(var, 0.0))


@dataclass(frozen=True)
class GridSearch:
    n_points: int = 100

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")


@dataclass(frozen=True)
class RandomDesign:
    pass


@dataclass(frozen=True)
class BayesOpt:
    length_scale: float
    variance: float
    ucb_lambda: float
    n_evaluations: int
    n_seed: int = 5
    candidate_pool_size: int = 500

    def __post_init__(self):
        if not (self.length_scale > 0 and self.variance > 0 and self.ucb_lambda >= 0):
            raise ValueError("invalid GP-UCB parameters")
        if self.n_evaluations < self.n_seed or self.n_seed < 1:
            raise ValueError("need n_evaluations >= n_seed >= 1")


@dataclass
class SelectionResult:
    design: np.ndarray  # (d,)
    evaluated: np.ndarray  # (n_evals, d)
    eig_values: np.ndarray  # (n_evals,)


def _as_bounds(bounds) -> np.ndarray:
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if bounds.shape[1] != 2 or np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("bounds must be (d, 2) rows of lo < hi")
    return bounds


def _uniform_in(bounds, gen, n):
    return gen.uniform(bounds[:, 0], bounds[:, 1], size=(n, bounds.shape[0]))


def select_design(strategy, eig_fn, bounds, rng: Rng) -> SelectionResult:
    """Pick the next design within bounds, logging every EIG evaluation.

    Grid search evaluates an ascending (lexicographic in d > 1) grid and
    takes the first maximum; random selection draws uniformly and never
    calls eig_fn; GP-UCB spends its evaluation budget sequentially.
    """
    bounds = _as_bounds(bounds)
    d = bounds.shape[0]
    if isinstance(strategy, RandomDesign):
        xi = _uniform_in(bounds, rng.gen, 1)[0]
        return SelectionResult(xi, np.empty((0, d)), np.empty(0))

    if isinstance(strategy, GridSearch):
        axes = [np.linspace(lo, hi, strategy.n_points) for lo, hi in bounds]
        mesh = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([m.ravel() for m in mesh], axis=-1)
        vals = np.array([eig_fn(xi) for xi in cand])
        best = int(np.argmax(vals))
        return SelectionResult(cand[best].copy(), cand, vals)

    if isinstance(strategy, BayesOpt):
        gen = rng.gen
        pool_n = min(500, strategy.candidate_pool_size)
        x_obs = _uniform_in(bounds, gen, strategy.n_seed)
        y_obs = [eig_fn(xi) for xi in x_obs]
        x_obs = list(x_obs)
        while len(y_obs) < strategy.n_evaluations:
            state = gp_fit(np.array(x_obs), np.array(y_obs), strategy.length_scale, strategy.variance)
            pool = _uniform_in(bounds, gen, pool_n)
            mean, std = gp_predict(state, pool)
            pick = int(np.argmax(mean + strategy.ucb_lambda * std))
            xi = pool[pick]
            x_obs.append(xi)
            y_obs.append(eig_fn(xi))
        x_arr = np.array(x_obs)
        y_arr = np.array(y_obs)
        best = int(np.argmax(y_arr))
        return SelectionResult(x_arr[best].copy(), x_arr, y_arr)

    raise TypeError(f"unknown strategy {type(strategy).__name__}")
