"""Predictive evaluation against the true data-generating process.

All three metrics compare posterior-predictive behaviour at a fixed set of
assessment designs with outlier-free reference draws from the truth:
root-mean-square error of the predictive mean, unbiased squared MMD with an
RBF kernel and the median-heuristic bandwidth, and the negative marginal
predictive log likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import logsumexp

from .models import ModelSpec, model_loglik


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mmd: float
    nll: float


def rmse_metric(pred_mean, ref_samples) -> float:
    """Mean over designs of the RMS error of the predictive mean.

    ref_samples has one row of reference outcome draws per design.
    """
    pred_mean = np.asarray(pred_mean, dtype=float)
    ref = np.asarray(ref_samples, dtype=float)
    if pred_mean.shape[0] != ref.shape[0]:
        raise ValueError("need one predictive mean per design row")
    per_design = np.sqrt(np.mean((ref - pred_mean[:, None]) ** 2, axis=1))
    return float(np.mean(per_design))


def median_heuristic_bandwidth(points) -> float:
    """RBF bandwidth sigma = sqrt(median_{i<j} ||p_i - p_j||^2 / 2)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        raise ValueError("need at least two points")
    med = float(np.median(pdist(points, "sqeuclidean")))
    if med <= 0:
        raise ValueError("median pairwise distance is zero: degenerate sample")
    return float(np.sqrt(med / 2.0))


def _rbf_gram(a, b, sigma):
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.exp(-d2 / (2.0 * sigma**2))


def mmd_unbiased(x, y, sigma: float) -> float:
    """Unbiased estimate of squared MMD between two samples.

    Diagonal terms are excluded from the within-sample averages, so small
    negative values are possible and are not clipped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    n, m = x.shape[0], y.shape[0]
    if n < 2 or m < 2:
        raise ValueError("unbiased MMD needs at least two points per sample")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    kxx = _rbf_gram(x, x, sigma)
    kyy = _rbf_gram(y, y, sigma)
    kxy = _rbf_gram(x, y, sigma)
    sxx = (np.sum(kxx) - np.trace(kxx)) / (n * (n - 1))
    syy = (np.sum(kyy) - np.trace(kyy)) / (m * (m - 1))
    return float(sxx + syy - 2.0 * np.mean(kxy))


def mmd_metric(pred_samples, ref_samples) -> float:
    """Mean over designs of unbiased squared MMD, bandwidth per design.

    The median-heuristic bandwidth at each design is computed from the
    pooled predictive and reference draws for that design.
    """
    pred = np.asarray(pred_samples, dtype=float)
    ref = np.asarray(ref_samples, dtype=float)
    if pred.shape[0] != ref.shape[0]:
        raise ValueError("need matching design rows")
    vals = np.empty(pred.shape[0])
    for d in range(pred.shape[0]):
        sigma = median_heuristic_bandwidth(np.concatenate([pred[d], ref[d]]))
        vals[d] = mmd_unbiased(pred[d], ref[d], sigma)
    return float(np.mean(vals))


def predictive_nll(model: ModelSpec, theta_draws, designs, ref_samples) -> float:
    """Negative log marginal predictive density, averaged over designs.

    The marginal density at each reference outcome is the Monte Carlo
    average of the model likelihood over posterior parameter draws.
    """
    theta = np.asarray(theta_draws, dtype=float)
    designs = np.atleast_2d(np.asarray(designs, dtype=float))
    ref = np.asarray(ref_samples, dtype=float)
    if designs.shape[0] != ref.shape[0]:
        raise ValueError("need one reference row per design")
    m = theta.shape[0]
    total = 0.0
    for d in range(designs.shape[0]):
        ll = model_loglik(model, ref[d][:, None], theta, designs[d])  # (N, M)
        log_marg = logsumexp(ll, axis=1) - np.log(m)
        total += float(np.mean(log_marg))
    return -total / designs.shape[0]
