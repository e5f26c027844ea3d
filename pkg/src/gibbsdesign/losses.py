"""Scoring rules and the IMQ downweighting machinery.

Three losses are available.  ``NegLogLik`` is minus the model log-likelihood;
with learning rate 1 the Gibbs update then reproduces exact Bayesian
inference.  ``UnweightedSM`` is the computable score-matching loss
s^2 + 2*s' obtained from integration by parts (s the outcome score of the
model, s' its outcome derivative).  ``WeightedSM`` inserts an inverse
multi-quadric bump r(y) centred at a predictive-mean guess gamma with width
c, giving (r*s)^2 + 2*d/dy(r^2*s); observations far from gamma are
downweighted, which is what buys robustness to outliers.

The kernel amplitude inside r is fixed to the context's ``kernel_amplitude``
(default 1).  The global learning rate multiplies the loss exactly once, in
exp(-omega*loss), never a second time inside r.

Widths come from one of two schedules: ``Laplante`` takes gamma and c from
the current posterior-predictive mean and standard deviation at the queried
design; ``ExpDecay`` keeps the predictive gamma but shrinks c over experiment
index i as c(i) = q1*exp(-b*(i-1)) + q2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .models import (
    ModelSpec,
    model_loglik,
    model_mean,
    model_mean_grad,
    model_std,
    model_std_grad,
)


@dataclass(frozen=True)
class NegLogLik:
    pass


@dataclass(frozen=True)
class UnweightedSM:
    pass


@dataclass(frozen=True)
class Laplante:
    pass


@dataclass(frozen=True)
class ExpDecay:
    q1: float
    q2: float
    b: float

    def __post_init__(self):
        if not (self.q1 > 0 and self.q2 > 0 and self.b > 0):
            raise ValueError("q1, q2, b must all be > 0")


IMQSchedule = Laplante | ExpDecay


@dataclass(frozen=True)
class WeightedSM:
    schedule: IMQSchedule


LossSpec = NegLogLik | UnweightedSM | WeightedSM


@dataclass(frozen=True)
class LossContext:
    """Per-step side information a loss may need.

    ``predictive_mean`` and ``predictive_std`` are functions of the design,
    refreshed once per posterior update and frozen while that step's EIG
    surface is estimated.
    """

    experiment_index: int
    predictive_mean: Callable[[np.ndarray], float]
    predictive_std: Callable[[np.ndarray], float]
    kernel_amplitude: float = 1.0

    def __post_init__(self):
        if self.experiment_index < 1:
            raise ValueError("experiment_index must be >= 1")
        if not self.kernel_amplitude > 0:
            raise ValueError("kernel_amplitude must be > 0")


def exp_decay_c(i: int, q1: float, q2: float, b: float) -> float:
    """Shrinking-function schedule c(i) = q1*exp(-b*(i-1)) + q2."""
    if i < 1:
        raise ValueError("experiment index starts at 1")
    if not (q1 > 0 and q2 > 0 and b > 0):
        raise ValueError("q1, q2, b must all be > 0")
    return q1 * np.exp(-b * (i - 1)) + q2


def laplante_params(predictive_mean: float, predictive_std: float) -> tuple[float, float]:
    """Centre and width from a posterior-predictive summary at one design."""
    if not predictive_std > 0:
        raise ValueError("degenerate predictive: std must be > 0")
    return float(predictive_mean), float(predictive_std)


def imq_weight(y, gamma: float, c: float, amplitude: float = 1.0):
    """Inverse multi-quadric bump r(y) and its y-derivative.

    r = a*(1 + (y-gamma)^2/c^2)^(-1/2), maximal (= a) at y = gamma.
    """
    if not c > 0:
        raise ValueError("IMQ width c must be > 0")
    y = np.asarray(y, dtype=float)
    u = (y - gamma) / c
    base = 1.0 + u * u
    r = amplitude / np.sqrt(base)
    dr_dy = -amplitude * (y - gamma) / (c * c) * base ** (-1.5)
    return r, dr_dy


def resolve_imq(schedule: IMQSchedule, xi, ctx: LossContext) -> tuple[float, float]:
    """Centre gamma and width c for a design under the given schedule."""
    gamma = float(ctx.predictive_mean(xi))
    if isinstance(schedule, Laplante):
        return laplante_params(gamma, float(ctx.predictive_std(xi)))
    if isinstance(schedule, ExpDecay):
        return gamma, float(exp_decay_c(ctx.experiment_index, schedule.q1, schedule.q2, schedule.b))
    raise TypeError(f"unsupported schedule {type(schedule).__name__}")


def _scores(model: ModelSpec, theta, xi, y):
    mean = model_mean(model, theta, xi)
    std = model_std(model, theta, xi)
    y = np.asarray(y, dtype=float)
    s = -(y - mean) / (std * std)
    s_prime = np.broadcast_to(-1.0 / (std * std), np.broadcast_shapes(mean.shape, y.shape))
    return s, s_prime


def loss_eval(spec: LossSpec, theta, xi, y, ctx: LossContext | None, model: ModelSpec):
    """Evaluate the loss at (theta, xi, y); broadcasts over theta and y."""
    if isinstance(spec, NegLogLik):
        return -model_loglik(model, y, theta, xi)
    if isinstance(spec, UnweightedSM):
        s, s_prime = _scores(model, theta, xi, y)
        return s * s + 2.0 * s_prime
    if isinstance(spec, WeightedSM):
        if ctx is None:
            raise ValueError("WeightedSM requires a loss context")
        gamma, c = resolve_imq(spec.schedule, xi, ctx)
        r, dr = imq_weight(y, gamma, c, ctx.kernel_amplitude)
        s, s_prime = _scores(model, theta, xi, y)
        # (r*s)^2 + 2*d/dy(r^2*s) expanded with product rule
        return (r * s) ** 2 + 2.0 * (2.0 * r * dr * s + r * r * s_prime)
    raise TypeError(f"unsupported loss {type(spec).__name__}")


def loss_grad_theta(spec: LossSpec, theta, xi, y, ctx: LossContext | None, model: ModelSpec):
    """d loss / d theta via the chain rule through mean and std, shape (..., p).

    The IMQ factors depend on y only, so they pass through untouched.
    """
    mean = model_mean(model, theta, xi)
    std = model_std(model, theta, xi)
    y = np.asarray(y, dtype=float)
    dmean = model_mean_grad(model, theta, xi)
    dstd = model_std_grad(model, theta, xi)
    resid = y - mean
    if isinstance(spec, NegLogLik):
        dl_dmean = -resid / (std * std)
        dl_dstd = 1.0 / std - resid * resid / std**3
    else:
        s = -resid / (std * std)
        ds_dmean = 1.0 / (std * std)
        ds_dstd = 2.0 * resid / std**3
        dsp_dstd = 2.0 / std**3
        if isinstance(spec, UnweightedSM):
            r = np.asarray(1.0)
            dr = np.asarray(0.0)
        elif isinstance(spec, WeightedSM):
            if ctx is None:
                raise ValueError("WeightedSM requires a loss context")
            gamma, c = resolve_imq(spec.schedule, xi, ctx)
            r, dr = imq_weight(y, gamma, c, ctx.kernel_amplitude)
        else:
            raise TypeError(f"unsupported loss {type(spec).__name__}")
        common = 2.0 * r * r * s + 4.0 * r * dr
        dl_dmean = common * ds_dmean
        dl_dstd = common * ds_dstd + 2.0 * r * r * dsp_dstd
    shape = np.broadcast_shapes(dl_dmean.shape, std.shape)
    return (
        np.broadcast_to(dl_dmean, shape)[..., None] * dmean
        + np.broadcast_to(dl_dstd, shape)[..., None] * dstd
    )
