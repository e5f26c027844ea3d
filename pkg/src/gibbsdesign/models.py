"""Assumed statistical models and priors for the three benchmark problems.

All models are conditionally Gaussian in the observed outcome: the outcome
given parameters ``theta`` and design ``xi`` is ``Normal(mean, std)`` with
problem-specific mean and noise scale.  For location finding the observed
outcome is the LOG signal intensity, so the Gaussian lives in log-intensity
space throughout (likelihood, scores, simulation).

Parameter arrays vectorise over leading axes: ``theta`` has shape
``(..., p)`` and the per-point quantities come back with shape ``(...)``.
Outcome arrays broadcast against those leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distributions import LOG_2PI, DiagGaussian, Rng, logpdf, sample

# True source locations for location finding, 16 dimensions each; problems in
# dimension d < 16 use the first d entries of both.
LF_TRUE_BETA1 = np.array(
    [1.5, -1.3, 0.1, -1.8, -0.7, -1.1, 0.4, 0.4,
     -2.0, -1.2, -0.3, 0.2, 1.6, -1.2, 1.5, 0.8]
)
LF_TRUE_BETA2 = np.array(
    [-1.8, 0.5, 1.9, -0.2, -1.7, 1.4, -0.5, 2.0,
     -1.1, 1.2, 1.6, -2.0, -0.1, 0.0, -1.6, -1.3]
)


@dataclass(frozen=True)
class LinearRegression:
    """Straight-line regression: mean theta0 + theta1*xi, fixed noise sigma."""

    sigma: float
    n_coef: int = 2
    design_lo: float = -4.0
    design_hi: float = 4.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.n_coef != 2:
            raise ValueError("only intercept+slope regression is supported")


@dataclass(frozen=True)
class Pharmacokinetic:
    """One-compartment drug concentration model, theta = (k_a, k_e, V).

    Mean concentration at sampling time xi is
    (dose/V) * k_a/(k_a - k_e) * (exp(-k_e*xi) - exp(-k_a*xi)), valid only
    under the constraint k_a > k_e > 0, V > 0.  The noise variance is
    mult_var*mean^2 + add_var.
    """

    dose: float = 400.0
    mult_var: float = 0.01
    add_var: float = 0.1
    design_lo: float = 0.0
    design_hi: float = 24.0

    def __post_init__(self):
        if not (self.mult_var > 0 and self.add_var > 0):
            raise ValueError("noise variances must be > 0")


@dataclass(frozen=True)
class LocationFinding:
    """K emitting sources on [-4,4]^d observed through log total intensity.

    theta concatenates the K source coordinates (length K*d).  The intensity
    at xi is background + sum_k signal/(max_const + ||beta_k - xi||^2) and the
    outcome is its log plus Gaussian noise of scale sigma.
    """

    d: int
    n_sources: int = 2
    signal: float = 1.0
    background: float = 0.1
    max_const: float = 1e-4
    sigma: float = 0.5
    design_lo: float = -4.0
    design_hi: float = 4.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not (self.sigma > 0 and self.background > 0 and self.max_const > 0):
            raise ValueError("sigma, background, max_const must be > 0")


ModelSpec = LinearRegression | Pharmacokinetic | LocationFinding


def theta_dim(model: ModelSpec) -> int:
    if isinstance(model, LinearRegression):
        return model.n_coef
    if isinstance(model, Pharmacokinetic):
        return 3
    if isinstance(model, LocationFinding):
        return model.n_sources * model.d
    raise TypeError(f"unsupported model {type(model).__name__}")


def design_dim(model: ModelSpec) -> int:
    return model.d if isinstance(model, LocationFinding) else 1


def design_bounds(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    d = design_dim(model)
    return np.full(d, model.design_lo), np.full(d, model.design_hi)


def _as_xi(model: ModelSpec, xi) -> np.ndarray:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (design_dim(model),):
        raise ValueError(f"design must have shape ({design_dim(model)},)")
    return xi


def _check_pk(theta: np.ndarray):
    ka, ke, vol = theta[..., 0], theta[..., 1], theta[..., 2]
    if not (np.all(ke > 0) and np.all(vol > 0) and np.all(ka > ke)):
        raise ValueError("pharmacokinetic theta requires k_a > k_e > 0 and V > 0")


def model_mean(model: ModelSpec, theta, xi):
    """Mean outcome; for location finding this is the log total intensity."""
    theta = np.asarray(theta, dtype=float)
    xi = _as_xi(model, xi)
    if isinstance(model, LinearRegression):
        return theta[..., 0] + theta[..., 1] * xi[0]
    if isinstance(model, Pharmacokinetic):
        _check_pk(theta)
        ka, ke, vol = theta[..., 0], theta[..., 1], theta[..., 2]
        t = xi[0]
        return (model.dose / vol) * (ka / (ka - ke)) * (np.exp(-ke * t) - np.exp(-ka * t))
    if isinstance(model, LocationFinding):
        beta = theta.reshape(theta.shape[:-1] + (model.n_sources, model.d))
        sq = np.sum((beta - xi) ** 2, axis=-1)
        intensity = model.background + np.sum(model.signal / (model.max_const + sq), axis=-1)
        return np.log(intensity)
    raise TypeError(f"unsupported model {type(model).__name__}")


def model_std(model: ModelSpec, theta, xi):
    theta = np.asarray(theta, dtype=float)
    if isinstance(model, LinearRegression):
        return np.broadcast_to(model.sigma, theta.shape[:-1]).copy()
    if isinstance(model, Pharmacokinetic):
        z = model_mean(model, theta, xi)
        return np.sqrt(model.mult_var * z * z + model.add_var)
    if isinstance(model, LocationFinding):
        return np.broadcast_to(model.sigma, theta.shape[:-1]).copy()
    raise TypeError(f"unsupported model {type(model).__name__}")


def model_loglik(model: ModelSpec, y, theta, xi):
    """Gaussian log-likelihood of outcome ``y`` (log intensity for LF)."""
    mean = model_mean(model, theta, xi)
    std = model_std(model, theta, xi)
    z = (np.asarray(y, dtype=float) - mean) / std
    return -0.5 * LOG_2PI - np.log(std) - 0.5 * z * z


def model_score(model: ModelSpec, y, theta, xi):
    """d/dy of the outcome log-density: -(y - mean)/std^2."""
    mean = model_mean(model, theta, xi)
    std = model_std(model, theta, xi)
    return -(np.asarray(y, dtype=float) - mean) / (std * std)


def model_score_deriv(model: ModelSpec, y, theta, xi):
    """Second outcome derivative of the log-density: -1/std^2 everywhere."""
    std = model_std(model, theta, xi)
    out = -1.0 / (std * std)
    y = np.asarray(y, dtype=float)
    return np.broadcast_to(out, np.broadcast_shapes(out.shape, y.shape)).copy()


def model_simulate(model: ModelSpec, theta, xi, rng: Rng):
    """Draw outcomes mean + std*eps, one per parameter point."""
    mean = model_mean(model, theta, xi)
    std = model_std(model, theta, xi)
    return mean + std * rng.gen.standard_normal(size=np.shape(mean))


def model_mean_grad(model: ModelSpec, theta, xi):
    """d mean / d theta, shape (..., p).  Used by pathwise gradient fits."""
    theta = np.asarray(theta, dtype=float)
    xi = _as_xi(model, xi)
    if isinstance(model, LinearRegression):
        g = np.empty(theta.shape)
        g[..., 0] = 1.0
        g[..., 1] = xi[0]
        return g
    if isinstance(model, Pharmacokinetic):
        _check_pk(theta)
        ka, ke, vol = theta[..., 0], theta[..., 1], theta[..., 2]
        t = xi[0]
        diff = ka - ke
        ea, ee = np.exp(-ka * t), np.exp(-ke * t)
        amp = ka / diff
        gap = ee - ea
        scale = model.dose / vol
        g = np.empty(theta.shape)
        g[..., 0] = scale * (-ke / diff**2 * gap + amp * t * ea)
        g[..., 1] = scale * (ka / diff**2 * gap - amp * t * ee)
        g[..., 2] = -scale * amp * gap / vol
        return g
    if isinstance(model, LocationFinding):
        beta = theta.reshape(theta.shape[:-1] + (model.n_sources, model.d))
        delta = beta - xi
        sq = np.sum(delta**2, axis=-1)
        denom = model.max_const + sq
        intensity = model.background + np.sum(model.signal / denom, axis=-1)
        per_source = -2.0 * model.signal * delta / (denom**2)[..., None]
        g = per_source / intensity[..., None, None]
        return g.reshape(theta.shape)
    raise TypeError(f"unsupported model {type(model).__name__}")


def model_std_grad(model: ModelSpec, theta, xi):
    """d std / d theta, shape (..., p); zero for constant-noise models."""
    theta = np.asarray(theta, dtype=float)
    if isinstance(model, (LinearRegression, LocationFinding)):
        return np.zeros(theta.shape)
    if isinstance(model, Pharmacokinetic):
        z = model_mean(model, theta, xi)
        std = np.sqrt(model.mult_var * z * z + model.add_var)
        return (model.mult_var * z / std)[..., None] * model_mean_grad(model, theta, xi)
    raise TypeError(f"unsupported model {type(model).__name__}")


@dataclass(frozen=True)
class Prior:
    """Gaussian belief over theta, optionally through a log transform.

    The problem priors are diagonal; a fitted posterior standing in as the
    belief for the next design round may carry a full-covariance latent.
    With ``log_space`` set (the pharmacokinetic case), the Gaussian lives on
    log theta; sampling exponentiates componentwise and ``prior_logpdf``
    includes the change-of-variables term -sum(log theta) so it remains a
    density over theta itself.
    """

    latent: object  # DiagGaussian or FullGaussian
    log_space: bool = False
    constraint: str | None = None  # "pk" enforces k_a > k_e by rejection

    MAX_REJECTION_ROUNDS = 1000


def lr_prior(model: LinearRegression) -> Prior:
    dim = theta_dim(model)
    return Prior(DiagGaussian(np.zeros(dim), np.ones(dim)))


def pk_prior() -> Prior:
    mean = np.log(np.array([1.0, 0.1, 20.0]))
    std = np.full(3, np.sqrt(0.05))
    return Prior(DiagGaussian(mean, std), log_space=True, constraint="pk")


def lf_prior(model: LocationFinding) -> Prior:
    dim = theta_dim(model)
    return Prior(DiagGaussian(np.zeros(dim), np.ones(dim)))


def default_prior(model: ModelSpec) -> Prior:
    if isinstance(model, LinearRegression):
        return lr_prior(model)
    if isinstance(model, Pharmacokinetic):
        return pk_prior()
    if isinstance(model, LocationFinding):
        return lf_prior(model)
    raise TypeError(f"unsupported model {type(model).__name__}")


def _pk_valid(theta: np.ndarray) -> np.ndarray:
    return (theta[..., 1] > 0) & (theta[..., 2] > 0) & (theta[..., 0] > theta[..., 1])


def prior_sample(prior: Prior, rng: Rng, n: int | None = None) -> np.ndarray:
    """Draw ``n`` parameter vectors (or one if ``n`` is None), shape (n, p).

    Constrained priors redraw invalid rows, up to a fixed retry cap.
    """
    count = 1 if n is None else int(n)
    base = prior.latent
    draws = sample(base, rng, count)
    if prior.log_space:
        draws = np.exp(draws)
    if prior.constraint == "pk":
        bad = ~_pk_valid(draws)
        rounds = 0
        while np.any(bad):
            rounds += 1
            if rounds > Prior.MAX_REJECTION_ROUNDS:
                raise RuntimeError("prior rejection sampling exceeded retry cap")
            redraw = sample(base, rng, int(bad.sum()))
            if prior.log_space:
                redraw = np.exp(redraw)
            draws[bad] = redraw
            bad = ~_pk_valid(draws)
    return draws[0] if n is None else draws


def prior_logpdf(prior: Prior, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    base = prior.latent
    if theta.shape[-1:] != (base.dim,):
        raise ValueError(f"theta last axis must have length {base.dim}")
    if not prior.log_space:
        out = logpdf(base, theta)
        if prior.constraint == "pk":
            out = np.where(_pk_valid(theta), out, -np.inf)
        return out
    positive = np.all(theta > 0, axis=-1)
    safe = np.where(positive[..., None], theta, 1.0)
    logt = np.log(safe)
    out = logpdf(base, logt) - np.sum(logt, axis=-1)
    out = np.where(positive, out, -np.inf)
    if prior.constraint == "pk":
        out = np.where(positive & (theta[..., 0] > theta[..., 1]), out, -np.inf)
    return out
