"""True data-generating processes, well-specified or deliberately not.

Two misspecification families are provided.  Asymmetric-outlier scenarios
contaminate a fraction of observations by SUBTRACTING a uniform shift (for
location finding the shift applies to the log-intensity observation, the
modelled quantity).  Error-distribution scenarios keep the assumed mean
structure but swap the noise law (Laplace errors for regression, inflated
additive/multiplicative noise for pharmacokinetics, a different noise scale
for location finding).

Contamination draws always come from a dedicated child stream so that a clean
run and a contaminated run with the same seed share their base noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import Rng
from .models import (
    LinearRegression,
    LocationFinding,
    ModelSpec,
    Pharmacokinetic,
    model_mean,
    model_simulate,
    model_std,
)


@dataclass(frozen=True)
class WellSpecified:
    pass


@dataclass(frozen=True)
class AsymmetricOutliers:
    """With probability ``prob``, subtract a Uniform(shift_lo, shift_hi) draw.

    ``sigma_scaled`` multiplies the bounds by the model noise scale at the
    queried design (the regression and location-finding convention); the
    pharmacokinetic convention uses absolute bounds.
    """

    prob: float
    shift_lo: float
    shift_hi: float
    sigma_scaled: bool

    def __post_init__(self):
        if not 0.0 < self.prob <= 1.0:
            raise ValueError("prob must be in (0, 1]")
        if not self.shift_lo < self.shift_hi:
            raise ValueError("shift bounds must satisfy lo < hi")


@dataclass(frozen=True)
class ErrorDistribution:
    """Substitute the noise law while keeping the assumed mean structure.

    variant: "laplace" (regression), "pk_add_var" / "pk_mult_var"
    (pharmacokinetics, with ``value`` the substituted variance), or
    "lf_sigma" (location finding, with ``value`` the true noise scale).
    """

    variant: str
    value: float = 0.0

    def __post_init__(self):
        if self.variant not in ("laplace", "pk_add_var", "pk_mult_var", "lf_sigma"):
            raise ValueError(f"unknown error-distribution variant {self.variant!r}")


ScenarioSpec = WellSpecified | AsymmetricOutliers | ErrorDistribution


def default_outlier_scenario(model: ModelSpec) -> AsymmetricOutliers:
    if isinstance(model, LinearRegression):
        return AsymmetricOutliers(prob=0.3, shift_lo=3.0, shift_hi=9.0, sigma_scaled=True)
    if isinstance(model, Pharmacokinetic):
        return AsymmetricOutliers(prob=0.5, shift_lo=3.0, shift_hi=7.0, sigma_scaled=False)
    if isinstance(model, LocationFinding):
        return AsymmetricOutliers(prob=0.3, shift_lo=3.0, shift_hi=7.0, sigma_scaled=True)
    raise TypeError(f"unsupported model {type(model).__name__}")


@dataclass(frozen=True)
class TrueProcess:
    model: ModelSpec
    theta_star: np.ndarray
    scenario: ScenarioSpec

    def __post_init__(self):
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))


def _clean_sample(proc: TrueProcess, xi, rng: Rng, n: int) -> np.ndarray:
    """Outlier-free draws from the true noise law, shape (n,)."""
    model, scen = proc.model, proc.scenario
    theta = np.broadcast_to(proc.theta_star, (n, proc.theta_star.shape[0]))
    if isinstance(scen, ErrorDistribution):
        mean = model_mean(model, theta, xi)
        if scen.variant == "laplace":
            if not isinstance(model, LinearRegression):
                raise ValueError("laplace errors are a regression scenario")
            return rng.gen.laplace(mean, model.sigma, size=n)
        if scen.variant == "pk_add_var":
            if not isinstance(model, Pharmacokinetic):
                raise ValueError("pk_add_var is a pharmacokinetic scenario")
            std = np.sqrt(model.mult_var * mean**2 + scen.value)
            return mean + std * rng.gen.standard_normal(size=n)
        if scen.variant == "pk_mult_var":
            if not isinstance(model, Pharmacokinetic):
                raise ValueError("pk_mult_var is a pharmacokinetic scenario")
            std = np.sqrt(scen.value * mean**2 + model.add_var)
            return mean + std * rng.gen.standard_normal(size=n)
        if scen.variant == "lf_sigma":
            if not isinstance(model, LocationFinding):
                raise ValueError("lf_sigma is a location-finding scenario")
            return mean + scen.value * rng.gen.standard_normal(size=n)
    return model_simulate(model, theta, xi, rng)


def dgp_sample(proc: TrueProcess, xi, rng: Rng, n: int | None = None):
    """Draw observed outcomes, contamination included where the scenario says.

    The clean base draw consumes the first child stream and contamination the
    second, so scenarios differing only in contamination share base noise.
    """
    count = 1 if n is None else int(n)
    r_clean, r_contam = rng.split(2)
    y = _clean_sample(proc, xi, r_clean, count)
    scen = proc.scenario
    if isinstance(scen, AsymmetricOutliers):
        hit = r_contam.gen.uniform(size=count) < scen.prob
        shift = r_contam.gen.uniform(scen.shift_lo, scen.shift_hi, size=count)
        if scen.sigma_scaled:
            theta = np.broadcast_to(proc.theta_star, (count, proc.theta_star.shape[0]))
            shift = shift * model_std(proc.model, theta, xi)
        y = y - np.where(hit, shift, 0.0)
    return y[0] if n is None else y


def dgp_predictive_reference(proc: TrueProcess, xi, n: int, rng: Rng) -> np.ndarray:
    """n outlier-free draws from the true noise law (metric reference sample).

    Error-distribution scenarios keep their substituted noise; outlier
    scenarios drop the contamination entirely.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    # Mirror dgp_sample's stream layout so clean/contaminated pairs align.
    r_clean, _ = rng.split(2)
    return _clean_sample(proc, xi, r_clean, int(n))
