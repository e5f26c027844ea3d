"""Run configuration: nested dataclasses, TOML loading, object builders.

The TOML schema mirrors the dataclass tree one table per section.  Unknown
keys raise, so typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .design_opt import BayesOpt, GridSearch, RandomDesign
from .dgp import AsymmetricOutliers, ErrorDistribution, TrueProcess, WellSpecified
from .eig import EIGConfig
from .inference import OptConfig
from .losses import ExpDecay, Laplante, NegLogLik, UnweightedSM, WeightedSM
from .models import (
    LinearRegression,
    LocationFinding,
    Pharmacokinetic,
    default_prior,
    design_dim,
)


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "linear_regression"
    sigma: float = 1.0  # linear regression noise scale
    d: int = 2  # location finding design dimension

    def __post_init__(self):
        if self.kind not in ("linear_regression", "pharmacokinetic", "location_finding"):
            raise ValueError(f"unknown problem kind '{self.kind}'")


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = "well_specified"
    prob: float = 0.3
    shift_lo: float = 3.0
    shift_hi: float = 9.0
    sigma_scaled: bool = True
    variant: str = "laplace"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("well_specified", "asymmetric_outliers", "error_distribution"):
            raise ValueError(f"unknown scenario kind '{self.kind}'")


@dataclass(frozen=True)
class TruthConfig:
    theta_star: tuple
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)


@dataclass(frozen=True)
class LossConfig:
    kind: str = "nll"  # nll | usm | wsm
    omega: float = 1.0
    schedule: str = "laplante"  # laplante | exp_decay (wsm only)
    q1: float = 9.0
    q2: float = 1.0
    b: float = 0.04

    def __post_init__(self):
        if self.kind not in ("nll", "usm", "wsm"):
            raise ValueError(f"unknown loss kind '{self.kind}'")
        if self.schedule not in ("laplante", "exp_decay"):
            raise ValueError(f"unknown schedule '{self.schedule}'")
        if not self.omega > 0:
            raise ValueError("omega must be > 0")


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "gibbs"  # gibbs | beig | noweight
    n_outer: int = 10000
    n_inner: int = 100
    reuse_inner: bool = False

    def __post_init__(self):
        if self.kind not in ("gibbs", "beig", "noweight"):
            raise ValueError(f"unknown estimator kind '{self.kind}'")


@dataclass(frozen=True)
class DesignConfig:
    strategy: str = "grid"  # grid | random | bayes_opt
    n_points: int = 100
    length_scale: float = 20.0
    variance: float = 10.0
    ucb_lambda: float = 6.0
    n_evaluations: int = 30
    n_seed: int = 5
    candidate_pool_size: int = 500

    def __post_init__(self):
        if self.strategy not in ("grid", "random", "bayes_opt"):
            raise ValueError(f"unknown design strategy '{self.strategy}'")


@dataclass(frozen=True)
class InferenceConfig:
    backend: str = "snis"  # snis | variational
    n_particles: int = 10000
    steps: int = 10000
    step_size: float = 0.005
    n_mc: int = 8
    gradient: str = "pathwise"
    family: str = "full"  # variational guide: full | diag
    # fixed-point passes per posterior update for losses whose IMQ centre
    # depends on the posterior predictive; ignored for context-free losses
    anchor_refits: int = 3

    def __post_init__(self):
        if self.backend not in ("snis", "variational"):
            raise ValueError(f"unknown inference backend '{self.backend}'")
        if self.family not in ("full", "diag"):
            raise ValueError(f"unknown variational family '{self.family}'")
        if self.anchor_refits < 1:
            raise ValueError("anchor_refits must be >= 1")


@dataclass(frozen=True)
class MetricsConfig:
    n_assess_designs: int = 100
    n_ref_draws: int = 1000
    n_pred_draws: int = 1000
    n_theta_draws: int = 1000
    every_step: bool = False


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    truth: TruthConfig
    loss: LossConfig = field(default_factory=LossConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    design: DesignConfig = field(default_factory=DesignConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    horizon: int = 10
    seed: int = 0
    out_dir: str | None = None
    surface_points: int = 100  # per dimension, for eig-surface export

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def _take(table: dict, allowed: set[str], where: str) -> dict:
    unknown = set(table) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) {sorted(unknown)} in [{where}]")
    return table


def _build_section(table, cls, where):
    _take(table, set(cls.__dataclass_fields__), where)
    return cls(**table)


def load_config(path: str) -> RunConfig:
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    top_allowed = {"problem", "truth", "loss", "estimator", "design", "inference",
                   "metrics", "run"}
    _take(raw, top_allowed, "top level")

    problem = _build_section(dict(raw.get("problem", {})), ProblemConfig, "problem")

    truth_raw = dict(raw.get("truth", {}))
    scen_raw = dict(truth_raw.pop("scenario", {}))
    scenario = _build_section(scen_raw, ScenarioConfig, "truth.scenario")
    if "theta_star" not in truth_raw:
        raise ValueError("[truth] must set theta_star")
    theta_star = tuple(float(v) for v in truth_raw.pop("theta_star"))
    _take(truth_raw, set(), "truth")
    truth = TruthConfig(theta_star=theta_star, scenario=scenario)

    loss = _build_section(dict(raw.get("loss", {})), LossConfig, "loss")
    estimator = _build_section(dict(raw.get("estimator", {})), EstimatorConfig, "estimator")
    design = _build_section(dict(raw.get("design", {})), DesignConfig, "design")
    inference = _build_section(dict(raw.get("inference", {})), InferenceConfig, "inference")
    metrics = _build_section(dict(raw.get("metrics", {})), MetricsConfig, "metrics")

    run_raw = dict(raw.get("run", {}))
    run_allowed = {"horizon", "seed", "out_dir", "surface_points"}
    _take(run_raw, run_allowed, "run")
    return RunConfig(
        problem=problem,
        truth=truth,
        loss=loss,
        estimator=estimator,
        design=design,
        inference=inference,
        metrics=metrics,
        **run_raw,
    )


def config_to_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def build_model(cfg: RunConfig):
    p = cfg.problem
    if p.kind == "linear_regression":
        return LinearRegression(sigma=p.sigma)
    if p.kind == "pharmacokinetic":
        return Pharmacokinetic()
    return LocationFinding(d=p.d)


def build_process(cfg: RunConfig, model) -> TrueProcess:
    s = cfg.truth.scenario
    if s.kind == "well_specified":
        scenario = WellSpecified()
    elif s.kind == "asymmetric_outliers":
        scenario = AsymmetricOutliers(
            prob=s.prob, shift_lo=s.shift_lo, shift_hi=s.shift_hi, sigma_scaled=s.sigma_scaled
        )
    else:
        scenario = ErrorDistribution(variant=s.variant, value=s.value)
    return TrueProcess(model, np.asarray(cfg.truth.theta_star, dtype=float), scenario)


def build_loss(cfg: RunConfig):
    c = cfg.loss
    if c.kind == "nll":
        return NegLogLik()
    if c.kind == "usm":
        return UnweightedSM()
    if c.schedule == "laplante":
        return WeightedSM(Laplante())
    return WeightedSM(ExpDecay(q1=c.q1, q2=c.q2, b=c.b))


def build_strategy(cfg: RunConfig):
    c = cfg.design
    if c.strategy == "grid":
        return GridSearch(n_points=c.n_points)
    if c.strategy == "random":
        return RandomDesign()
    return BayesOpt(
        length_scale=c.length_scale,
        variance=c.variance,
        ucb_lambda=c.ucb_lambda,
        n_evaluations=c.n_evaluations,
        n_seed=c.n_seed,
        candidate_pool_size=c.candidate_pool_size,
    )


def build_bounds(model) -> np.ndarray:
    d = design_dim(model)
    return np.array([[model.design_lo, model.design_hi]] * d, dtype=float)


def build_eig_config(cfg: RunConfig) -> EIGConfig:
    omega = 1.0 if cfg.estimator.kind == "beig" else cfg.loss.omega
    return EIGConfig(
        omega=omega,
        n_outer=cfg.estimator.n_outer,
        n_inner=cfg.estimator.n_inner,
        reuse_inner=cfg.estimator.reuse_inner,
    )


def build_opt_config(cfg: RunConfig) -> OptConfig:
    c = cfg.inference
    return OptConfig(
        steps=c.steps, step_size=c.step_size, n_mc=c.n_mc, gradient=c.gradient, family=c.family
    )


def build_prior(model):
    return default_prior(model)
