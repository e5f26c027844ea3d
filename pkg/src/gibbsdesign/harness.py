"""Sequential experiment loop, replay, aggregation, and file output.

Stream discipline: every run derives all randomness from one root stream by
splitting, with a fixed layout (setup, one child per step, metrics), and
every step splits the same number of children whether or not a feature that
would consume them is enabled.  Two runs with the same config and seed
therefore produce byte-identical steps.csv and summary.json; wall-clock
times go to a separate timing file precisely so they cannot break that.

Each posterior update applies the step's refreshed loss context to the whole
history: the IMQ centre is the latest predictive mean, so early observations
are re-scored as beliefs improve instead of keeping the weights they got
when the predictive was still near the prior.  For context-dependent losses
the update runs a few refit passes, re-anchoring the centre at each pass's
own predictive, which brings the fit to the self-consistent fixed point.

Design selection is myopic: the information gain of a candidate experiment
is always taken with respect to the current belief, so after every update
the posterior steps into the prior's slot in the estimator.  Fits themselves
always start from the original prior over the full history.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .config import (
    RunConfig,
    build_bounds,
    build_eig_config,
    build_loss,
    build_model,
    build_opt_config,
    build_prior,
    build_process,
    build_strategy,
    config_to_dict,
)
from .design_opt import RandomDesign, select_design
from .dgp import TrueProcess, dgp_predictive_reference, dgp_sample
from .distributions import Rng
from .eig import beig_nmc, gibbs_eig_nmc, gibbs_eig_noweight
from .inference import (
    ExperimentHistory,
    fit_variational,
    make_loss_context,
    posterior_as_prior,
    posterior_theta_samples,
    posterior_theta_summary,
    predictive_summary,
    snis_posterior,
)
from .losses import WeightedSM
from .metrics import MetricReport, mmd_metric, predictive_nll, rmse_metric
from .models import design_dim, prior_sample

CTX_THETA_DRAWS = 512


@dataclass
class StepRecord:
    step: int
    design: np.ndarray
    outcome: float
    eig: float
    eig_ess: float
    eig_se: float
    post_mean: np.ndarray
    post_std: np.ndarray


@dataclass
class RunRecord:
    seed: int
    steps: list[StepRecord]
    report: MetricReport
    step_reports: list[MetricReport] | None
    config: RunConfig


def assessment_designs(model, n: int, rng: Rng) -> np.ndarray:
    """Fixed designs the metrics are computed at: an even 1-d grid for the
    regression problem, a frozen uniform sample of the design space else."""
    d = design_dim(model)
    if d == 1 and n >= 2:
        from .models import LinearRegression

        if isinstance(model, LinearRegression):
            return np.linspace(model.design_lo, model.design_hi, n)[:, None]
    return rng.gen.uniform(model.design_lo, model.design_hi, size=(n, d))


def _estimate(kind, model, prior, loss, xi, eig_cfg, rng, ctx):
    if kind == "gibbs":
        return gibbs_eig_nmc(model, prior, loss, xi, eig_cfg, rng, ctx)
    if kind == "beig":
        return beig_nmc(model, prior, xi, eig_cfg, rng)
    return gibbs_eig_noweight(model, prior, loss, xi, eig_cfg, rng, ctx)


def _fit_posterior(cfg, prior, model, loss, hist, ctxs, rng, init=None, opt=None):
    if cfg.inference.backend == "snis":
        return snis_posterior(
            prior, model, loss, cfg.loss.omega, hist, ctxs, cfg.inference.n_particles, rng
        )
    if opt is None:
        opt = build_opt_config(cfg)
    return fit_variational(
        prior, model, loss, cfg.loss.omega, hist, ctxs, opt, rng, init
    )


def _update_posterior(cfg, prior, model, loss, hist, ctx, step_index, r_fit, r_theta):
    """Refit the posterior, re-anchoring a context-dependent loss on itself.

    Returns (posterior, theta draws from it).  The split counts are fixed by
    the config alone so consumption stays identical across loss kinds.  The
    re-anchoring passes warm-start from the previous pass and get a reduced
    optimiser budget; only the first pass travels from the prior.
    """
    n_pass = cfg.inference.anchor_refits if isinstance(loss, WeightedSM) else 1
    r_fits = r_fit.split(cfg.inference.anchor_refits)
    r_thetas = r_theta.split(cfg.inference.anchor_refits)
    opt = build_opt_config(cfg)
    refine = replace(opt, steps=max(1000, opt.steps // 3))
    init = None
    for k in range(n_pass):
        post = _fit_posterior(
            cfg, prior, model, loss, hist, [ctx] * len(hist), r_fits[k], init,
            opt if k == 0 else refine,
        )
        theta_ctx = posterior_theta_samples(post, CTX_THETA_DRAWS, r_thetas[k])
        if k + 1 < n_pass:
            ctx = make_loss_context(theta_ctx, model, step_index)
            if cfg.inference.backend == "variational":
                init = post
    return post, theta_ctx


def compute_metrics(post, model, proc, designs, mcfg, rng) -> MetricReport:
    r_ref, r_pred, r_theta = rng.split(3)
    n_designs = designs.shape[0]
    refs = np.empty((n_designs, mcfg.n_ref_draws))
    for d, r in enumerate(r_ref.split(n_designs)):
        refs[d] = dgp_predictive_reference(proc, designs[d], mcfg.n_ref_draws, r)
    pred = predictive_summary(post, model, designs, mcfg.n_pred_draws, r_pred)
    theta = posterior_theta_samples(post, mcfg.n_theta_draws, r_theta)
    return MetricReport(
        rmse=rmse_metric(pred.mean, refs),
        mmd=mmd_metric(pred.samples, refs),
        nll=predictive_nll(model, theta, designs, refs),
    )


def run_sequential(cfg: RunConfig, seed: int) -> RunRecord:
    """One full sequential design-and-inference replication."""
    model = build_model(cfg)
    prior = build_prior(model)
    proc = build_process(cfg, model)
    loss = build_loss(cfg)
    strategy = build_strategy(cfg)
    bounds = build_bounds(model)
    eig_cfg = build_eig_config(cfg)
    kind = cfg.estimator.kind

    root = Rng(seed)
    r_setup, r_steps, r_metrics = root.split(3)
    r_ctx0, r_assess = r_setup.split(2)
    assess = assessment_designs(model, cfg.metrics.n_assess_designs, r_assess)
    theta_ctx = prior_sample(prior, r_ctx0, CTX_THETA_DRAWS)

    hist = ExperimentHistory()
    steps: list[StepRecord] = []
    step_reports = [] if cfg.metrics.every_step else None
    post = None
    belief = prior  # current posterior in the prior's role for the next EIG
    for rec_step, r_step in enumerate(r_steps.split(cfg.horizon), start=1):
        r_sel, r_eig, r_obs, r_fit, r_theta, r_met = r_step.split(6)
        ctx = make_loss_context(theta_ctx, model, rec_step)
        cache = {}

        def eig_fn(xi):
            est = _estimate(kind, model, belief, loss, xi, eig_cfg, r_eig.split(1)[0], ctx)
            cache[tuple(np.atleast_1d(xi))] = est
            return est.value

        sel = select_design(strategy, eig_fn, bounds, r_sel)
        xi = sel.design
        est = cache.get(tuple(xi))
        y = float(dgp_sample(proc, xi, r_obs))

        hist.append(xi, y)
        post, theta_ctx = _update_posterior(
            cfg, prior, model, loss, hist, ctx, rec_step, r_fit, r_theta
        )
        belief = posterior_as_prior(post, prior)
        mean, std = posterior_theta_summary(post)
        steps.append(
            StepRecord(
                step=rec_step,
                design=xi,
                outcome=y,
                eig=est.value if est is not None else math.nan,
                eig_ess=est.ess if est is not None else math.nan,
                eig_se=est.se if est is not None else math.nan,
                post_mean=mean,
                post_std=std,
            )
        )
        if step_reports is not None:
            step_reports.append(compute_metrics(post, model, proc, assess, cfg.metrics, r_met))

    report = compute_metrics(post, model, proc, assess, cfg.metrics, r_metrics)
    return RunRecord(seed=seed, steps=steps, report=report, step_reports=step_reports, config=cfg)


def replay_inference(cfg: RunConfig, designs, outcomes, seed: int) -> RunRecord:
    """Refit the posterior point by point along a fixed dataset.

    The stream layout matches run_sequential so a replay at the same seed
    reuses the same context, fitting, and metric randomness; no design
    selection or data collection happens.
    """
    model = build_model(cfg)
    prior = build_prior(model)
    proc = build_process(cfg, model)
    loss = build_loss(cfg)

    designs = np.atleast_2d(np.asarray(designs, dtype=float))
    outcomes = np.asarray(outcomes, dtype=float)
    if designs.shape[0] != outcomes.shape[0]:
        raise ValueError("designs and outcomes must have equal length")
    if designs.shape[1] != design_dim(model):
        raise ValueError("design dimension does not match the model")

    root = Rng(seed)
    r_setup, r_steps, r_metrics = root.split(3)
    r_ctx0, r_assess = r_setup.split(2)
    assess = assessment_designs(model, cfg.metrics.n_assess_designs, r_assess)
    theta_ctx = prior_sample(prior, r_ctx0, CTX_THETA_DRAWS)

    hist = ExperimentHistory()
    steps: list[StepRecord] = []
    post = None
    for rec_step, r_step in enumerate(r_steps.split(designs.shape[0]), start=1):
        _r_sel, _r_eig, _r_obs, r_fit, r_theta, _r_met = r_step.split(6)
        ctx = make_loss_context(theta_ctx, model, rec_step)
        xi = designs[rec_step - 1]
        y = float(outcomes[rec_step - 1])
        hist.append(xi, y)
        post, theta_ctx = _update_posterior(
            cfg, prior, model, loss, hist, ctx, rec_step, r_fit, r_theta
        )
        mean, std = posterior_theta_summary(post)
        steps.append(
            StepRecord(rec_step, xi, y, math.nan, math.nan, math.nan, mean, std)
        )
    report = compute_metrics(post, model, proc, assess, cfg.metrics, r_metrics)
    return RunRecord(seed=seed, steps=steps, report=report, step_reports=None, config=cfg)


def export_surface(cfg: RunConfig, rng: Rng):
    """EIG over a design grid under the prior-predictive loss context.

    Returns (designs (D, d), estimates) in grid order.
    """
    from .eig import eig_surface

    model = build_model(cfg)
    prior = build_prior(model)
    loss = build_loss(cfg)
    eig_cfg = build_eig_config(cfg)
    d = design_dim(model)
    r_ctx, r_eig = rng.split(2)
    theta_ctx = prior_sample(prior, r_ctx, CTX_THETA_DRAWS)
    ctx = make_loss_context(theta_ctx, model, 1)
    axes = [np.linspace(model.design_lo, model.design_hi, cfg.surface_points)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    designs = np.stack([m.ravel() for m in mesh], axis=-1)
    ests = eig_surface(
        model, prior, loss, designs, eig_cfg, r_eig,
        ctx_fn=lambda _xi: ctx, estimator=cfg.estimator.kind,
    )
    return designs, ests


def aggregate(records: list[RunRecord]) -> dict:
    """Across-replication mean and standard error of the final metrics."""
    if not records:
        raise ValueError("no records to aggregate")

    def stats(vals):
        vals = np.asarray(vals, dtype=float)
        se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        return {"mean": float(np.mean(vals)), "se": se}

    out = {
        "n_runs": len(records),
        "seeds": [r.seed for r in records],
        "metrics": {
            "rmse": stats([r.report.rmse for r in records]),
            "mmd": stats([r.report.mmd for r in records]),
            "nll": stats([r.report.nll for r in records]),
        },
    }
    horizons = {len(r.steps) for r in records}
    if len(horizons) == 1:
        traj = [
            float(np.mean([r.steps[t].eig for r in records]))
            for t in range(horizons.pop())
        ]
        out["eig_mean_by_step"] = traj
    return out


# --- deterministic text output ---------------------------------------------


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def _json_value(v, indent: int) -> str:
    pad = " " * indent
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [
            f'{pad}  "{k}": {_json_value(val, indent + 2)}' for k, val in v.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(v, (list, tuple)):
        if len(v) == 0:
            return "[]"
        items = [f"{pad}  {_json_value(val, indent + 2)}" for val in v]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        x = float(v)
        if math.isnan(x) or math.isinf(x):
            return "null"  # strict JSON has no NaN/inf
        return format_float(x)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, np.ndarray):
        return _json_value(v.tolist(), indent)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def json_dumps(obj) -> str:
    """JSON with floats fixed at 17 significant digits, keys in insertion
    order: identical input gives identical bytes."""
    return _json_value(obj, 0) + "\n"


def _report_dict(rep: MetricReport) -> dict:
    return {"rmse": rep.rmse, "mmd": rep.mmd, "nll": rep.nll}


def save_run(record: RunRecord, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    d = record.steps[0].design.shape[0]
    p = record.steps[0].post_mean.shape[0]
    header = (
        ["step"]
        + [f"design_{i}" for i in range(d)]
        + ["outcome", "eig", "eig_ess", "eig_se"]
        + [f"post_mean_{i}" for i in range(p)]
        + [f"post_std_{i}" for i in range(p)]
    )
    with open(os.path.join(out_dir, "steps.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in record.steps:
            row = (
                [str(s.step)]
                + [format_float(v) for v in s.design]
                + [format_float(s.outcome), format_float(s.eig),
                   format_float(s.eig_ess), format_float(s.eig_se)]
                + [format_float(v) for v in s.post_mean]
                + [format_float(v) for v in s.post_std]
            )
            w.writerow(row)
    summary = {
        "seed": record.seed,
        "config": config_to_dict(record.config),
        "metrics": _report_dict(record.report),
    }
    if record.step_reports is not None:
        summary["step_metrics"] = [_report_dict(r) for r in record.step_reports]
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(json_dumps(summary))


def save_aggregate(agg: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "aggregate.json"), "w") as fh:
        fh.write(json_dumps(agg))


def save_surface(designs, ests, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = designs.shape[1]
        w.writerow([f"design_{i}" for i in range(d)] + ["eig", "ess", "se"])
        for xi, est in zip(designs, ests):
            w.writerow(
                [format_float(v) for v in xi]
                + [format_float(est.value), format_float(est.ess), format_float(est.se)]
            )
