"""Gibbs and Bayesian posterior approximation.

Two interchangeable posterior backends are provided.  The particle backend
draws parameters from the prior and reweights them by the generalised
likelihood exp(-omega * summed loss), i.e. self-normalised importance
sampling against the prior; it is unbiased and easy to test against the
conjugate oracle, but degenerates when the posterior moves far outside the
prior's bulk.  The variational backend fits a diagonal Gaussian (over log
theta for the pharmacokinetic problem) by stochastically ascending the
generalised evidence lower bound E_q[-omega*loss + log prior - log q].

Both operate in "latent" space: plain parameter space for regression and
location finding, log-parameter space for pharmacokinetics, whose prior is
log-normal with an ordering constraint handled by rejection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .distributions import DiagGaussian, FullGaussian, Rng, logpdf, sample
from .losses import LossContext, LossSpec, loss_eval, loss_grad_theta
from .models import LinearRegression, ModelSpec, Prior, _pk_valid, model_mean, model_simulate, model_std, prior_sample

logger = logging.getLogger(__name__)

DEGENERACY_WARN_FRACTION = 0.005


class ExperimentHistory:
    """Ordered (design, outcome, step) records of one sequential run."""

    def __init__(self):
        self.xis: list[np.ndarray] = []
        self.ys: list[float] = []

    def append(self, xi, y):
        self.xis.append(np.atleast_1d(np.asarray(xi, dtype=float)))
        self.ys.append(float(y))

    @property
    def steps(self) -> list[int]:
        return list(range(1, len(self.ys) + 1))

    def __len__(self) -> int:
        return len(self.ys)

    def __iter__(self):
        return zip(self.xis, self.ys, self.steps)


@dataclass
class ParticlePosterior:
    particles: np.ndarray  # (n, p), drawn from the prior
    log_weights: np.ndarray  # (n,), normalised to logsumexp == 0

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


@dataclass(frozen=True)
class GaussianApprox:
    """Variational Gaussian in latent space, diagonal or full-covariance."""

    latent: object  # DiagGaussian or FullGaussian
    log_space: bool = False
    constraint: str | None = None


@dataclass(frozen=True)
class OptConfig:
    steps: int = 10000
    step_size: float = 0.005
    n_mc: int = 8
    gradient: str = "pathwise"  # or "fd": central differences on the variational parameters
    family: str = "full"  # or "diag": mean-field guide

    def __post_init__(self):
        if self.steps < 1 or self.n_mc < 1 or not self.step_size > 0:
            raise ValueError("invalid optimiser configuration")
        if self.gradient not in ("pathwise", "fd"):
            raise ValueError("gradient must be 'pathwise' or 'fd'")
        if self.family not in ("full", "diag"):
            raise ValueError("family must be 'full' or 'diag'")


@dataclass
class PredictiveSummary:
    designs: np.ndarray  # (D, d)
    mean: np.ndarray  # (D,)
    std: np.ndarray  # (D,)
    samples: np.ndarray  # (D, n)


def _history_log_gen_lik(loss, omega, hist, ctxs, model, theta) -> np.ndarray:
    """log generalised likelihood -omega * sum_t loss_t at each theta row."""
    total = np.zeros(theta.shape[:-1])
    for (xi, y, _), ctx in zip(hist, ctxs):
        total = total - omega * loss_eval(loss, theta, xi, y, ctx, model)
    return total


def snis_posterior(
    prior: Prior,
    model: ModelSpec,
    loss: LossSpec,
    omega: float,
    hist: ExperimentHistory,
    ctxs: list[LossContext],
    n_particles: int,
    rng: Rng,
) -> ParticlePosterior:
    """Prior particles reweighted by the generalised likelihood."""
    if not omega > 0:
        raise ValueError("learning rate omega must be > 0")
    if len(ctxs) != len(hist):
        raise ValueError("one loss context per history step is required")
    particles = prior_sample(prior, rng, n_particles)
    log_w = _history_log_gen_lik(loss, omega, hist, ctxs, model, particles)
    norm = logsumexp(log_w)
    if not np.isfinite(norm):
        raise RuntimeError("all particle weights vanished: degenerate loss")
    post = ParticlePosterior(particles, log_w - norm)
    if post.ess < DEGENERACY_WARN_FRACTION * n_particles:
        logger.warning(
            "particle posterior degeneracy: ess %.1f of %d particles", post.ess, n_particles
        )
    return post


def _latent_to_theta(q_log_space: bool, latent: np.ndarray) -> np.ndarray:
    return np.exp(latent) if q_log_space else latent


def _valid_rows(constraint: str | None, theta: np.ndarray) -> np.ndarray:
    if constraint == "pk":
        return _pk_valid(theta)
    return np.ones(theta.shape[:-1], dtype=bool)


def gelbo(
    q: GaussianApprox,
    prior: Prior,
    model: ModelSpec,
    loss: LossSpec,
    omega: float,
    hist: ExperimentHistory,
    ctxs: list[LossContext],
    n_mc: int,
    rng: Rng,
) -> float:
    """Monte Carlo estimate of E_q[-omega*loss + log prior - log q].

    Computed in latent space, where any log-space change-of-variables terms
    cancel between prior and q.  Constraint-violating draws are excluded.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    latent = sample(q.latent, rng, n_mc)
    return _gelbo_at(latent, q, prior, model, loss, omega, hist, ctxs)


def _gelbo_at(latent, q, prior, model, loss, omega, hist, ctxs) -> float:
    theta = _latent_to_theta(q.log_space, latent)
    valid = _valid_rows(q.constraint, theta)
    if not np.any(valid):
        raise RuntimeError("all variational draws violate the parameter constraint")
    theta = theta[valid]
    latent = latent[valid]
    vals = _history_log_gen_lik(loss, omega, hist, ctxs, model, theta)
    vals = vals + logpdf(prior.latent, latent) - logpdf(q.latent, latent)
    return float(np.mean(vals))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_inv(y):
    # exact inverse of log(1+exp(x)) for y > 0
    return y + np.log(-np.expm1(-y))


def fit_variational(
    prior: Prior,
    model: ModelSpec,
    loss: LossSpec,
    omega: float,
    hist: ExperimentHistory,
    ctxs: list[LossContext],
    opt: OptConfig,
    rng: Rng,
    init: GaussianApprox | None = None,
) -> GaussianApprox:
    """Maximise the generalised ELBO over a Gaussian family by Adam ascent.

    ``opt.family`` picks the guide: "full" optimises a Cholesky-parameterised
    full-covariance Gaussian, "diag" a mean-field one.  Sequential design
    needs the full family in general: each observation ties the parameters
    together, and a mean-field guide discards exactly the correlations that
    make the next design informative.  The default gradient estimator is
    pathwise: with latent = m + L @ eps the entropy term contributes exactly
    1/L_kk to the scale gradients and the rest flows through the loss/prior
    gradients at the sampled points.  The "fd" estimator instead takes
    central finite differences of the Monte Carlo objective in the
    variational parameters, with shared eps draws; the two agree up to
    optimiser noise.  ``init`` warm-starts the optimiser at an earlier fit
    instead of at the prior.
    """
    if not omega > 0:
        raise ValueError("learning rate omega must be > 0")
    if len(ctxs) != len(hist):
        raise ValueError("one loss context per history step is required")
    base = prior.latent
    if not isinstance(base, DiagGaussian):
        raise ValueError("fit_variational expects a diagonal-Gaussian prior")
    p = base.dim
    full = opt.family == "full"
    tril = np.tril_indices(p, -1)
    n_off = (p * (p - 1)) // 2 if full else 0
    off = np.zeros(n_off)
    if init is not None:
        if init.log_space != prior.log_space or init.latent.dim != p:
            raise ValueError("init does not match the prior's latent space")
        m = init.latent.mean.copy()
        if isinstance(init.latent, FullGaussian):
            rho = _softplus_inv(np.diag(init.latent.chol).copy())
            if full:
                off = init.latent.chol[tril].copy()
        else:
            rho = _softplus_inv(init.latent.std.copy())
    else:
        m = base.mean.copy()
        rho = _softplus_inv(base.std.copy())
    adam_m = np.zeros(2 * p + n_off)
    adam_v = np.zeros(2 * p + n_off)
    b1, b2, eps_adam = 0.9, 0.999, 1e-8
    gen = rng.gen

    def build_chol(svec, ovec):
        L = np.zeros((p, p))
        L[np.diag_indices(p)] = svec
        L[tril] = ovec
        return L

    def score_at(latent, eps):
        # d/dlatent of (log prior - omega*sum loss) per draw, with
        # constraint-violating rows dropped from both arrays
        theta = _latent_to_theta(prior.log_space, latent)
        valid = _valid_rows(prior.constraint, theta)
        if not np.any(valid):
            raise RuntimeError("all variational draws violate the parameter constraint")
        theta_v, latent_v, eps_v = theta[valid], latent[valid], eps[valid]
        g = -(latent_v - base.mean) / (base.std**2)
        for (xi, y, _), ctx in zip(hist, ctxs):
            gl = loss_grad_theta(loss, theta_v, xi, y, ctx, model)
            if prior.log_space:
                gl = gl * theta_v
            g = g - omega * gl
        return g, eps_v

    def objective_value(latent_dist, eps):
        q = GaussianApprox(latent_dist, prior.log_space, prior.constraint)
        if isinstance(latent_dist, FullGaussian):
            latent = latent_dist.mean + eps @ latent_dist.chol.T
        else:
            latent = latent_dist.mean + latent_dist.std * eps
        return _gelbo_at(latent, q, prior, model, loss, omega, hist, ctxs)

    h = 1e-4
    for step in range(opt.steps):
        eps = gen.standard_normal((opt.n_mc, p))
        s = _softplus(rho)
        L = build_chol(s, off) if full else None
        if opt.gradient == "pathwise":
            latent = m + (eps @ L.T if full else s * eps)
            g, eps_v = score_at(latent, eps)
            grad_m = np.mean(g, axis=0)
            if full:
                G = g.T @ eps_v / g.shape[0]
                grad_rho = (np.diag(G) + 1.0 / s) * _sigmoid(rho)
                grad_off = G[tril]
            else:
                grad_rho = (np.mean(g * eps_v, axis=0) + 1.0 / s) * _sigmoid(rho)
        else:

            def value(mv, rv, ov):
                sv = _softplus(rv)
                dist = FullGaussian(mv, build_chol(sv, ov)) if full else DiagGaussian(mv, sv)
                return objective_value(dist, eps)

            grad_m = np.empty(p)
            grad_rho = np.empty(p)
            for k in range(p):
                d = np.zeros(p)
                d[k] = h
                grad_m[k] = (value(m + d, rho, off) - value(m - d, rho, off)) / (2 * h)
                grad_rho[k] = (value(m, rho + d, off) - value(m, rho - d, off)) / (2 * h)
            grad_off = np.empty(n_off)
            for k in range(n_off):
                d = np.zeros(n_off)
                d[k] = h
                grad_off[k] = (value(m, rho, off + d) - value(m, rho, off - d)) / (2 * h)
        grad = np.concatenate([grad_m, grad_rho, grad_off] if full else [grad_m, grad_rho])
        if not np.all(np.isfinite(grad)):
            raise RuntimeError(
                f"variational fit diverged at step {step}: non-finite gradient, m={m}, rho={rho}"
            )
        # Adam ascent on the gELBO
        adam_m = b1 * adam_m + (1 - b1) * grad
        adam_v = b2 * adam_v + (1 - b2) * grad * grad
        mhat = adam_m / (1 - b1 ** (step + 1))
        vhat = adam_v / (1 - b2 ** (step + 1))
        update = opt.step_size * mhat / (np.sqrt(vhat) + eps_adam)
        m = m + update[:p]
        rho = rho + update[p : 2 * p]
        if full:
            off = off + update[2 * p :]
    s = _softplus(rho)
    latent_dist = FullGaussian(m, build_chol(s, off)) if full else DiagGaussian(m, s)
    return GaussianApprox(latent_dist, prior.log_space, prior.constraint)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def posterior_theta_samples(post, n: int, rng: Rng) -> np.ndarray:
    """Draw n parameter vectors from either posterior representation.

    Constraint-violating variational draws are redrawn, mirroring the prior
    sampler; with the fitted approximations here that path is essentially
    never exercised but keeps downstream model evaluation safe.
    """
    if isinstance(post, ParticlePosterior):
        idx = rng.gen.choice(post.n, size=n, p=post.weights)
        return post.particles[idx]
    if isinstance(post, GaussianApprox):

        def draw(k):
            latent = sample(post.latent, rng, k)
            return _latent_to_theta(post.log_space, latent)

        theta = draw(n)
        bad = ~_valid_rows(post.constraint, theta)
        rounds = 0
        while np.any(bad):
            rounds += 1
            if rounds > 1000:
                raise RuntimeError("posterior rejection sampling exceeded retry cap")
            theta[bad] = draw(int(bad.sum()))
            bad = ~_valid_rows(post.constraint, theta)
        return theta
    raise TypeError(f"unsupported posterior {type(post).__name__}")


def posterior_as_prior(post, prior: Prior) -> Prior:
    """Gaussian belief summarising ``post``, usable wherever a prior is.

    Sequential design scores the next experiment against the current belief,
    so after each update the posterior takes over the prior's role in the
    information-gain estimator.  A variational fit already is a Gaussian; a
    particle posterior is moment-matched to one in latent space, keeping the
    full covariance because the belief's correlations are what make the next
    design choice informative.  The constraint tag carries over so sampling
    keeps rejecting invalid draws.
    """
    if isinstance(post, GaussianApprox):
        return Prior(post.latent, post.log_space, post.constraint)
    if isinstance(post, ParticlePosterior):
        latent = np.log(post.particles) if prior.log_space else post.particles
        w = post.weights
        mean = w @ latent
        diff = latent - mean
        cov = (w[:, None] * diff).T @ diff
        jitter = max(1e-16, 1e-9 * float(np.max(np.diag(cov))))
        chol = np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        return Prior(FullGaussian(mean, chol), prior.log_space, prior.constraint)
    raise TypeError(f"unsupported posterior {type(post).__name__}")


def posterior_theta_summary(post) -> tuple[np.ndarray, np.ndarray]:
    """Weighted (or variational) mean and std of theta, for run logs."""
    if isinstance(post, ParticlePosterior):
        w = post.weights
        mean = w @ post.particles
        var = w @ (post.particles - mean) ** 2
        return mean, np.sqrt(np.maximum(var, 0.0))
    if isinstance(post, GaussianApprox):
        if not post.log_space:
            return post.latent.mean.copy(), post.latent.std.copy()
        # lognormal moments from the latent Gaussian
        mu, s2 = post.latent.mean, post.latent.std**2
        mean = np.exp(mu + 0.5 * s2)
        var = (np.exp(s2) - 1.0) * np.exp(2 * mu + s2)
        return mean, np.sqrt(var)
    raise TypeError(f"unsupported posterior {type(post).__name__}")


def predictive_summary(post, model: ModelSpec, designs, n: int, rng: Rng) -> PredictiveSummary:
    """Per-design posterior-predictive mean/std plus the raw outcome draws."""
    if n < 2:
        raise ValueError("n must be >= 2")
    designs = np.atleast_2d(np.asarray(designs, dtype=float))
    n_designs = designs.shape[0]
    samples = np.empty((n_designs, n))
    rngs = rng.split(n_designs)
    for d, (xi, r) in enumerate(zip(designs, rngs)):
        r_theta, r_y = r.split(2)
        theta = posterior_theta_samples(post, n, r_theta)
        samples[d] = model_simulate(model, theta, xi, r_y)
    return PredictiveSummary(
        designs=designs,
        mean=samples.mean(axis=1),
        std=samples.std(axis=1),
        samples=samples,
    )


def make_loss_context(
    theta_draws: np.ndarray,
    model: ModelSpec,
    experiment_index: int,
    kernel_amplitude: float = 1.0,
) -> LossContext:
    """Loss context whose predictive mean/std are computed from theta draws.

    The predictive variance decomposes exactly as var over theta of the model
    mean plus the expected noise variance, so no fresh outcome sampling is
    needed at query time and the context stays deterministic given the draws.
    """
    theta_draws = np.asarray(theta_draws, dtype=float)

    def pred_mean(xi) -> float:
        return float(np.mean(model_mean(model, theta_draws, xi)))

    def pred_std(xi) -> float:
        mu = model_mean(model, theta_draws, xi)
        sd = model_std(model, theta_draws, xi)
        return float(np.sqrt(np.var(mu) + np.mean(sd**2)))

    return LossContext(
        experiment_index=experiment_index,
        predictive_mean=pred_mean,
        predictive_std=pred_std,
        kernel_amplitude=kernel_amplitude,
    )


def conjugate_lr_posterior(
    prior: Prior, sigma: float, hist: ExperimentHistory
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form Gaussian posterior for the straight-line model.

    Features are (1, xi) per observation; standard normal-equations update of
    a diagonal Gaussian prior under known noise sigma.
    """
    if prior.log_space:
        raise ValueError("conjugate oracle applies to the plain Gaussian prior only")
    mean0 = prior.latent.mean
    prec0 = np.diag(1.0 / prior.latent.std**2)
    if len(hist) == 0:
        return mean0.copy(), np.diag(prior.latent.std**2)
    X = np.array([[1.0, float(xi[0])] for xi, _, _ in hist])
    y = np.array([y for _, y, _ in hist])
    prec = prec0 + X.T @ X / sigma**2
    cov = np.linalg.inv(prec)
    mean = cov @ (prec0 @ mean0 + X.T @ y / sigma**2)
    return mean, cov
