"""Robust loss-based (Gibbs) posterior inference and sequential experimental design.

The package is organised around the stages of a sequential design loop:

- ``distributions``: seeded splittable RNG plus the scalar/diagonal-Gaussian
  densities used everywhere else.
- ``models``: the three benchmark problems (linear regression,
  pharmacokinetics, location finding) with their priors.
- ``dgp``: true data-generating processes, including outlier contamination
  and wrong-noise-law scenarios.
- ``losses``: negative log-likelihood and (weighted) score-matching losses,
  with the IMQ downweighting kernel and its two schedules.
- ``inference``: Gibbs/Bayesian posterior approximations (importance-weighted
  particles and a variational diagonal Gaussian) and a conjugate oracle.
- ``eig``: nested Monte Carlo estimators of the expected information gain for
  Gibbs posteriors, plus a discrete quadrature oracle.
- ``design_opt``: grid, random, and GP-UCB design acquisition.
- ``metrics``: RMSE, unbiased MMD, and predictive NLL evaluation.
- ``harness``: the sequential experiment loop, replay, persistence, and the
  configuration schema behind the command-line interface in ``cli``.
"""

__version__ = "0.1.0"
