"""Seeded random number streams and elementary log-densities.

Every stochastic operation in the package draws from an :class:`Rng`, a thin
wrapper around numpy's Philox counter-based bit generator keyed by a
``SeedSequence``.  Streams fan out through :func:`split`, which makes
replications and per-design estimates reproducible from (seed, k, index)
without sharing state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


class Rng:
    """A single-owner random stream.

    Same seed, same call sequence: bitwise-identical draws.  Parallelism is
    obtained only by splitting, never by sharing an instance.  Note that
    splitting advances the parent's spawn counter, so two successive
    ``split`` calls on one instance yield distinct child streams.
    """

    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed))
        self._gen = None

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            self._gen = np.random.Generator(np.random.Philox(self._seq))
        return self._gen

    def split(self, k: int) -> list["Rng"]:
        if k < 1:
            raise ValueError("split requires k >= 1")
        return [Rng(s) for s in self._seq.spawn(k)]

    def __repr__(self) -> str:
        return f"Rng(entropy={self._seq.entropy}, key={self._seq.spawn_key})"


def split(rng: Rng, k: int) -> list[Rng]:
    """Fan a stream out into ``k`` independent reproducible child streams."""
    return rng.split(k)


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("Normal std must be > 0")


@dataclass(frozen=True)
class Laplace:
    loc: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Laplace scale must be > 0")


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("Uniform requires lo < hi")


class DiagGaussian:
    """Multivariate Gaussian with diagonal covariance, stored as std vector."""

    def __init__(self, mean, std):
        mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
        if mean.ndim != 1 or std.ndim != 1 or mean.shape != std.shape:
            raise ValueError("mean and std must be 1-d vectors of equal length")
        if not np.all(std > 0):
            raise ValueError("all std components must be > 0")
        self.mean = mean
        self.std = std

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __repr__(self) -> str:
        return f"DiagGaussian(mean={self.mean!r}, std={self.std!r})"


class FullGaussian:
    """Multivariate Gaussian with full covariance, stored as a Cholesky factor.

    ``chol`` is lower-triangular with positive diagonal and the covariance is
    ``chol @ chol.T``.  Marginal standard deviations come out as the row norms
    of the factor, so this drops in anywhere a :class:`DiagGaussian` is only
    read through its ``mean``/``std``/``dim``.
    """

    def __init__(self, mean, chol):
        mean = np.asarray(mean, dtype=float)
        chol = np.asarray(chol, dtype=float)
        p = mean.shape[0] if mean.ndim == 1 else -1
        if mean.ndim != 1 or chol.shape != (p, p):
            raise ValueError("mean must be a p-vector and chol a (p, p) matrix")
        if np.any(np.triu(chol, 1) != 0.0):
            raise ValueError("chol must be lower-triangular")
        if not np.all(np.diag(chol) > 0):
            raise ValueError("chol diagonal must be > 0")
        self.mean = mean
        self.chol = chol

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.sum(self.chol**2, axis=1))

    def cov(self) -> np.ndarray:
        return self.chol @ self.chol.T

    def __repr__(self) -> str:
        return f"FullGaussian(mean={self.mean!r}, chol={self.chol!r})"


def logpdf(dist, x):
    """Natural-log density of ``dist`` at ``x``.

    Scalar distributions broadcast over array ``x``.  For
    :class:`DiagGaussian` and :class:`FullGaussian`, the last axis of ``x``
    is the vector dimension and the result has that axis dropped.
    """
    if isinstance(dist, Normal):
        x = np.asarray(x, dtype=float)
        z = (x - dist.mean) / dist.std
        return -0.5 * LOG_2PI - np.log(dist.std) - 0.5 * z * z
    if isinstance(dist, Laplace):
        x = np.asarray(x, dtype=float)
        return -np.log(2.0 * dist.scale) - np.abs(x - dist.loc) / dist.scale
    if isinstance(dist, Uniform):
        x = np.asarray(x, dtype=float)
        inside = (x >= dist.lo) & (x <= dist.hi)
        return np.where(inside, -np.log(dist.hi - dist.lo), -np.inf)
    if isinstance(dist, DiagGaussian):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (dist.dim,):
            raise ValueError(f"x last axis must have length {dist.dim}")
        z = (x - dist.mean) / dist.std
        return np.sum(-0.5 * LOG_2PI - np.log(dist.std) - 0.5 * z * z, axis=-1)
    if isinstance(dist, FullGaussian):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (dist.dim,):
            raise ValueError(f"x last axis must have length {dist.dim}")
        diff = np.moveaxis(x - dist.mean, -1, 0)
        z = np.linalg.solve(dist.chol, diff.reshape(dist.dim, -1)).reshape(diff.shape)
        quad = np.sum(z * z, axis=0)
        return -0.5 * dist.dim * LOG_2PI - np.sum(np.log(np.diag(dist.chol))) - 0.5 * quad
    raise TypeError(f"unsupported distribution {type(dist).__name__}")


def sample(dist, rng: Rng, size=None):
    """Draw from ``dist``, advancing ``rng``.

    ``size=None`` gives a scalar (or a ``dim``-vector for the multivariate
    Gaussians); an integer ``n`` gives ``n`` stacked draws.
    """
    if isinstance(dist, Normal):
        return dist.mean + dist.std * rng.gen.standard_normal(size=size)
    if isinstance(dist, Laplace):
        return rng.gen.laplace(dist.loc, dist.scale, size=size)
    if isinstance(dist, Uniform):
        return rng.gen.uniform(dist.lo, dist.hi, size=size)
    if isinstance(dist, DiagGaussian):
        shape = (dist.dim,) if size is None else (size, dist.dim)
        return dist.mean + dist.std * rng.gen.standard_normal(size=shape)
    if isinstance(dist, FullGaussian):
        shape = (dist.dim,) if size is None else (size, dist.dim)
        eps = rng.gen.standard_normal(size=shape)
        return dist.mean + eps @ dist.chol.T
    raise TypeError(f"unsupported distribution {type(dist).__name__}")
