"""Weighted particle approximation of a posterior, with Bayes updates and
Liu-West resampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateCloudError,
    InvalidArgumentError,
    PosteriorCollapseError,
    PriorSamplingError,
)
from .models import Model, _as_time

__all__ = [
    "GaussianPrior",
    "ParticleCloud",
    "ResampleConfig",
    "init_cloud",
    "mean",
    "cov",
    "mean_fn",
    "update",
    "effective_sample_size",
    "resample",
    "regularized_factor",
    "cloud_rows",
    "write_cloud_csv",
]

_WEIGHT_TOL = 1e-10
# Perturbation redraws before clamping a resampled particle onto the boundary.
_MAX_REDRAWS = 100


class GaussianPrior:
    """Multivariate normal prior, usable as a ``prior_sampler`` for :func:`init_cloud`."""

    def __init__(self, mean, cov):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = self.mean.size
        if self.cov.shape != (d, d):
            raise InvalidArgumentError(f"covariance shape {self.cov.shape} does not match mean of length {d}")
        if not np.allclose(self.cov, self.cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.cov).max())):
            raise InvalidArgumentError("prior covariance is not symmetric")
        evals, evecs = np.linalg.eigh(self.cov)
        if evals.min() < -1e-12 * max(evals.max(), 0.0):
            raise InvalidArgumentError("prior covariance is not positive semidefinite")
        self._factor = evecs * np.sqrt(np.clip(evals, 0.0, None))

    @property
    def dimension(self) -> int:
        return self.mean.size

    def __call__(self, rng, size):
        return self.sample(rng, size)

    def sample(self, rng, size):
        z = rng.standard_normal((size, self.dimension))
        return self.mean + z @ self._factor.T

    def __repr__(self):
        return f"GaussianPrior(mean={self.mean.tolist()}, cov={self.cov.tolist()})"


@dataclass(frozen=True)
class ResampleConfig:
    a: float = 0.98
    resample_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise InvalidArgumentError(f"a must lie in [0, 1], got {self.a}")
        if not 0.0 <= self.resample_threshold <= 1.0:
            raise InvalidArgumentError(f"resample_threshold must lie in [0, 1], got {self.resample_threshold}")

    @property
    def h(self) -> float:
        return float(np.sqrt(1.0 - self.a**2))


@dataclass
class ParticleCloud:
    """Weights ``(n,)`` and locations ``(n, d)`` approximating a distribution over
    the parameters of ``model``."""

    weights: np.ndarray
    locations: np.ndarray
    model: Model | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.locations = np.asarray(self.locations, dtype=float)
        if self.locations.ndim == 1:
            self.locations = self.locations[:, None]
        n = self.weights.shape[0]
        if n < 1 or self.weights.ndim != 1 or self.locations.shape[0] != n:
            raise InvalidArgumentError(
                f"need n >= 1 weights matching locations, got {self.weights.shape} and {self.locations.shape}"
            )
        if self.model is not None and self.locations.shape[1] != self.model.dimension:
            raise InvalidArgumentError("location dimension does not match the model")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > _WEIGHT_TOL:
            raise InvalidArgumentError("weights must be nonnegative and sum to one")

    @property
    def n_particles(self) -> int:
        return self.weights.shape[0]

    @property
    def dimension(self) -> int:
        return self.locations.shape[1]

    def copy(self) -> ParticleCloud:
        return ParticleCloud(self.weights.copy(), self.locations.copy(), self.model)


def init_cloud(n, prior_sampler, rng, model=None, max_tries=100) -> ParticleCloud:
    """Draw ``n`` uniformly-weighted particles from ``prior_sampler(rng, size)``.

    Draws outside ``model``'s constraints are replaced by fresh draws; after
    ``max_tries`` rounds a :class:`PriorSamplingError` is raised.
    """
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"number of particles must be a positive integer, got {n!r}")
    n = int(n)
    locs = np.atleast_2d(np.asarray(prior_sampler(rng, n), dtype=float))
    if locs.shape[0] != n:
        locs = locs.T
    if model is not None:
        bad = ~model.are_valid(locs)
        tries = 0
        while bad.any():
            if tries >= max_tries:
                raise PriorSamplingError(
                    f"{bad.sum()} of {n} prior draws still violate the constraints of "
                    f"{model.name!r} after {max_tries} redraws"
                )
            locs[bad] = np.atleast_2d(prior_sampler(rng, int(bad.sum())))
            bad = ~model.are_valid(locs)
            tries += 1
    return ParticleCloud(np.full(n, 1.0 / n), locs, model)


def mean(cloud: ParticleCloud) -> np.ndarray:
    return cloud.weights @ cloud.locations


def cov(cloud: ParticleCloud) -> np.ndarray:
    """Weighted covariance of the particle locations (symmetrized)."""
    centered = cloud.locations - mean(cloud)
    sigma = (cloud.weights * centered.T) @ centered
    return 0.5 * (sigma + sigma.T)


def mean_fn(cloud: ParticleCloud, f, vectorized=False):
    """Weighted average of ``f`` over the particle locations.

    With ``vectorized=True``, ``f`` receives the whole ``(n, d)`` location
    array and must return an array whose leading axis has length ``n``.
    """
    if vectorized:
        values = np.asarray(f(cloud.locations), dtype=float)
    else:
        values = np.asarray([f(x) for x in cloud.locations], dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("function returned non-finite values on the particle locations")
    return np.tensordot(cloud.weights, values, axes=(0, 0))


def update(cloud: ParticleCloud, outcome, control) -> ParticleCloud:
    """Bayes update of the weights on one observed outcome."""
    t = _as_time(control)
    lik = cloud.model.likelihood([outcome], cloud.locations, [t])[0, :, 0]
    unnormalized = cloud.weights * lik
    total = unnormalized.sum()
    if not total > 0 or not np.isfinite(total):
        raise PosteriorCollapseError(outcome, control)
    return ParticleCloud(unnormalized / total, cloud.locations, cloud.model)


def effective_sample_size(cloud: ParticleCloud) -> float:
    return float(1.0 / np.sum(cloud.weights**2))


def regularized_factor(sigma) -> np.ndarray | None:
    """Lower Cholesky factor of ``sigma + delta*I`` with delta = 1e-12 * trace / d.

    Returns ``None`` for an identically zero matrix (nothing to factor).
    """
    sigma = np.atleast_2d(sigma)
    d = sigma.shape[0]
    trace = float(np.trace(sigma))
    if trace == 0.0 and not np.any(sigma):
        return None
    if not np.all(np.isfinite(sigma)) or trace < 0:
        raise DegenerateCloudError("covariance is not finite and positive semidefinite")
    delta = 1e-12 * trace / d
    try:
        return np.linalg.cholesky(sigma + delta * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise DegenerateCloudError("covariance is not positive semidefinite after regularization") from exc


def _draw_indices(weights, size, rng):
    cdf = np.cumsum(weights)
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return np.minimum(idx, weights.size - 1)


def resample(cloud: ParticleCloud, config: ResampleConfig | None = None, rng=None) -> ParticleCloud:
    """Liu-West resampling.

    Each new particle is drawn from the normal mixture with component means
    ``a*x_j + (1-a)*mean`` (``j`` chosen with probability ``w_j``) and common
    covariance ``(1-a^2) * cov``. This preserves the cloud's first two moments.
    Particles landing outside the model constraints are redrawn, then clamped.

    Random draws, in order: ``n`` uniforms for the ancestor indices, an
    ``(n, d)`` block of standard normals, then normals for any redraws.
    """
    config = config or ResampleConfig()
    if rng is None:
        raise InvalidArgumentError("resample needs an explicit random generator")
    n, d = cloud.locations.shape
    a = config.a
    mu = mean(cloud)
    factor = regularized_factor((1.0 - a * a) * cov(cloud))

    idx = _draw_indices(cloud.weights, n, rng)
    centers = a * cloud.locations[idx] + (1.0 - a) * mu
    z = rng.standard_normal((n, d))
    new = centers + z @ factor.T if factor is not None else centers.copy()

    model = cloud.model
    if model is not None and factor is not None:
        bad = ~model.are_valid(new)
        for _ in range(_MAX_REDRAWS):
            if not bad.any():
                break
            rows = np.flatnonzero(bad)
            new[rows] = centers[rows] + rng.standard_normal((rows.size, d)) @ factor.T
            bad[rows] = ~model.are_valid(new[rows])
        if bad.any():
            lo, hi = np.array(model.descriptor.parameter_constraints, dtype=float).T
            new[bad] = np.clip(new[bad], lo, hi)

    return ParticleCloud(np.full(n, 1.0 / n), new, model)


def cloud_rows(cloud: ParticleCloud) -> np.ndarray:
    """Snapshot layout: one row per particle, weight first, then the location."""
    return np.column_stack([cloud.weights, cloud.locations])


def write_cloud_csv(cloud: ParticleCloud, path):
    names = (
        list(cloud.model.descriptor.parameter_names)
        if cloud.model is not None
        else [f"x{j}" for j in range(cloud.dimension)]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["weight", *names])
        for row in cloud_rows(cloud):
            writer.writerow([repr(float(v)) for v in row])
