"""Covariance-ellipse credible regions built from a particle cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, gammaln

from .errors import InvalidArgumentError, UnsupportedModelError
from .smc import ParticleCloud, cov, mean, mean_fn

__all__ = [
    "RegionEstimate",
    "ellipse_region",
    "region_mass",
    "expected_normal_mass",
    "region_volume",
    "hyper_to_param_region",
]

# Eigenvalues at or below this fraction of trace/d count as outside the support.
_REL_REG = 1e-12


@dataclass
class RegionEstimate:
    """Ellipsoid ``(x - mean)^T cov^{-1} (x - mean) <= z_score^2``.

    A singular covariance gives a degenerate region lying in the affine span
    of its nonzero eigen-directions.
    """

    mean: np.ndarray
    covariance: np.ndarray
    z_score: float

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if not self.z_score > 0:
            raise InvalidArgumentError(f"z_score must be positive, got {self.z_score!r}")
        d = self.mean.size
        if self.covariance.shape != (d, d):
            raise InvalidArgumentError("covariance shape does not match the mean")
        sym = 0.5 * (self.covariance + self.covariance.T)
        evals, evecs = np.linalg.eigh(sym)
        scale = max(float(np.trace(sym)), 0.0) / d
        if evals.min() < -1e-10 * max(scale, 1e-300):
            raise InvalidArgumentError("covariance is not positive semidefinite")
        self._tol = _REL_REG * scale
        self._evals = np.clip(evals, 0.0, None)
        self._evecs = evecs
        self._support = self._evals > self._tol

    @property
    def dimension(self) -> int:
        return self.mean.size

    @property
    def degenerate(self) -> bool:
        return not self._support.all()

    def contains(self, points) -> np.ndarray:
        """Inclusive membership test for an ``(m, d)`` array (or a single point)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dimension and self.dimension == 1:
            pts = pts.T
        proj = (pts - self.mean) @ self._evecs
        on = self._support
        dist2 = np.sum(proj[:, on] ** 2 / self._evals[on], axis=1)
        # Off-support directions must vanish, up to the regularization level.
        off = np.sqrt(np.sum(proj[:, ~on] ** 2, axis=1))
        return (dist2 <= self.z_score**2) & (off <= self.z_score * math.sqrt(self._tol))

    def volume(self) -> float:
        return region_volume(self)

    def mass(self, cloud: ParticleCloud) -> float:
        return region_mass(cloud, self)


def ellipse_region(cloud: ParticleCloud, z) -> RegionEstimate:
    return RegionEstimate(mean(cloud), cov(cloud), float(z))


def region_mass(cloud: ParticleCloud, region: RegionEstimate) -> float:
    """Total particle weight inside ``region``."""
    return float(mean_fn(cloud, lambda x: region.contains(x).astype(float), vectorized=True))


def expected_normal_mass(d: int, z: float) -> float:
    """``erf(z / sqrt 2) ** d``: the per-axis normal mass within ``z`` standard deviations, raised to ``d``."""
    if d < 1 or not z > 0:
        raise InvalidArgumentError(f"need d >= 1 and z > 0, got d={d!r}, z={z!r}")
    return float(erf(z / math.sqrt(2.0)) ** d)


def region_volume(region: RegionEstimate) -> float:
    """Volume of the ellipsoid: ``z^d pi^{d/2} / Gamma(d/2 + 1) sqrt(det cov)``."""
    d = region.dimension
    if region.degenerate:
        return 0.0
    log_vol = (
        d * math.log(region.z_score)
        + 0.5 * d * math.log(math.pi)
        - gammaln(0.5 * d + 1.0)
        + 0.5 * float(np.sum(np.log(region._evals)))
    )
    return math.exp(log_vol)


def hyper_to_param_region(hyper_cloud: ParticleCloud, model, z) -> RegionEstimate:
    """Region over the intermediate parameters implied by a hyperparameter posterior.

    Uses the laws of total expectation and total covariance: the mean is the
    average conditional mean, and the covariance is the average conditional
    covariance plus the covariance of the conditional means.
    """
    if not hasattr(model, "intermediate_mean"):
        raise UnsupportedModelError(f"model {getattr(model, 'name', model)!r} has no hyperparameters")
    cond_mean = model.intermediate_mean(hyper_cloud.locations)  # (n, k)
    cond_cov = model.intermediate_cov(hyper_cloud.locations)  # (n, k, k)
    m = mean_fn(hyper_cloud, lambda _: cond_mean, vectorized=True)
    expected_cov = mean_fn(hyper_cloud, lambda _: cond_cov, vectorized=True)
    centered = cond_mean - m
    spread = mean_fn(hyper_cloud, lambda _: np.einsum("ni,nj->nij", centered, centered), vectorized=True)
    total = expected_cov + spread
    return RegionEstimate(m, 0.5 * (total + total.T), float(z))
