"""Qubit precession models with closed-form two-outcome likelihoods.

Every model here has the form::

    Pr(0 | x; t) = (1 + v(x, t)) / 2,    Pr(1 | x; t) = (1 - v(x, t)) / 2

where ``v`` is the measurement visibility (contrast times a cosine). The
models differ only in how ``v`` depends on the parameter vector ``x``.

The module-level ``likelihood_*`` functions evaluate a single probability and
are meant for direct use and testing. Inference code goes through
:meth:`Model.likelihood`, which is vectorized and counts every
(outcome, particle, control) evaluation.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, UnsupportedModelError

__all__ = [
    "ExperimentControl",
    "ModelDescriptor",
    "Model",
    "KnownT2Model",
    "UnknownT2Model",
    "GaussianHyperModel",
    "LorentzHyperModel",
    "MODELS",
    "make_model",
    "likelihood_known_t2",
    "likelihood_unknown_t2",
    "likelihood_gauss_hyper",
    "likelihood_lorentz_hyper",
    "simulate_outcome",
    "likelihood_call_counter",
]


@dataclass(frozen=True)
class ExperimentControl:
    """Settings of a single measurement: the free evolution time."""

    time: float

    def __post_init__(self):
        t = float(self.time)
        if not math.isfinite(t) or t < 0:
            raise InvalidArgumentError(f"evolution time must be finite and >= 0, got {self.time!r}")
        object.__setattr__(self, "time", t)


@dataclass(frozen=True)
class ModelDescriptor:
    dimension: int
    n_outcomes: int
    parameter_names: tuple
    parameter_constraints: tuple  # one (lower, upper) pair per parameter

    def __post_init__(self):
        if not (self.dimension == len(self.parameter_names) == len(self.parameter_constraints)):
            raise InvalidArgumentError("descriptor dimension does not match names/constraints")


def _as_time(control) -> float:
    if isinstance(control, ExperimentControl):
        return control.time
    return ExperimentControl(control).time


def _check_outcome(d, n_outcomes=2) -> int:
    if int(d) != d or not 0 <= d < n_outcomes:
        raise InvalidArgumentError(f"outcome must be an integer in [0, {n_outcomes}), got {d!r}")
    return int(d)


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise InvalidArgumentError(f"{name} must be finite, got {v!r}")


def _from_visibility(d: int, v: float) -> float:
    return 0.5 * (1.0 + v) if d == 0 else 0.5 * (1.0 - v)


# -- scalar likelihoods -------------------------------------------------------


def likelihood_known_t2(d, omega, t, t2=None) -> float:
    """Pr(d | omega; t) for a qubit precessing at ``omega`` with dephasing time ``t2``.

    ``t2=None`` (or ``math.inf``) means no dephasing.
    """
    d = _check_outcome(d)
    _check_finite(omega=omega, t=t)
    if t < 0:
        raise InvalidArgumentError(f"t must be >= 0, got {t!r}")
    if t2 is None or t2 == math.inf:
        contrast = 1.0
    else:
        if not (t2 > 0) or math.isnan(t2):
            raise InvalidArgumentError(f"t2 must be positive, got {t2!r}")
        contrast = math.exp(-t / t2)
    return _from_visibility(d, contrast * math.cos(omega * t))


def likelihood_unknown_t2(d, params, t) -> float:
    """Pr(d | omega, gamma; t) with ``params = (omega, gamma)`` and gamma = 1/T2."""
    omega, gamma = params
    _check_finite(omega=omega, gamma=gamma, t=t)
    if gamma < 0:
        raise InvalidArgumentError(f"decay rate must be >= 0, got {gamma!r}")
    return likelihood_known_t2(d, omega, t, None if gamma == 0 else 1.0 / gamma)


def likelihood_gauss_hyper(d, hyper, t) -> float:
    """Pr(d | mu, sigma^2; t) with omega ~ Normal(mu, sigma^2) marginalized out."""
    d = _check_outcome(d)
    mu, var = hyper
    _check_finite(mu=mu, var=var, t=t)
    if var < 0:
        raise InvalidArgumentError(f"variance must be >= 0, got {var!r}")
    if t < 0:
        raise InvalidArgumentError(f"t must be >= 0, got {t!r}")
    return _from_visibility(d, math.exp(-0.5 * var * t * t) * math.cos(mu * t))


def likelihood_lorentz_hyper(d, hyper, t) -> float:
    """Pr(d | omega0, gamma; t) with omega ~ Cauchy(omega0, gamma) marginalized out."""
    d = _check_outcome(d)
    omega0, gamma = hyper
    _check_finite(omega0=omega0, gamma=gamma, t=t)
    if gamma < 0:
        raise InvalidArgumentError(f"scale must be >= 0, got {gamma!r}")
    if t < 0:
        raise InvalidArgumentError(f"t must be >= 0, got {t!r}")
    # The Cauchy average of the fringe is a decaying fringe with rate gamma.
    return likelihood_unknown_t2(d, (omega0, gamma), t)


# -- vectorized models ----------------------------------------------------------


class Model:
    """Base class for two-outcome models.

    Subclasses set ``descriptor`` and implement :meth:`visibility`, which maps
    an ``(n, d)`` array of parameter vectors and an ``(m,)`` array of times to
    an ``(n, m)`` array of visibilities.
    """

    descriptor: ModelDescriptor
    name = "model"

    def __init__(self):
        self._calls = 0
        self._lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return self.descriptor.dimension

    @property
    def n_outcomes(self) -> int:
        return self.descriptor.n_outcomes

    @property
    def likelihood_calls(self) -> int:
        return self._calls

    def reset_likelihood_calls(self):
        with self._lock:
            self._calls = 0

    def _count(self, k: int):
        with self._lock:
            self._calls += k

    def visibility(self, modelparams, times):
        raise NotImplementedError

    def are_valid(self, modelparams) -> np.ndarray:
        """Boolean mask of rows lying inside the parameter constraints."""
        x = np.atleast_2d(np.asarray(modelparams, dtype=float))
        ok = np.all(np.isfinite(x), axis=1)
        for j, (lo, hi) in enumerate(self.descriptor.parameter_constraints):
            ok &= (x[:, j] >= lo) & (x[:, j] <= hi)
        return ok

    def likelihood(self, outcomes, modelparams, times) -> np.ndarray:
        """Likelihood table of shape ``(len(outcomes), n_particles, n_times)``.

        Adds ``len(outcomes) * n_particles * n_times`` to the call counter.
        """
        outcomes = np.atleast_1d(np.asarray(outcomes))
        if outcomes.size and (np.any(outcomes < 0) or np.any(outcomes >= self.n_outcomes)):
            raise InvalidArgumentError(f"outcomes out of range: {outcomes}")
        x = np.atleast_2d(np.asarray(modelparams, dtype=float))
        if x.shape[1] != self.dimension:
            raise InvalidArgumentError(
                f"expected parameter vectors of length {self.dimension}, got {x.shape[1]}"
            )
        t = np.atleast_1d(np.asarray(times, dtype=float))
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise InvalidArgumentError("times must be finite and >= 0")
        if not np.all(self.are_valid(x)):
            raise InvalidArgumentError(f"parameters outside the domain of model {self.name!r}")

        v = self.visibility(x, t)
        self._count(outcomes.size * v.size)
        signs = np.where(outcomes == 0, 1.0, -1.0)
        return 0.5 * (1.0 + signs[:, None, None] * v[None, :, :])

    def simulate_outcome(self, true_params, control, rng) -> int:
        """Draw one outcome; consumes exactly one uniform variate from ``rng``.

        The draw stands in for running the physical experiment, so it is not
        added to the likelihood-call counter.
        """
        x = np.asarray(true_params, dtype=float)[None, :]
        if x.shape[1] != self.dimension or not self.are_valid(x)[0]:
            raise InvalidArgumentError(f"true parameters {true_params!r} outside the model domain")
        t = np.array([_as_time(control)])
        p0 = 0.5 * (1.0 + self.visibility(x, t)[0, 0])
        return 0 if rng.random() < p0 else 1


def _decaying_cosine(rate, freq, times):
    return np.exp(-np.outer(rate, times)) * np.cos(np.outer(freq, times))


class KnownT2Model(Model):
    """Single unknown precession frequency with a fixed, known dephasing time."""

    name = "known_t2"
    descriptor = ModelDescriptor(1, 2, ("omega",), ((-np.inf, np.inf),))

    def __init__(self, t2=None):
        super().__init__()
        if t2 is None or t2 == math.inf:
            self.no_decay = True
            self.t2 = None
        else:
            t2 = float(t2)
            if not (t2 > 0) or not math.isfinite(t2):
                raise InvalidArgumentError(f"t2 must be positive, got {t2!r}")
            self.no_decay = False
            self.t2 = t2

    def visibility(self, modelparams, times):
        omega = modelparams[:, 0]
        if self.no_decay:
            return np.cos(np.outer(omega, times))
        return np.exp(-times / self.t2)[None, :] * np.cos(np.outer(omega, times))


class UnknownT2Model(Model):
    """Unknown frequency and unknown dephasing rate, ``x = (omega, 1/T2)``."""

    name = "unknown_t2"
    descriptor = ModelDescriptor(2, 2, ("omega", "gamma"), ((-np.inf, np.inf), (0.0, np.inf)))

    def visibility(self, modelparams, times):
        return _decaying_cosine(modelparams[:, 1], modelparams[:, 0], times)


class GaussianHyperModel(Model):
    """Frequency drawn per shot from Normal(mu, sigma^2); ``y = (mu, sigma^2)``."""

    name = "gauss_hyper"
    descriptor = ModelDescriptor(2, 2, ("mu", "sigma2"), ((-np.inf, np.inf), (0.0, np.inf)))

    def visibility(self, modelparams, times):
        mu, var = modelparams[:, 0], modelparams[:, 1]
        return np.exp(-0.5 * np.outer(var, times * times)) * np.cos(np.outer(mu, times))

    def intermediate_mean(self, hyper):
        return np.atleast_2d(hyper)[:, :1]

    def intermediate_cov(self, hyper):
        return np.atleast_2d(hyper)[:, 1][:, None, None]


class LorentzHyperModel(Model):
    """Frequency drawn per shot from Cauchy(omega0, gamma); ``y = (omega0, gamma)``."""

    name = "lorentz_hyper"
    descriptor = ModelDescriptor(2, 2, ("omega0", "gamma"), ((-np.inf, np.inf), (0.0, np.inf)))

    def visibility(self, modelparams, times):
        return _decaying_cosine(modelparams[:, 1], modelparams[:, 0], times)

    def intermediate_mean(self, hyper):
        raise UnsupportedModelError("a Cauchy-distributed frequency has no mean")

    def intermediate_cov(self, hyper):
        raise UnsupportedModelError("a Cauchy-distributed frequency has no variance")


MODELS = {
    cls.name: cls for cls in (KnownT2Model, UnknownT2Model, GaussianHyperModel, LorentzHyperModel)
}


def make_model(model_id: str, **params) -> Model:
    try:
        cls = MODELS[model_id]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown model id {model_id!r}; valid ids: {', '.join(sorted(MODELS))}"
        ) from None
    return cls(**params)


def simulate_outcome(model: Model, true_params, control, rng) -> int:
    return model.simulate_outcome(true_params, control, rng)


def likelihood_call_counter(model: Model) -> int:
    return model.likelihood_calls
