"""Adaptive experiment design: utilities, reduced-particle approximation,
guess heuristics, local optimization of the evolution time, and the full
adaptive estimation loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import entr

from .errors import InvalidArgumentError, PosteriorCollapseError
from .models import ExperimentControl, _as_time
from .smc import (
    ParticleCloud,
    ResampleConfig,
    effective_sample_size,
    init_cloud,
    mean,
    resample,
    update,
)

__all__ = [
    "UTILITY_KINDS",
    "OPTIMIZER_KINDS",
    "HEURISTIC_KINDS",
    "DesignConfig",
    "scale_matrix",
    "util_nv",
    "util_ig",
    "nv_utilities",
    "ig_utilities",
    "reapprox",
    "guess_control",
    "guess_times",
    "optimize_local",
    "DesignStep",
    "AdaptiveResult",
    "estimate_adaptive",
]

UTILITY_KINDS = ("negative_variance", "information_gain")
OPTIMIZER_KINDS = ("null", "gradient_local")
HEURISTIC_KINDS = ("uniform_linear", "exponential_time", "geometric_time")
GUESS_INDEX_KINDS = ("experiment", "guess")

_FD_REL_STEP = 1e-4
_MAX_ITERATIONS = 50
_REL_IMPROVEMENT = 1e-6
_MAX_LOG_STEP = 1.0


@dataclass(frozen=True)
class DesignConfig:
    n_guesses: int = 1
    approx_ratio: float = 1.0
    utility_kind: str = "negative_variance"
    optimizer_kind: str = "null"
    heuristic_kind: str = "exponential_time"
    heuristic_scale: float = 1.0
    # What the deterministic heuristics count: "experiment" gives every guess
    # of experiment k the same time; "guess" spreads guess j over j = 1..n_guesses.
    guess_index: str = "experiment"
    # Spread of the hypothetical posterior taken with prior weights (the
    # literal pseudocode reading) instead of posterior weights.
    nv_prior_weights: bool = False

    def __post_init__(self):
        if int(self.n_guesses) != self.n_guesses or self.n_guesses < 1:
            raise InvalidArgumentError(f"n_guesses must be a positive integer, got {self.n_guesses!r}")
        if not 0.0 < self.approx_ratio <= 1.0:
            raise InvalidArgumentError(f"approx_ratio must lie in (0, 1], got {self.approx_ratio!r}")
        for value, allowed, what in (
            (self.utility_kind, UTILITY_KINDS, "utility"),
            (self.optimizer_kind, OPTIMIZER_KINDS, "optimizer"),
            (self.heuristic_kind, HEURISTIC_KINDS, "heuristic"),
        ):
            if value not in allowed:
                raise InvalidArgumentError(f"unknown {what} kind {value!r}; valid: {', '.join(allowed)}")
        if self.guess_index not in GUESS_INDEX_KINDS:
            raise InvalidArgumentError(
                f"unknown guess_index {self.guess_index!r}; valid: {', '.join(GUESS_INDEX_KINDS)}"
            )
        if not self.heuristic_scale > 0 or not math.isfinite(self.heuristic_scale):
            raise InvalidArgumentError(f"heuristic_scale must be positive, got {self.heuristic_scale!r}")

    def check_particles(self, n: int):
        if math.floor(n * self.approx_ratio) < 1:
            raise InvalidArgumentError(f"approx_ratio={self.approx_ratio} keeps no particles out of {n}")


def scale_matrix(q, d: int) -> np.ndarray:
    """Validate a quadratic-loss scale matrix (symmetric PSD, ``d x d``)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if q.shape == (1, d) and d > 1:
        q = np.diag(q[0])
    if q.shape != (d, d):
        raise InvalidArgumentError(f"scale matrix must be {d}x{d}, got {q.shape}")
    if np.abs(q - q.T).max() > 1e-12 * max(1.0, np.abs(q).max()):
        raise InvalidArgumentError("scale matrix is not symmetric")
    if np.linalg.eigvalsh(q).min() < -1e-12 * max(1.0, np.abs(q).max()):
        raise InvalidArgumentError("scale matrix is not positive semidefinite")
    return q


# -- utilities -----------------------------------------------------------------


def _outcome_table(cloud: ParticleCloud, times):
    # Pr(D | x_i, t_k) for every outcome, computed once per candidate time and
    # shared by the marginal and the hypothetical posterior.
    outcomes = np.arange(cloud.model.n_outcomes)
    return cloud.model.likelihood(outcomes, cloud.locations, times)


def nv_utilities(cloud: ParticleCloud, times, q, prior_weights=False) -> np.ndarray:
    """Negative expected posterior quadratic spread for each time in ``times``.

    Works with unnormalized weights; the result then scales with the total weight.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    q = np.atleast_2d(q)
    table = _outcome_table(cloud, times)
    w = cloud.weights
    total = w.sum()
    # Centering on the current mean keeps the E[x'Qx] - mu'Q mu difference well conditioned.
    x = cloud.locations - (w @ cloud.locations) / total
    quad = np.einsum("ij,jk,ik->i", x, q, x)
    prior_quad = w @ quad
    prior_first = w @ x

    utility = np.zeros(times.size)
    for lik in table:
        joint = w[:, None] * lik
        marginal = joint.sum(axis=0)
        first = joint.T @ x
        ok = marginal > 0
        mu = np.zeros_like(first)
        mu[ok] = first[ok] / marginal[ok, None]
        mu_q_mu = np.einsum("kj,jl,kl->k", mu, q, mu)
        if prior_weights:
            spread = prior_quad / total - 2.0 * (mu @ q @ prior_first) / total + mu_q_mu
        else:
            second = joint.T @ quad
            spread = np.zeros(times.size)
            spread[ok] = second[ok] / marginal[ok] - mu_q_mu[ok]
        spread = np.where(ok, np.maximum(spread, 0.0), 0.0)
        utility -= marginal * spread
    return utility


def ig_utilities(cloud: ParticleCloud, times) -> np.ndarray:
    """Expected information gain (nats) for each time in ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    table = _outcome_table(cloud, times)
    w = cloud.weights
    marginal = np.einsum("i,dik->dk", w, table)
    # entr(p) = -p log p with entr(0) = 0, so no clamping of probabilities is needed.
    gain = entr(marginal).sum(axis=0) - np.einsum("i,dik->k", w, entr(table))
    # Mutual information is nonnegative; remove rounding residue only.
    return np.maximum(gain, 0.0)


def util_nv(cloud, control, q, prior_weights=False) -> float:
    q = scale_matrix(q, cloud.dimension)
    return float(nv_utilities(cloud, [_as_time(control)], q, prior_weights)[0])


def util_ig(cloud, control) -> float:
    return float(ig_utilities(cloud, [_as_time(control)])[0])


def _batch_utility(config: DesignConfig, q):
    if config.utility_kind == "information_gain":
        return ig_utilities
    return lambda cloud, times: nv_utilities(cloud, times, q, config.nv_prior_weights)


# -- reduced particle approximation ---------------------------------------------


def reapprox(cloud: ParticleCloud, approx_ratio, rng, renormalize=True) -> ParticleCloud:
    """Keep the ``floor(n * approx_ratio)`` heaviest particles.

    Particles are shuffled before a stable sort so that ties are broken at
    random. The kept weights are renormalized unless ``renormalize=False``.
    """
    n = cloud.n_particles
    keep = math.floor(n * approx_ratio)
    if keep < 1 or approx_ratio > 1:
        raise InvalidArgumentError(f"approx_ratio={approx_ratio} is invalid for {n} particles")
    perm = rng.permutation(n)
    w = cloud.weights[perm]
    order = np.argsort(-w, kind="stable")[:keep]
    kept_w = w[order]
    kept_x = cloud.locations[perm][order]
    if renormalize:
        kept_w = kept_w / kept_w.sum()
        return ParticleCloud(kept_w, kept_x, cloud.model)
    reduced = ParticleCloud.__new__(ParticleCloud)
    reduced.weights, reduced.locations, reduced.model = kept_w, kept_x, cloud.model
    return reduced


# -- guess heuristics -----------------------------------------------------------


def guess_times(kind, k, rng, scale=1.0, size=1, index="experiment") -> np.ndarray:
    """``size`` candidate times for experiment number ``k`` (counting from 1).

    The deterministic heuristics are functions of the experiment number, or
    with ``index="guess"`` of the guess number ``1..size``. Only
    ``exponential_time`` draws from ``rng`` (``size`` exponentials).
    """
    if not scale > 0 or not math.isfinite(scale):
        raise InvalidArgumentError(f"heuristic scale must be positive, got {scale!r}")
    if k < 1:
        raise InvalidArgumentError(f"experiment index must be >= 1, got {k!r}")
    if index not in GUESS_INDEX_KINDS:
        raise InvalidArgumentError(f"unknown guess index {index!r}")
    counter = np.arange(1, size + 1, dtype=float) if index == "guess" else np.full(size, float(k))
    if kind == "uniform_linear":
        return 2.0 * counter * math.pi / 3.0 * scale
    if kind == "geometric_time":
        return (9.0 / 8.0) ** counter * scale
    if kind == "exponential_time":
        return rng.exponential(scale, size)
    raise InvalidArgumentError(f"unknown heuristic kind {kind!r}; valid: {', '.join(HEURISTIC_KINDS)}")


def guess_control(kind, k, rng, scale=1.0) -> ExperimentControl:
    return ExperimentControl(float(guess_times(kind, k, rng, scale, 1)[0]))


# -- local optimization ----------------------------------------------------------


def _ascend(f, t0):
    """Batched Newton ascent on log t with finite-difference derivatives.

    ``f`` maps an array of times to an array of utilities. Each start point
    is optimized independently; only improving steps are accepted.
    """
    s = np.log(np.asarray(t0, dtype=float))
    u = np.asarray(f(np.exp(s)), dtype=float)
    start_ok = np.isfinite(u)
    u = np.where(start_ok, u, -np.inf)
    damping = np.ones_like(s)
    active = start_ok.copy()

    for _ in range(_MAX_ITERATIONS):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        sa, ua = s[idx], u[idx]
        h = _FD_REL_STEP * np.maximum(1.0, np.abs(sa))
        probes = np.asarray(f(np.exp(np.concatenate([sa + h, sa - h]))), dtype=float)
        up, down = probes[: idx.size], probes[idx.size :]
        grad = (up - down) / (2 * h)
        curv = (up - 2 * ua + down) / (h * h)

        flat = ~np.isfinite(grad) | (grad == 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(curv < 0, -grad / curv, np.sign(grad) * 0.5)
        step = np.clip(np.nan_to_num(step) * damping[idx], -_MAX_LOG_STEP, _MAX_LOG_STEP)
        trial = sa + step
        ut = np.asarray(f(np.exp(trial)), dtype=float)

        better = np.isfinite(ut) & (ut > ua) & ~flat
        gain = np.where(better, ut - ua, 0.0)
        s[idx[better]] = trial[better]
        u[idx[better]] = ut[better]
        damping[idx[~better]] *= 0.25
        done = flat | (better & (gain <= _REL_IMPROVEMENT * np.abs(ua))) | (damping[idx] < 1e-6)
        active[idx[done]] = False

    t = np.exp(s)
    t[~start_ok] = np.asarray(t0, dtype=float)[~start_ok]
    return t, u


def _optimize_times(utility, cloud, t0, kind):
    t0 = np.asarray(t0, dtype=float)
    uniq, inverse = np.unique(t0, return_inverse=True)
    if kind == "null":
        t_best, u_best = uniq, np.asarray(utility(cloud, uniq), dtype=float)
    elif kind == "gradient_local":
        positive = uniq > 0
        t_best = uniq.copy()
        u_best = np.empty(uniq.size)
        if (~positive).any():
            u_best[~positive] = utility(cloud, uniq[~positive])
        if positive.any():
            t_best[positive], u_best[positive] = _ascend(lambda t: utility(cloud, t), uniq[positive])
    else:
        raise InvalidArgumentError(f"unknown optimizer kind {kind!r}; valid: {', '.join(OPTIMIZER_KINDS)}")
    # Identical guesses share one optimization; results are mapped back per guess.
    return t_best[inverse], u_best[inverse]


def optimize_local(utility, c0, cloud, kind="gradient_local"):
    """Locally maximize ``utility(cloud, times) -> utilities`` starting at ``c0``.

    Returns ``(ExperimentControl, utility value)``. The ``null`` optimizer
    evaluates the utility at ``c0`` only.
    """
    t, u = _optimize_times(utility, cloud, [_as_time(c0)], kind)
    return ExperimentControl(float(t[0])), float(u[0])


# -- adaptive loop ----------------------------------------------------------------


@dataclass
class DesignStep:
    index: int
    time: float
    outcome: int
    utility: float
    resampled: bool
    likelihood_calls: int


@dataclass
class AdaptiveResult:
    estimate: np.ndarray
    cloud: ParticleCloud
    steps: list = field(default_factory=list)
    collapsed: bool = False
    collapse: PosteriorCollapseError | None = None


def choose_experiment(cloud, k, config: DesignConfig, q, rng):
    """Pick the control for experiment ``k``; returns ``(control, utility)``.

    Random draws, in order: the reapprox permutation (only when
    ``approx_ratio < 1``), then the guess times.
    """
    reduced = reapprox(cloud, config.approx_ratio, rng) if config.approx_ratio != 1 else cloud
    guesses = guess_times(
        config.heuristic_kind, k, rng, config.heuristic_scale, config.n_guesses, config.guess_index
    )
    times, utils = _optimize_times(_batch_utility(config, q), reduced, guesses, config.optimizer_kind)
    best = int(np.argmax(utils))
    return ExperimentControl(float(times[best])), float(utils[best])


def estimate_adaptive(
    model,
    config: DesignConfig,
    n,
    prior,
    n_experiments,
    resample_cfg: ResampleConfig | None = None,
    rng=None,
    true_params=None,
    outcome_source=None,
    q=None,
    on_step=None,
    initial_cloud=None,
) -> AdaptiveResult:
    """Run ``n_experiments`` rounds of design, measurement, update and resampling.

    Outcomes come from ``outcome_source(control)`` when given, otherwise they
    are simulated from ``true_params``. ``on_step(step, before, after)`` is
    called after every experiment with the clouds before the update and after
    any resampling.

    Per experiment the random stream is consumed in a fixed order: reapprox
    permutation, guesses, simulated outcome (one uniform), resampling.
    A posterior collapse ends the run early with ``collapsed=True``.
    """
    if rng is None:
        raise InvalidArgumentError("estimate_adaptive needs an explicit random generator")
    if outcome_source is None and true_params is None:
        raise InvalidArgumentError("need either true_params or an outcome_source")
    resample_cfg = resample_cfg or ResampleConfig()
    cloud = initial_cloud if initial_cloud is not None else init_cloud(n, prior, rng, model)
    config.check_particles(cloud.n_particles)
    q = scale_matrix(np.eye(model.dimension) if q is None else q, model.dimension)

    steps = []
    for k in range(1, n_experiments + 1):
        control, utility = choose_experiment(cloud, k, config, q, rng)
        if outcome_source is not None:
            outcome = int(outcome_source(control))
        else:
            outcome = model.simulate_outcome(true_params, control, rng)
        before = cloud
        try:
            cloud = update(cloud, outcome, control)
        except PosteriorCollapseError as exc:
            return AdaptiveResult(mean(before), before, steps, True, exc)
        resampled = effective_sample_size(cloud) < resample_cfg.resample_threshold * cloud.n_particles
        if resampled:
            cloud = resample(cloud, resample_cfg, rng)
        step = DesignStep(k, control.time, outcome, utility, resampled, model.likelihood_calls)
        steps.append(step)
        if on_step is not None:
            on_step(step, before, cloud)
    return AdaptiveResult(mean(cloud), cloud, steps)
