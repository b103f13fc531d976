"""Fisher information, Bayesian information and the iterated Bayesian
Cramer-Rao bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .models import _as_time
from .smc import GaussianPrior, ParticleCloud

__all__ = [
    "InfoMatrix",
    "fisher_information",
    "fisher_info",
    "bayes_info",
    "prior_info",
    "bcrb_step",
    "bound_trace",
]

_FD_REL_STEP = 1e-5
_FD_ABS_FLOOR = 1e-8
_EDGE_PROB = 1e-10
_SINGULAR_RCOND = 1e-14


@dataclass
class InfoMatrix:
    j: np.ndarray
    n_experiments_absorbed: int = 0
    # Set when some outcome had probability ~0 but a non-vanishing gradient.
    singular_contribution: bool = False

    def __post_init__(self):
        self.j = np.atleast_2d(np.asarray(self.j, dtype=float))
        self.j = 0.5 * (self.j + self.j.T)

    def inverse(self):
        """``j^{-1}``, or ``None`` when ``j`` is numerically singular."""
        evals = np.linalg.eigvalsh(self.j)
        if evals.max() <= 0 or evals.min() <= _SINGULAR_RCOND * evals.max():
            return None
        inv = np.linalg.inv(self.j)
        return 0.5 * (inv + inv.T)


def fisher_information(model, locations, time):
    """Per-particle Fisher information, shape ``(n, d, d)``, plus a flag array.

    Gradients of every outcome probability are central differences with
    per-coordinate step ``max(1e-5 |x_j|, 1e-8)``; a one-sided difference is
    used where a probe would leave the parameter domain.
    """
    x = np.atleast_2d(np.asarray(locations, dtype=float))
    n, d = x.shape
    t = _as_time(time)
    h = np.maximum(_FD_REL_STEP * np.abs(x), _FD_ABS_FLOOR)

    plus = np.repeat(x[None], d, axis=0)
    minus = plus.copy()
    for j in range(d):
        plus[j, :, j] += h[:, j]
        minus[j, :, j] -= h[:, j]
    plus_ok = model.are_valid(plus.reshape(-1, d)).reshape(d, n)
    minus_ok = model.are_valid(minus.reshape(-1, d)).reshape(d, n)
    plus[~plus_ok] = np.broadcast_to(x, plus.shape)[~plus_ok]
    minus[~minus_ok] = np.broadcast_to(x, minus.shape)[~minus_ok]
    span = (plus_ok + minus_ok.astype(float)) * h.T  # (d, n)

    points = np.concatenate([x, plus.reshape(-1, d), minus.reshape(-1, d)])
    outcomes = np.arange(model.n_outcomes)
    probs = model.likelihood(outcomes, points, [t])[:, :, 0]  # (D, (2d+1) n)
    p = probs[:, :n]
    p_plus = probs[:, n : n + d * n].reshape(-1, d, n)
    p_minus = probs[:, n + d * n :].reshape(-1, d, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = np.where(span > 0, (p_plus - p_minus) / span, 0.0)  # (D, d, n)
    grad = np.transpose(grad, (0, 2, 1))  # (D, n, d)

    edge = p < _EDGE_PROB
    vanishing = np.linalg.norm(grad, axis=2) <= _FD_ABS_FLOOR
    flagged = edge & ~vanishing
    weight = np.where(edge & vanishing, 0.0, 1.0 / np.maximum(p, _EDGE_PROB))
    info = np.einsum("Dn,Dni,Dnj->nij", weight, grad, grad)
    return info, flagged.any(axis=0)


def fisher_info(model, x, control) -> InfoMatrix:
    info, flagged = fisher_information(model, np.asarray(x, dtype=float)[None, :], control)
    return InfoMatrix(info[0], 1, bool(flagged[0]))


def bayes_info(model, cloud: ParticleCloud, control) -> InfoMatrix:
    """Expected Fisher information over the particle cloud."""
    info, flagged = fisher_information(model, cloud.locations, control)
    return InfoMatrix(np.einsum("n,nij->ij", cloud.weights, info), 1, bool(flagged.any()))


def prior_info(prior: GaussianPrior) -> InfoMatrix:
    """Prior information ``E[grad log pi grad log pi^T]``, i.e. the inverse prior covariance."""
    sigma = prior.cov
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise InvalidArgumentError("prior covariance is singular; prior information is undefined") from None
    return InfoMatrix(np.linalg.inv(sigma), 0)


def bcrb_step(j_prev: InfoMatrix, model, cloud, control):
    """Absorb one experiment: ``J_next = J(cloud; c) + J_prev``.

    Returns ``(J_next, bound)`` where ``bound = J_next^{-1}`` or ``None`` if
    ``J_next`` is singular.
    """
    added = bayes_info(model, cloud, control)
    j_next = InfoMatrix(
        j_prev.j + added.j,
        j_prev.n_experiments_absorbed + 1,
        j_prev.singular_contribution or added.singular_contribution,
    )
    return j_next, j_next.inverse()


def bound_trace(bound, q) -> float | None:
    """``Tr(Q B)`` for a bound matrix ``B``; ``None`` passes through."""
    if bound is None:
        return None
    return float(np.trace(np.atleast_2d(q) @ bound))
