"""Independent reference computations used by the test suite.

Nothing here imports the package under test.
"""

import math

import mpmath
import numpy as np
from scipy import integrate


def known_t2_mp(d, omega, t, t2, dps=40):
    """Decaying-fringe probability evaluated in arbitrary precision."""
    with mpmath.workdps(dps):
        decay = mpmath.e ** (-mpmath.mpf(t) / t2) if t2 is not None else mpmath.mpf(1)
        p0 = decay * mpmath.cos(mpmath.mpf(omega) * t / 2) ** 2 + (1 - decay) / 2
        return float(p0 if d == 0 else 1 - p0)


def _symmetric_cos_transform(density, t):
    """``integral over the real line of cos(u t) density(u) du`` for an even density."""
    if t == 0:
        return 1.0
    half, _ = integrate.quad(density, 0.0, np.inf, weight="cos", wvar=t, limlst=200)
    return 2.0 * half


def gauss_marginal(d, mu, var, t):
    """Pr(d) averaged over omega ~ Normal(mu, var) by Fourier-weighted quadrature."""
    if var == 0:
        fringe = math.cos(mu * t)
    else:
        sd = math.sqrt(var)
        dens = lambda u: math.exp(-0.5 * (u / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        fringe = math.cos(mu * t) * _symmetric_cos_transform(dens, t)
    p0 = 0.5 * (1 + fringe)
    return p0 if d == 0 else 1 - p0


def gauss_marginal_direct(d, mu, var, t):
    """Same marginal by plain adaptive quadrature of cos^2 against the density."""
    sd = math.sqrt(var)
    f = lambda w: math.cos(w * t / 2) ** 2 * math.exp(-0.5 * ((w - mu) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    p0, _ = integrate.quad(f, mu - 14 * sd, mu + 14 * sd, limit=2000, epsabs=1e-13, epsrel=1e-12)
    return p0 if d == 0 else 1 - p0


def cauchy_marginal(d, omega0, gamma, t):
    """Pr(d) averaged over omega ~ Cauchy(omega0, gamma); the heavy tails are
    handled by the oscillatory-weight routine on the half line."""
    if gamma == 0:
        fringe = math.cos(omega0 * t)
    else:
        dens = lambda u: gamma / (math.pi * (u * u + gamma * gamma))
        fringe = math.cos(omega0 * t) * _symmetric_cos_transform(dens, t)
    p0 = 0.5 * (1 + fringe)
    return p0 if d == 0 else 1 - p0


def grid_posterior_mean(prior_mean, prior_sd, record, t2, n_grid=100_001, width=8.0):
    """Posterior mean of omega on a uniform grid for a record of (time, outcome)."""
    g = np.linspace(prior_mean - width * prior_sd, prior_mean + width * prior_sd, n_grid)
    logw = -0.5 * ((g - prior_mean) / prior_sd) ** 2
    for t, d in record:
        decay = 1.0 if t2 is None else math.exp(-t / t2)
        p0 = 0.5 * (1 + decay * np.cos(g * t))
        logw += np.log(p0 if d == 0 else 1 - p0)
    w = np.exp(logw - logw.max())
    return float(w @ g / w.sum())


def mutual_information(prior, lik):
    """I(D; X) in nats from a prior vector and a table ``lik[d, i] = Pr(d | x_i)``."""
    joint = lik * prior[None, :]
    pd = joint.sum(axis=1)
    total = 0.0
    for d in range(lik.shape[0]):
        for i in range(lik.shape[1]):
            if joint[d, i] > 0:
                total += joint[d, i] * math.log(joint[d, i] / (pd[d] * prior[i]))
    return total


def known_t2_bcrb(prior_mean, prior_sd, times, t2, lo=-0.5, hi=1.5):
    """Bound sequence for a fixed time schedule with expectations over the prior."""
    def fisher(w, t):
        e2 = math.exp(-2 * t / t2)
        return t * t * e2 * math.sin(w * t) ** 2 / (1 - e2 * math.cos(w * t) ** 2)

    dens = lambda w: math.exp(-0.5 * ((w - prior_mean) / prior_sd) ** 2) / (prior_sd * math.sqrt(2 * math.pi))
    j = 1.0 / prior_sd**2
    out = []
    for t in times:
        j += integrate.quad(lambda w: fisher(w, t) * dens(w), lo, hi, limit=2000, points=[prior_mean])[0]
        out.append(1.0 / j)
    return out
