"""
=====================================
Learning a Precession Frequency
=====================================
"""

# %%
# Setup
# -----
# A qubit precesses at an unknown frequency ``omega`` and dephases with a
# known time ``T2``. Each measurement after an evolution time ``t`` returns
# 0 with probability ``(1 + exp(-t/T2) cos(omega t)) / 2``. We start from a
# normal prior and let the particle filter pick the evolution times.

import math

import numpy as np

from hamlearn import (
    DesignConfig,
    GaussianPrior,
    KnownT2Model,
    ellipse_region,
    estimate_adaptive,
)

model = KnownT2Model(t2=100 * math.pi)
prior = GaussianPrior([0.5], [[0.01]])
rng = np.random.default_rng(2024)
true_omega = prior.sample(rng, 1)[0]

# %%
# Choosing experiments
# --------------------
# Thirty candidate times are drawn per experiment from an exponential
# distribution, each is polished by the local optimizer, and the candidate
# with the smallest expected posterior variance is run.

design = DesignConfig(
    n_guesses=30,
    utility_kind="negative_variance",
    optimizer_kind="gradient_local",
    heuristic_kind="exponential_time",
    heuristic_scale=100.0,
)

history = []
result = estimate_adaptive(
    model, design, 2000, prior, 60, rng=rng, true_params=true_omega,
    on_step=lambda step, before, after: history.append((step.time, step.outcome, after)),
)

for k in (1, 5, 10, 20, 40, 60):
    t, d, cloud = history[k - 1]
    region = ellipse_region(cloud, 3)
    print(f"N={k:3d}  t={t:8.2f}  d={d}  estimate={region.mean[0]:.6f}  "
          f"3-sigma half width={3 * math.sqrt(region.covariance[0, 0]):.2e}")

# %%
# Result
# ------
# The final estimate and its Z = 3 interval. The truth should sit inside.

final = ellipse_region(result.cloud, 3)
print(f"true omega  {true_omega[0]:.6f}")
print(f"estimate    {result.estimate[0]:.6f}")
print(f"inside Z=3 region: {bool(final.contains(true_omega)[0])}")
print(f"likelihood calls: {model.likelihood_calls}")
