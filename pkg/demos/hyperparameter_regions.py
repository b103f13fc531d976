"""
===========================================
Regions for a Fluctuating Frequency
===========================================
"""

# %%
# Hyperparameters
# ---------------
# If the frequency is redrawn for every shot from ``Normal(mu, sigma2)``,
# the outcome statistics depend only on ``(mu, sigma2)``. We learn those two
# hyperparameters, then translate the result into a region for the
# frequency itself.

import numpy as np

from hamlearn import (
    DesignConfig,
    GaussianHyperModel,
    GaussianPrior,
    estimate_adaptive,
    hyper_to_param_region,
)

model = GaussianHyperModel()
prior = GaussianPrior([0.5, 0.002], np.diag([0.01, 0.001**2]))
true_hyper = np.array([0.47, 0.0025])
rng = np.random.default_rng(7)

design = DesignConfig(
    n_guesses=10,
    approx_ratio=0.1,
    utility_kind="information_gain",
    heuristic_kind="exponential_time",
    heuristic_scale=20.0,
)
result = estimate_adaptive(model, design, 3000, prior, 150, rng=rng, true_params=true_hyper)
print("hyperparameter estimate", result.estimate)

# %%
# Frequency region
# ----------------
# The frequency variance combines the average per-shot spread ``sigma2``
# with the remaining uncertainty in ``mu``.

region = hyper_to_param_region(result.cloud, model, 3)
print("frequency mean", region.mean[0])
print("frequency variance", region.covariance[0, 0], "(true", true_hyper[1], ")")
print("Z=3 interval", region.mean[0] - 3 * np.sqrt(region.covariance[0, 0]),
      region.mean[0] + 3 * np.sqrt(region.covariance[0, 0]))
