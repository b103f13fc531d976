"""
================================
Loss, Bound and Cost in a Bench
================================
"""

# %%
# A small benchmark
# -----------------
# The bench runner draws a fresh true frequency per trial, runs the adaptive
# loop, and records the quadratic loss, the posterior variance and the
# Bayesian Cramer-Rao bound after every experiment. Trials are seeded from
# ``(base_seed, trial_id)``, so any number of worker processes gives the
# same tables.

import math

from hamlearn import BenchmarkConfig, DesignConfig, run_benchmark

cfg = BenchmarkConfig(
    model="known_t2",
    prior_mean=[0.5],
    prior_cov=[[0.01]],
    model_params={"t2": 100 * math.pi},
    n_particles=1000,
    n_experiments=60,
    n_trials=40,
    design=DesignConfig(heuristic_kind="uniform_linear"),
)
result = run_benchmark(cfg)

# %%
# Loss against the bound
# ----------------------
# Mean loss can never beat the bound on average. Median loss is usually far
# below the mean because a few trials lock on late.

print(" N   mean loss   median loss   mean BCRB   posterior var")
for row in result.summary[::10]:
    print(f"{row.N:3d}  {row.mean_loss:10.3e}  {row.median_loss:11.3e}  "
          f"{row.mean_bcrb:10.3e}  {row.mean_posterior_var:10.3e}")

# %%
# Cost
# ----
# Cost is reported as likelihood evaluations rather than seconds.

for N, calls, mean_loss, median_loss, q84 in result.cost[::20]:
    print(f"N={N:3d}  calls={calls:9.0f}  mean loss={mean_loss:.3e}")
