"""Annealed posterior sampling checked against the exact Gaussian posterior.

For a single Gaussian prior and an identity measurement the posterior is
Gaussian with a known mean. The sampler's average over many draws should
land within a few Monte Carlo standard errors of it.
"""

import numpy as np

from diffstategrad.operators import MaskOperator
from diffstategrad.prior import GmmPrior, exact_linear_posterior, make_lowrank_prior
from diffstategrad.solvers import (GuidanceConfig, daps_langevin_step, daps_sigmas,
                                   run_daps_style)

rng = np.random.default_rng(0)
prior = GmmPrior(np.ones(1), make_lowrank_prior(rng, n_components=1).means, np.array([1.0]))
op = MaskOperator(np.ones((8, 8)), kind="box_mask")
sigma_y = 0.3
x = prior.sample(rng)
y = x + sigma_y * rng.standard_normal(x.shape)
post = exact_linear_posterior(prior, op.matrix(), y, sigma_y)

cfg = GuidanceConfig(projection_enabled=False)
step = daps_langevin_step(0.3, sigma_y)
n = 60
draws = np.array([run_daps_style(prior, op, y, daps_sigmas(30), 20, step, sigma_y, cfg, rng)[0]
                  for _ in range(n)]).reshape(n, -1)
err = np.linalg.norm(draws.mean(0) - post.mean().ravel())
se = np.sqrt(draws.var(0, ddof=1).sum() / n)
print(f"mean error {err:.3f}, one standard error {se:.3f}")
