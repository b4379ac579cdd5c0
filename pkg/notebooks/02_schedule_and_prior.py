"""The noise schedule and the Gaussian-mixture prior with exact scores.

The prior is a mixture of Gaussians centred on low-rank matrices, so the
noisy marginal at every diffusion step is again a mixture and its score and
denoiser are available in closed form.
"""

import numpy as np

from diffstategrad.prior import make_lowrank_prior
from diffstategrad.schedule import add_noise, make_vp_schedule

rng = np.random.default_rng(0)
sched = make_vp_schedule(T=200)
print("alpha_bar at t=1, 100, 200:", np.round(sched.alpha_bar[[1, 100, 200]], 4))

prior = make_lowrank_prior(rng, n_components=4, rank=2, cov_scale=1e-3)
x0 = prior.sample(rng)
for t in (10, 100, 190):
    xt = add_noise(x0, t, rng.standard_normal(x0.shape), sched)
    x0_hat = prior.tweedie_denoise(xt, t, sched)
    err = np.linalg.norm(x0_hat - x0) / np.linalg.norm(x0)
    print(f"t={t}: relative denoising error {err:.3f}")
