"""Why tangent projection helps: distance to a curved manifold after one step.

From a point on a sphere, a plain gradient step leaves the sphere at first
order in the step size, while a tangent-projected step leaves it only at
second order. The fitted exponent of the residual shows this directly.
"""

import numpy as np

from diffstategrad import manifold as mf
from diffstategrad.bench.runner import prop1_trials

rng = np.random.default_rng(0)
for d in (3, 16, 64):
    res = prop1_trials("sphere", d, 1e-3, 0.0, 2000, rng)
    print(f"d={d}: projected step closer in {np.mean(res[:, 2] > 0):.1%} of trials")

etas = np.geomspace(1e-4, 1e-2, 5)
resid = [prop1_trials("sphere", 16, float(e), 0.0, 200, rng)[:, 1].mean() for e in etas]
p, _ = mf.fit_power_law(etas, resid)
print(f"projected residual scales like eta^{p:.2f}")
