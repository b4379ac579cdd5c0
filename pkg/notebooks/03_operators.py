"""Forward operators and their data-fit gradients.

Each operator maps an 8x8 state to a measurement. The data fit is half the
squared residual, and its gradient is checked here against a central
difference at one random point.
"""

import numpy as np

from diffstategrad.operators import (box_mask, downsample, gaussian_blur, hdr_clip,
                                     phase_retrieval, random_mask)

rng = np.random.default_rng(0)
x = rng.uniform(-0.8, 0.8, (8, 8))
ops = [box_mask(), random_mask(rng=0), gaussian_blur(), downsample(), phase_retrieval(),
       hdr_clip()]
for op in ops:
    y = op(rng.uniform(-0.8, 0.8, (8, 8)))
    g = op.data_fit_grad(x, y)
    e = np.zeros_like(x)
    e[3, 4] = 1e-6
    fd = (op.data_fit(x + e, y) - op.data_fit(x - e, y)) / 2e-6
    print(f"{op.kind:16s} out {str(op.out_shape):9s} grad[3,4] {g[3, 4]: .6f} fd {fd: .6f}")
