"""Projecting a gradient onto the low-rank subspace of the current state.

A state matrix with a decaying spectrum needs only a few singular directions
to keep most of its energy. The retention threshold picks that rank, and the
projector keeps the part of a gradient that lives in those directions.
"""

import numpy as np

from diffstategrad.linalg import build_projector, project_gradient, select_rank, svd

rng = np.random.default_rng(0)

# A rank-3 signal plus a little noise.
U = np.linalg.qr(rng.standard_normal((16, 3)))[0]
V = np.linalg.qr(rng.standard_normal((12, 3)))[0]
state = (U * [5.0, 2.0, 1.0]) @ V.T + 0.01 * rng.standard_normal((16, 12))

s = svd(state).S
print("leading singular values:", np.round(s[:5], 3))
for tau in (0.8, 0.95, 0.99, 1.0):
    print(f"tau={tau}: rank {select_rank(s, tau)}")

p = build_projector(state, tau=0.99)
g = rng.standard_normal(state.shape)
pg = project_gradient(g, p)
print(f"selected rank {p.r}; gradient norm {np.linalg.norm(g):.3f} -> {np.linalg.norm(pg):.3f}")
print("idempotent:", np.allclose(project_gradient(pg, p), pg))
