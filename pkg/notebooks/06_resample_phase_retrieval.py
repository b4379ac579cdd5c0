"""Phase retrieval with a latent-style sampler that alternates fitting and resampling.

The measurement is the magnitude of an oversampled Fourier transform, so the
truth is only defined up to a 180 degree rotation. PSNR is taken against the
better of the two alignments, and a run counts as failed below 20 dB.
"""

import numpy as np

from diffstategrad.bench import load, run_experiment
from diffstategrad.metrics import failure_rate
from pathlib import Path
import tempfile

cfg = load(Path(__file__).resolve().parent.parent / "configs" / "phase_retrieval.ini")
cfg = cfg.replace(seeds=tuple(range(6)))
with tempfile.TemporaryDirectory() as tmp:
    _, rows = run_experiment(cfg, Path(tmp) / "pr.csv")
for arm in ("none", "state"):
    psnrs = [r.psnr for r in rows if r.subspace == arm]
    print(f"{arm:6s} PSNR {np.round(psnrs, 1)} failure rate {failure_rate(psnrs):.2f}")
