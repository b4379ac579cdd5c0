"""Which subspace to project onto: the state, the gradient or a random one.

The ablation runs the same guided sampler four times per instance, changing
only the basis of the projection, and reports the mean error per arm.
"""

from pathlib import Path
import tempfile

from diffstategrad.bench import load, subspace_ablation, summarize

cfg = load(Path(__file__).resolve().parent.parent / "configs" / "ablation.ini")
cfg = cfg.replace(seeds=tuple(range(8)))
with tempfile.TemporaryDirectory() as tmp:
    path, rows = subspace_ablation(cfg, Path(tmp) / "ablation.csv")
for arm, stats in summarize(rows, "nmse", "subspace").items():
    print(arm, stats)
