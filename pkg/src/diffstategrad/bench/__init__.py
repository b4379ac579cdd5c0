"""Config-driven sweeps, the subspace ablation and the manifold check runner."""

from .config import ConfigError, ExperimentConfig, dumps, load, loads, save
from .runner import (ResultRow, best_of_k, read_rows, run_experiment, run_prop1,
                     subspace_ablation, summarize)

__all__ = ["ConfigError", "ExperimentConfig", "ResultRow", "best_of_k", "dumps", "load",
           "loads", "read_rows", "run_experiment", "run_prop1", "save", "subspace_ablation",
           "summarize"]
