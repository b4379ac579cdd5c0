import csv
import os

import numpy as np
import pytest

from diffstategrad.bench import (ConfigError, ExperimentConfig, best_of_k, dumps, load, loads,
                                 read_rows, run_experiment, run_prop1, subspace_ablation)
from diffstategrad.bench.cli import main, parse_seeds
from diffstategrad.bench.config import parse_value
from diffstategrad.bench.runner import ResultRow

CONFIG = """
# small sweep used by the tests
[experiment]
name = tiny
solver = dps
seeds = 0..2

[prior]
seed = 0
cov_scale = 0.001

[operator]
kind = random_mask
seed = 0

[schedule]
T = 20

[guidance]
step_size = 0.5

[task]
noise_sigma = 0.05

[sweep]
eta_multiplier = 1.0 10.0
subspace = none state
"""


def test_value_grammar():
    assert parse_value("3") == 3
    assert parse_value("0.5") == 0.5
    assert parse_value("true") is True
    assert parse_value("a b") == ("a", "b")
    assert parse_value("0..3") == (0, 1, 2, 3)
    assert parse_value("1e-3 2") == (0.001, 2)


def test_config_round_trip(tmp_path):
    cfg = loads(CONFIG)
    assert cfg.seeds == (0, 1, 2)
    assert loads(dumps(cfg)) == cfg
    cfg2 = cfg.replace(prior={"seed": 1, "singular_values": (4.0, 2.0), "cov_scale": 1.0},
                       sweep={"tau": (0.9,)})
    assert loads(dumps(cfg2)) == cfg2
    path = tmp_path / "c.ini"
    path.write_text(dumps(cfg2))
    assert load(path) == cfg2


@pytest.mark.parametrize("bad", [
    CONFIG.replace("solver = dps", "solver = magic"),
    CONFIG.replace("seeds = 0..2", "seeds = 1 1"),
    CONFIG + "\n[extra]\nkey = 1\n",
    CONFIG.replace("step_size = 0.5", "stepsize = 0.5"),
    CONFIG.replace("subspace = none state", "subspace = diagonal"),
    CONFIG.replace("[task]", "[solver]\ngd_iters = 3\n\n[task]"),
])
def test_config_errors(bad, tmp_path):
    with pytest.raises(ConfigError):
        cfg = loads(bad)
        run_experiment(cfg, tmp_path / "x.csv")


def test_unresolvable_operator_fails_before_running(tmp_path):
    cfg = loads(CONFIG.replace("kind = random_mask", "kind = motion_blur"))
    with pytest.raises(ConfigError):
        run_experiment(cfg, tmp_path / "x.csv")
    assert not (tmp_path / "x.csv").exists()


def test_sweep_rows_and_schema(tmp_path):
    path, rows = run_experiment(loads(CONFIG), tmp_path / "out.csv")
    assert len(rows) == 2 * 2 * 3
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "schema_version=1"
    again = read_rows(path)
    assert [r.nmse for r in again] == [r.nmse for r in rows]
    # paired seeds: the same truth instance in every arm
    one = run_experiment(loads(CONFIG).replace(seeds=(1,)), tmp_path / "one.csv")[1]
    assert len(one) == 4
    assert [r.nmse for r in one] == [r.nmse for r in rows if r.seed == 1]


def _metric_columns(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    drop = rows[0].index("wall_ms")
    return [[v for i, v in enumerate(r) if i != drop] for r in rows]


def test_rerun_is_byte_identical(tmp_path):
    cfg = loads(CONFIG)
    a = run_experiment(cfg, tmp_path / "a.csv")[0]
    b = run_experiment(cfg, tmp_path / "b.csv", workers=2)[0]
    assert _metric_columns(a) == _metric_columns(b)


def test_none_subspace_alias(tmp_path):
    cfg = loads(CONFIG).replace(sweep={"subspace": ("none",)})
    off = loads(CONFIG).replace(sweep={}, guidance={"step_size": 0.5, "projection_enabled": False})
    a = run_experiment(cfg, tmp_path / "a.csv")[1]
    b = run_experiment(off, tmp_path / "b.csv")[1]
    assert [r.nmse for r in a] == [r.nmse for r in b]


def test_failed_runs_are_recorded(tmp_path):
    cfg = loads(CONFIG).replace(guidance={"step_size": 1e7}, sweep={"subspace": ("none",)})
    _, rows = run_experiment(cfg, tmp_path / "f.csv")
    assert len(rows) == 3 and all(r.failed for r in rows)
    assert all(r.fail_step >= 0 for r in rows)


def test_ablation_arms(tmp_path):
    path, rows = subspace_ablation(loads(CONFIG).replace(seeds=(0,)), tmp_path / "abl.csv")
    assert {r.subspace for r in rows} == {"none", "random", "gradient", "state"}


def _row(psnr, failed=False):
    return ResultRow(0, "dps", "m", 1.0, 1.0, 0.1, 0.9, "state", 0, 1, psnr, 0.0, 0.0,
                     float("nan"), failed, -1, 0.0)


def test_best_of_k():
    rows = [_row(10.0), _row(30.0, failed=True), _row(25.0), _row(float("nan"))]
    assert best_of_k(lambda i: rows[i], 1) is rows[0]
    best = best_of_k(lambda i: rows[i], 4)
    assert best.psnr == 25.0
    assert all(best.psnr >= r.psnr for r in rows if not r.failed and not np.isnan(r.psnr))
    with pytest.raises(ValueError):
        best_of_k(lambda i: rows[i], 0)


def test_other_solvers_through_config(tmp_path):
    base = loads(CONFIG).replace(seeds=(0,), sweep={})
    cases = [
        base.replace(solver="psld", solver_params={"gluing_weight": 0.1}),
        base.replace(solver="resample", operator={"kind": "phase_retrieval"},
                     solver_params={"gd_iters": 3, "gd_lr": 0.01}, task={"best_of": 2}),
        base.replace(solver="daps", schedule={"levels": 5}, operator={"kind": "box_mask"},
                     solver_params={"langevin_iters": 3}, task={"samples": 3, "noise_sigma": 0.5}),
    ]
    for cfg in cases:
        _, rows = run_experiment(cfg, tmp_path / f"{cfg.solver}.csv")
        assert len(rows) == 1 and not rows[0].failed
    assert np.isfinite(rows[0].posterior_moment_error)


def test_prop1_runner(tmp_path):
    cfg = ExperimentConfig(prop1={"kinds": ("sphere", "linear_subspace"), "dims": (3, 4),
                                  "etas": (1e-3,), "eps_scales": (0.0,), "trials": 5})
    path, rows = run_prop1(cfg, tmp_path / "p.csv")
    assert len(rows) == 2 * 2 * 5
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    assert header[:7] == ["schema_version=1", "kind", "eta", "eps_scale", "dist_std",
                          "dist_proj", "margin"]
    assert all(r[5] > 0 for r in rows)


def test_cli(tmp_path, monkeypatch, capsys):
    cfg_path = tmp_path / "tiny.ini"
    cfg_path.write_text(CONFIG)
    monkeypatch.setenv("DIFFSTATEGRAD_OUT", str(tmp_path / "outdir"))
    assert main(["run", str(cfg_path), "--seeds", "0..1"]) == 0
    out = tmp_path / "outdir" / "tiny_run.csv"
    assert len(read_rows(out)) == 2 * 2 * 2
    assert main(["ablate", str(cfg_path), "--seeds", "0", "--out", str(tmp_path / "a.csv")]) == 0
    assert "state" in capsys.readouterr().out
    prop = tmp_path / "p.ini"
    prop.write_text("[experiment]\nname = p\n\n[prop1]\nkinds = sphere\ndims = 3\ntrials = 4\n")
    assert main(["prop1", str(prop), "--out", str(tmp_path / "p.csv")]) == 0
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert parse_seeds("1,2,5") == (1, 2, 5)
