"""Seeded sweeps over solver settings with CSV output.

Every run is identified by a sweep point and a seed. The seed fixes the
truth instance and measurement noise (stream ``[seed, 0]``) and the solver
noise (stream ``[seed, 1, k]`` for the ``k``-th of ``best_of`` attempts), so
arms that differ only in guidance settings are paired run for run.
"""

from __future__ import annotations

import csv
import itertools
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import manifold as mf
from ..metrics import (aligned_psnr, nmse, posterior_moment_error, psnr, ssim,
                       to_unit_range)
from ..operators import make_measurement, make_operator
from ..prior import exact_linear_posterior, make_lowrank_prior
from ..schedule import make_vp_schedule
from ..solvers import (Autoencoder, DivergenceError, GuidanceConfig, daps_langevin_step,
                       daps_sigmas, run_daps_style, run_dps, run_psld_style,
                       run_resample_style)
from .config import ConfigError, ExperimentConfig

__all__ = ["ResultRow", "Task", "build_task", "sweep_points", "run_experiment",
           "subspace_ablation", "best_of_k", "run_prop1", "write_rows", "read_rows",
           "summarize", "SCHEMA_HEADER", "OUTPUT_ENV"]

SCHEMA_HEADER = "schema_version=1"
OUTPUT_ENV = "DIFFSTATEGRAD_OUT"

DEFAULT_NOISE = 0.05


@dataclass
class ResultRow:
    point: int
    solver: str
    operator: str
    eta_multiplier: float
    eta: float
    noise_sigma: float
    tau: float
    subspace: str
    seed: int
    best_of: int
    psnr: float
    ssim: float
    nmse: float
    posterior_moment_error: float
    failed: bool
    fail_step: int
    wall_ms: float


ROW_FIELDS = [f.name for f in fields(ResultRow)]


@dataclass
class Task:
    """Resolved objects shared by all runs of one config."""

    cfg: ExperimentConfig
    prior: object
    op: object
    sched: object
    shape: tuple


def _shape(value) -> tuple:
    if value is None:
        return (8, 8)
    return tuple(int(v) for v in (value if isinstance(value, tuple) else (value, value)))


def build_task(cfg: ExperimentConfig) -> Task:
    """Resolve prior, operator and schedule; any problem raises before a run starts."""
    try:
        prior_kw = dict(cfg.prior)
        prior_seed = int(prior_kw.pop("seed", 0))
        shape = _shape(prior_kw.pop("shape", None))
        if "singular_values" in prior_kw:
            prior_kw["singular_values"] = tuple(np.atleast_1d(prior_kw["singular_values"]))
        prior = make_lowrank_prior(np.random.default_rng(prior_seed), shape=shape, **prior_kw)
        op_kw = dict(cfg.operator)
        op_seed = int(op_kw.pop("seed", 0))
        for key in ("box", "corner"):
            if key in op_kw:
                op_kw[key] = tuple(op_kw[key])
        op = make_operator(op_kw, shape, rng=np.random.default_rng(op_seed))
        sk = dict(cfg.schedule)
        sched = make_vp_schedule(int(sk.get("T", 200)), float(sk.get("beta_min", 1e-4)),
                                 float(sk.get("beta_max", 2e-2)))
        for point in sweep_points(cfg):
            _guidance(cfg, point)
            if cfg.solver == "daps" and point["noise_sigma"] <= 0:
                raise ValueError("the DAPS-style solver needs noise_sigma > 0")
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"unresolvable config: {exc}") from exc
    return Task(cfg, prior, op, sched, shape)


def sweep_points(cfg: ExperimentConfig) -> list[dict]:
    """Cartesian product of the sweep axes in the fixed order of ``SWEEP_AXES``."""
    g = cfg.guidance
    default_sub = g.get("subspace", "state") if g.get("projection_enabled", True) else "none"
    axes = {
        "eta_multiplier": cfg.sweep.get("eta_multiplier", (1.0,)),
        "noise_sigma": cfg.sweep.get("noise_sigma", (cfg.task.get("noise_sigma", DEFAULT_NOISE),)),
        "tau": cfg.sweep.get("tau", (g.get("tau", 0.99),)),
        "subspace": cfg.sweep.get("subspace", (default_sub,)),
    }
    names = list(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*axes.values())]


def _guidance(cfg: ExperimentConfig, point: dict) -> GuidanceConfig:
    g = cfg.guidance
    eta = float(g.get("step_size", 1.0)) * float(point["eta_multiplier"])
    return GuidanceConfig(step_size=eta, tau=float(point["tau"]), freq=int(g.get("freq", 1)),
                          projection_enabled=point["subspace"] != "none",
                          projection_mode=str(g.get("projection_mode", "full")),
                          subspace=str(point["subspace"]))


def _solve(task: Task, y, noise_sigma: float, gcfg: GuidanceConfig, rng):
    """One solver call; returns a list of reconstructions (several for DAPS sampling)."""
    cfg, sp = task.cfg, task.cfg.solver_params
    if cfg.solver == "dps":
        return [run_dps(task.prior, task.op, y, task.sched, gcfg, rng)[0]]
    if cfg.solver == "psld":
        return [run_psld_style(task.prior, task.op, y, task.sched, gcfg, Autoencoder(),
                               float(sp.get("gluing_weight", 0.0)), rng)[0]]
    if cfg.solver == "resample":
        every = int(sp.get("resample_every", 2))
        below = int(sp.get("resample_below", task.sched.T))
        steps = range(0, min(below, task.sched.T), every)
        return [run_resample_style(task.prior, task.op, y, task.sched, gcfg, steps,
                                   int(sp.get("gd_iters", 20)), float(sp.get("gd_lr", 0.01)),
                                   float(sp.get("gamma", 40.0)), None, rng,
                                   ddim_eta=float(sp.get("ddim_eta", 0.0)))[0]]
    sk = cfg.schedule
    sigmas = daps_sigmas(int(sk.get("levels", 30)), float(sk.get("sigma_max", 10.0)),
                         float(sk.get("sigma_min", 0.01)))
    step = daps_langevin_step(float(sp.get("langevin_scale", 0.3)), noise_sigma)
    n = int(cfg.task.get("samples", 1))
    return [run_daps_style(task.prior, task.op, y, sigmas, int(sp.get("langevin_iters", 20)),
                           step, noise_sigma, gcfg, rng, ode_steps=int(sp.get("ode_steps", 20)))[0]
            for _ in range(n)]


def _scores(task: Task, samples, x, y, noise_sigma):
    """(psnr, ssim, nmse, posterior_moment_error) of one attempt."""
    est = samples[0] if len(samples) == 1 else np.mean(samples, axis=0)
    est_u, ref_u = to_unit_range(est), to_unit_range(x)
    if task.op.kind == "phase_retrieval":
        # Fourier magnitudes do not see a 180-degree rotation; score the better orientation
        if psnr(est_u[::-1, ::-1], ref_u) > psnr(est_u, ref_u):
            est, est_u = est[::-1, ::-1], est_u[::-1, ::-1]
        p = aligned_psnr(est_u, ref_u)
    else:
        p = psnr(est_u, ref_u)
    pme = float("nan")
    if len(samples) >= 2 and task.op.linear and noise_sigma > 0:
        post = exact_linear_posterior(task.prior, task.op.matrix(), y, noise_sigma)
        pme = posterior_moment_error(np.asarray(samples), post)
    return p, ssim(est_u, ref_u), nmse(est, x), pme


def best_of_k(runner, k: int) -> ResultRow:
    """Call ``runner(i)`` for ``i < k`` and keep the row with the highest PSNR.

    Failed rows rank below every finite PSNR; if all attempts fail the first is kept.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    best = None
    for i in range(k):
        row = runner(i)
        key = -np.inf if row.failed or np.isnan(row.psnr) else row.psnr
        if best is None or key > best[0]:
            best = (key, row)
    return best[1]


def run_one(task: Task, point_index: int, seed: int) -> ResultRow:
    cfg = task.cfg
    point = sweep_points(cfg)[point_index]
    noise_sigma = float(point["noise_sigma"])
    gcfg = _guidance(cfg, point)
    truth_rng = np.random.default_rng([seed, 0])
    x = task.prior.sample(truth_rng)
    y = make_measurement(task.op, x, noise_sigma, truth_rng).y
    k = int(cfg.task.get("best_of", 1))

    def attempt(i: int) -> ResultRow:
        t0 = time.perf_counter()
        failed, fail_step = False, -1
        scores = (float("nan"),) * 4
        try:
            samples = _solve(task, y, noise_sigma, gcfg, np.random.default_rng([seed, 1, i]))
            scores = _scores(task, samples, x, y, noise_sigma)
        except DivergenceError as exc:
            failed, fail_step = True, exc.step
        wall = 1000.0 * (time.perf_counter() - t0)
        return ResultRow(point_index, cfg.solver, task.op.kind, float(point["eta_multiplier"]),
                         gcfg.eta(0), noise_sigma, float(point["tau"]), str(point["subspace"]),
                         int(seed), k, *map(float, scores), failed, fail_step, wall)

    return best_of_k(attempt, k)


_WORKER_TASK = None


def _init_worker(cfg):
    global _WORKER_TASK
    _WORKER_TASK = build_task(cfg)


def _timed_run(task, point_index, seed):
    t0 = time.perf_counter()
    row = run_one(task, point_index, seed)
    row.wall_ms = 1000.0 * (time.perf_counter() - t0)
    return row


def _worker_run(job):
    return _timed_run(_WORKER_TASK, *job)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_rows(rows, path) -> None:
    """CSV, UTF-8, header row led by the schema marker, floats at 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([SCHEMA_HEADER] + ROW_FIELDS)
        for r in rows:
            w.writerow(["1"] + [_fmt(v) for v in asdict(r).values()])


def read_rows(path) -> list[ResultRow]:
    types = {f.name: f.type for f in fields(ResultRow)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != SCHEMA_HEADER:
            raise ValueError(f"unsupported CSV schema {header[0]!r}")
        for rec in reader:
            vals = {}
            for name, text in zip(header[1:], rec[1:]):
                kind = types[name]
                if kind == "bool":
                    vals[name] = text == "1"
                elif kind == "int":
                    vals[name] = int(text)
                elif kind == "float":
                    vals[name] = float(text)
                else:
                    vals[name] = text
            out.append(ResultRow(**vals))
    return out


def default_output(cfg: ExperimentConfig, command: str) -> str:
    if cfg.output:
        return cfg.output
    directory = os.environ.get(OUTPUT_ENV, ".")
    return os.path.join(directory, f"{cfg.name}_{command}.csv")


def run_experiment(cfg: ExperimentConfig, out=None, workers: int = 1):
    """Run every (sweep point, seed) pair and write one CSV row per pair.

    Returns ``(path, rows)``. Diverged runs are recorded with ``failed = 1``.
    Results are written in (point, seed) order whatever the worker count.
    """
    task = build_task(cfg)
    jobs = [(p, s) for p in range(len(sweep_points(cfg))) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg,)) as ex:
            rows = list(ex.map(_worker_run, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_timed_run(task, p, s) for p, s in jobs]
    path = out or default_output(cfg, "run")
    if path:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        write_rows(rows, path)
    return path, rows


ABLATION_ARMS = ("none", "random", "gradient", "state")


def subspace_ablation(cfg: ExperimentConfig, out=None, workers: int = 1):
    """Run the four projection-basis arms on identical seeds."""
    sweep = dict(cfg.sweep)
    sweep["subspace"] = ABLATION_ARMS
    return run_experiment(cfg.replace(sweep=sweep), out or default_output(cfg, "ablate"), workers)


def summarize(rows, metric: str = "nmse", by: str = "subspace") -> dict:
    """Mean of ``metric`` per value of the ``by`` column (failed runs count as ``inf``)."""
    groups: dict = {}
    for r in rows:
        v = float("inf") if r.failed else getattr(r, metric)
        groups.setdefault(getattr(r, by), []).append(v)
    return {k: float(np.mean(v)) for k, v in groups.items()}


# Manifold checks ---------------------------------------------------------

PROP1_FIELDS = ["kind", "eta", "eps_scale", "dist_std", "dist_proj", "margin", "dim", "trial"]
MANIFOLD_KINDS = ("linear_subspace", "sphere", "product_torus")


def _make_manifold(kind: str, dim: int, rng) -> mf.Manifold:
    if kind == "sphere":
        return mf.sphere(dim)
    if kind == "linear_subspace":
        return mf.linear_subspace(rng.standard_normal((dim, max(1, dim // 2))))
    if kind == "product_torus":
        if dim % 2:
            raise ValueError("product_torus needs an even ambient dimension")
        return mf.product_torus(np.ones(dim // 2))
    raise ValueError(f"unknown manifold kind {kind!r}")


def prop1_trials(kind: str, dim: int, eta: float, eps_scale: float, trials: int, rng):
    """Distances after plain and projected updates for random points and unit gradients."""
    man = _make_manifold(kind, dim, rng)
    out = []
    for _ in range(trials):
        z = mf.random_point(man, rng)
        g = rng.standard_normal(dim)
        g /= np.linalg.norm(g)
        frame = mf.tangent_frame(man, z)
        P = mf.perturbed_projector(frame, eps_scale, rng)
        out.append(mf.verify_prop1(man, z, g, eta, P))
    return np.array(out)


def run_prop1(cfg: ExperimentConfig, out=None):
    """Manifold sweep; one CSV row per trial. Returns ``(path, rows)``."""
    p = cfg.prop1
    kinds = p.get("kinds", MANIFOLD_KINDS)
    kinds = (kinds,) if isinstance(kinds, str) else kinds
    dims = tuple(np.atleast_1d(p.get("dims", (3, 16, 64))))
    etas = tuple(np.atleast_1d(p.get("etas", (1e-3,))))
    eps_scales = tuple(np.atleast_1d(p.get("eps_scales", (0.0, 0.05))))
    trials = int(p.get("trials", 1000))
    seed = int(p.get("seed", cfg.seeds[0]))
    rows = []
    for ki, kind in enumerate(kinds):
        if kind not in MANIFOLD_KINDS:
            raise ConfigError(f"unknown manifold kind {kind!r}")
        for dim in dims:
            for ei, eta in enumerate(etas):
                for si, eps in enumerate(eps_scales):
                    rng = np.random.default_rng([seed, ki, int(dim), ei, si])
                    res = prop1_trials(kind, int(dim), float(eta), float(eps), trials, rng)
                    for i, (ds, dp, m) in enumerate(res):
                        rows.append((kind, float(eta), float(eps), ds, dp, m, int(dim), i))
    path = out or default_output(cfg, "prop1")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([SCHEMA_HEADER] + PROP1_FIELDS)
        for r in rows:
            w.writerow(["1"] + [_fmt(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                                for v in r])
    return path, rows
