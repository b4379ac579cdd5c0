"""Experiment configuration: a flat, sectioned key/value text format.

Grammar
-------
A config file is parsed by :mod:`configparser` with these rules::

    file     := { comment | section }
    comment  := line starting with '#' or ';'
    section  := '[' name ']' NEWLINE { key '=' value NEWLINE }
    value    := token { WS token }          (several tokens make a list)
    token    := int | float | 'true' | 'false' | bare-word

Sections and their keys:

``[experiment]``
    ``name``, ``solver`` (``dps | psld | resample | daps``), ``seeds`` (ints,
    ``a..b`` expands to the inclusive range), ``output``.
``[prior]``
    keyword arguments of :func:`~diffstategrad.prior.make_lowrank_prior`
    plus ``seed`` (the prior itself is drawn once from this seed).
``[operator]``
    ``kind`` and the operator keyword arguments; ``seed`` drives random masks.
``[schedule]``
    ``T``, ``beta_min``, ``beta_max`` for DDPM-type solvers; ``levels``,
    ``sigma_max``, ``sigma_min`` for the DAPS-style annealing.
``[guidance]``
    fields of :class:`~diffstategrad.solvers.GuidanceConfig` (scalar step size).
``[solver]``
    solver-specific settings, see :data:`SOLVER_KEYS`.
``[task]``
    ``noise_sigma``, ``best_of`` (runs per truth instance, best PSNR kept),
    ``samples`` (posterior draws per run, DAPS only).
``[sweep]``
    axes ``eta_multiplier``, ``noise_sigma``, ``tau``, ``subspace``; each a list.
``[prop1]``
    ``kinds``, ``dims``, ``etas``, ``eps_scales``, ``trials``, ``seed`` for the
    manifold check runner.

Keys are case sensitive. Unknown sections or keys are rejected before any run.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field

SOLVERS = ("dps", "psld", "resample", "daps")
SWEEP_AXES = ("eta_multiplier", "noise_sigma", "tau", "subspace")

SOLVER_KEYS = {
    "dps": set(),
    "psld": {"gluing_weight"},
    "resample": {"resample_every", "resample_below", "gd_iters", "gd_lr", "gamma", "ddim_eta"},
    "daps": {"langevin_iters", "langevin_scale", "ode_steps"},
}

SECTIONS = {
    "experiment": {"name", "solver", "seeds", "output"},
    "prior": {"seed", "shape", "n_components", "rank", "cov_scale", "singular_values",
              "shared_rank"},
    "operator": None,  # keys depend on the operator kind
    "schedule": {"T", "beta_min", "beta_max", "levels", "sigma_max", "sigma_min"},
    "guidance": {"step_size", "tau", "freq", "projection_enabled", "projection_mode",
                 "subspace"},
    "solver": set().union(*SOLVER_KEYS.values()),
    "task": {"noise_sigma", "best_of", "samples"},
    "sweep": set(SWEEP_AXES),
    "prop1": {"kinds", "dims", "etas", "eps_scales", "trials", "seed"},
}

_INT = re.compile(r"[+-]?\d+$")
_RANGE = re.compile(r"([+-]?\d+)\.\.([+-]?\d+)$")


class ConfigError(ValueError):
    pass


def parse_token(tok: str):
    if _INT.match(tok):
        return int(tok)
    low = tok.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return float(tok)
    except ValueError:
        return tok


def parse_value(text: str):
    tokens = text.split()
    if not tokens:
        raise ConfigError("empty value")
    values = []
    for tok in tokens:
        m = _RANGE.match(tok)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            values.extend(range(a, b + 1))
        else:
            values.append(parse_token(tok))
    return values[0] if len(values) == 1 and not _RANGE.match(tokens[0]) else tuple(values)


def format_token(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        text = repr(v)
        # keep floats recognisable as floats on the way back in
        return text if ("." in text or "e" in text or "n" in text) else text + ".0"
    return str(v)


def format_value(v) -> str:
    if isinstance(v, (tuple, list)):
        return " ".join(format_token(x) for x in v)
    return format_token(v)


def as_tuple(v) -> tuple:
    return tuple(v) if isinstance(v, (tuple, list)) else (v,)


def _scalarize(v):
    if isinstance(v, list):
        v = tuple(v)
    return v[0] if isinstance(v, tuple) and len(v) == 1 else v


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    Section mappings hold already-typed values (ints, floats, bools, strings
    or tuples of those).
    """

    name: str = "experiment"
    solver: str = "dps"
    seeds: tuple = (0,)
    output: str = ""
    prior: dict = field(default_factory=dict)
    operator: dict = field(default_factory=lambda: {"kind": "random_mask"})
    schedule: dict = field(default_factory=dict)
    guidance: dict = field(default_factory=dict)
    solver_params: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    prop1: dict = field(default_factory=dict)

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in as_tuple(self.seeds))
        # canonical form: sweep axes are tuples, one-element lists elsewhere are scalars,
        # which is exactly what the text format can express
        self.sweep = {k: as_tuple(v) for k, v in self.sweep.items()}
        for name in ("prior", "operator", "schedule", "guidance", "solver_params", "task",
                     "prop1"):
            setattr(self, name, {k: _scalarize(v) for k, v in getattr(self, name).items()})
        self.validate()

    def validate(self) -> None:
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; expected one of {SOLVERS}")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if "kind" not in self.operator:
            raise ConfigError("[operator] needs a kind")
        bad = set(self.solver_params) - SOLVER_KEYS[self.solver]
        if bad:
            raise ConfigError(f"keys {sorted(bad)} are not valid for solver {self.solver!r}")
        for name, values in self.sweep.items():
            if name not in SWEEP_AXES:
                raise ConfigError(f"unknown sweep axis {name!r}")
            if not as_tuple(values):
                raise ConfigError(f"sweep axis {name!r} is empty")

    def sections(self) -> dict:
        exp = {"name": self.name, "solver": self.solver, "seeds": self.seeds}
        if self.output:
            exp["output"] = self.output
        return {
            "experiment": exp, "prior": self.prior, "operator": self.operator,
            "schedule": self.schedule, "guidance": self.guidance,
            "solver": self.solver_params, "task": self.task, "sweep": self.sweep,
            "prop1": self.prop1,
        }

    def replace(self, **changes) -> "ExperimentConfig":
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ExperimentConfig(**data)


def loads(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=None)
    cp.optionxform = str  # keep key case
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    data = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = SECTIONS[section]
        entries = {}
        for key, raw in cp.items(section):
            if allowed is not None and key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            entries[key] = parse_value(raw)
        data[section] = entries
    exp = data.get("experiment", {})
    if isinstance(exp.get("seeds"), int):
        exp["seeds"] = (exp["seeds"],)
    return ExperimentConfig(
        name=str(exp.get("name", "experiment")), solver=str(exp.get("solver", "dps")),
        seeds=exp.get("seeds", (0,)), output=str(exp.get("output", "")),
        prior=data.get("prior", {}), operator=data.get("operator", {"kind": "random_mask"}),
        schedule=data.get("schedule", {}), guidance=data.get("guidance", {}),
        solver_params=data.get("solver", {}), task=data.get("task", {}),
        sweep=data.get("sweep", {}), prop1=data.get("prop1", {}),
    )


def dumps(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for section, entries in cfg.sections().items():
        if not entries and section != "experiment":
            continue
        cp[section] = {k: format_value(v) for k, v in entries.items()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def save(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))
