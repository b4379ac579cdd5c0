"""Guided diffusion posterior samplers with optional state-subspace gradient projection.

Four samplers share one guidance configuration:

* :func:`run_dps` - ancestral sampling with a measurement-gradient step on
  the noisy state after every reverse step.
* :func:`run_psld_style` - the same loop with an extra "gluing" gradient
  that keeps the denoised latent a fixed point of encode/decode.
* :func:`run_resample_style` - DDIM sampling with hard data consistency
  (gradient descent on the denoised estimate) at selected steps, followed
  by stochastic resampling back to the current noise level.
* :func:`run_daps_style` - annealed sampling that alternates probability-flow
  ODE denoising, Langevin dynamics on the clean estimate and re-noising.

When projection is enabled, the guidance gradient ``G`` is replaced by
``U_r U_r^T G V_r V_r^T`` with ``U_r, V_r`` taken from the SVD of the
current diffusion state.

Scores come from an analytic :class:`~diffstategrad.prior.GmmPrior`, so the
gradient through the Tweedie denoiser uses its exact Jacobian.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .linalg import StateProjector, as_matrix, build_projector, project_gradient
from .operators import ForwardOperator
from .prior import GmmPrior
from .schedule import NoiseSchedule, ancestral_step, ddim_sigma, ddim_step

__all__ = [
    "GuidanceConfig", "Autoencoder", "StepRecord", "Trajectory", "DivergenceError",
    "run_dps", "run_psld_style", "run_resample_style", "stochastic_resample",
    "run_daps_style", "pf_ode_denoise", "daps_sigmas", "daps_radius", "daps_langevin_step",
]

SUBSPACES = ("state", "random", "gradient", "none")
DIVERGENCE_NORM = 1e6


class DivergenceError(RuntimeError):
    def __init__(self, step: int, reason: str):
        super().__init__(f"diverged at step {step}: {reason}")
        self.step = step


@dataclass
class GuidanceConfig:
    """Measurement-guidance settings shared by all samplers.

    ``step_size`` is a scalar or a per-index array. ``subspace`` selects
    the projection basis: ``"state"`` (the diffusion state), ``"gradient"``
    (the gradient itself), ``"random"`` (a fresh Gaussian matrix of the
    state's shape) or ``"none"``.
    """

    step_size: float | np.ndarray = 1.0
    tau: float = 0.99
    freq: int = 1
    projection_enabled: bool = True
    projection_mode: str = "full"
    subspace: str = "state"

    def __post_init__(self):
        if np.any(np.asarray(self.step_size) < 0):
            raise ValueError("step_size must be nonnegative")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.freq < 1:
            raise ValueError("freq must be at least 1")
        if self.subspace not in SUBSPACES:
            raise ValueError(f"unknown subspace {self.subspace!r}")
        if self.subspace == "none":
            self.projection_enabled = False

    @property
    def projecting(self) -> bool:
        return self.projection_enabled and self.subspace != "none"

    def eta(self, t: int) -> float:
        s = np.asarray(self.step_size, dtype=float)
        return float(s) if s.ndim == 0 else float(s[t])


@dataclass
class Autoencoder:
    """Identity or fixed linear encoder/decoder pair.

    For ``fixed_linear`` the encoder ``E`` has orthonormal rows and the
    decoder is ``E^T``, so ``decode(encode(x))`` is an orthogonal projection.
    """

    kind: str = "identity"
    E: np.ndarray | None = None
    image_shape: tuple | None = None
    latent_shape: tuple | None = None

    @classmethod
    def fixed_linear(cls, image_shape, latent_dim: int, rng) -> "Autoencoder":
        from .linalg import most_square_shape

        n = int(np.prod(image_shape))
        Q = np.linalg.qr(np.random.default_rng(rng).standard_normal((n, latent_dim)))[0]
        return cls("fixed_linear", Q.T, tuple(image_shape), most_square_shape(latent_dim))

    @property
    def D(self) -> np.ndarray | None:
        return None if self.E is None else self.E.T

    def encode(self, x):
        if self.kind == "identity":
            return np.asarray(x, dtype=float)
        return (self.E @ np.asarray(x).reshape(-1)).reshape(self.latent_shape)

    def decode(self, z):
        if self.kind == "identity":
            return np.asarray(z, dtype=float)
        return (self.E.T @ np.asarray(z).reshape(-1)).reshape(self.image_shape)

    def decode_vjp(self, gx):
        """Pull an image-space gradient back to the latent space."""
        return self.encode(gx)

    def encode_vjp(self, gz):
        return self.decode(gz)

    def latent_prior(self, prior: GmmPrior) -> GmmPrior:
        if self.kind == "identity":
            return prior
        return prior.pushforward(self.E, self.latent_shape)


@dataclass
class StepRecord:
    step: int
    t: float
    grad_norm: float
    proj_grad_norm: float
    rank: int
    state_rmse_to_truth: float


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self, path) -> None:
        cols = ["step", "t", "grad_norm", "proj_grad_norm", "rank", "state_rmse_to_truth"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.records:
                w.writerow([r.step, _fmt(r.t), _fmt(r.grad_norm), _fmt(r.proj_grad_norm),
                            r.rank, _fmt(r.state_rmse_to_truth)])


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


class _Guide:
    """Projection and bookkeeping shared by the samplers."""

    def __init__(self, cfg: GuidanceConfig, rng: np.random.Generator, x_true=None,
                 decode=None, keep_states: bool = False):
        self.cfg = cfg
        # separate stream so the random-subspace arm does not shift the main noise draws
        self.aux_rng = rng.spawn(1)[0]
        self.x_true = None if x_true is None else np.asarray(x_true, dtype=float)
        self.decode = decode or (lambda z: z)
        self.traj = Trajectory()
        self.keep_states = keep_states

    def projector(self, state, grad=None) -> StateProjector | None:
        cfg = self.cfg
        if not cfg.projecting:
            return None
        state_m = as_matrix(state)
        if cfg.subspace == "state":
            return build_projector(state_m, cfg.tau, cfg.freq, cfg.projection_mode)
        if cfg.subspace == "gradient":
            return build_projector(as_matrix(grad), cfg.tau, cfg.freq, cfg.projection_mode)
        noise = self.aux_rng.standard_normal(state_m.shape)
        return build_projector(noise, cfg.tau, cfg.freq, cfg.projection_mode)

    def project(self, g, p: StateProjector | None):
        if p is None:
            return g
        return project_gradient(as_matrix(g), p).reshape(np.shape(g))

    def record(self, step: int, t, g, pg, p, estimate) -> None:
        rmse = float("nan")
        if self.x_true is not None:
            rmse = float(np.sqrt(np.mean((self.decode(estimate) - self.x_true) ** 2)))
        self.traj.records.append(StepRecord(
            step, float(t), float(np.linalg.norm(g)), float(np.linalg.norm(pg)),
            0 if p is None else p.r, rmse))
        if self.keep_states:
            self.traj.states.append(np.array(estimate))

    @staticmethod
    def check(step: int, z) -> None:
        if not np.all(np.isfinite(z)):
            raise DivergenceError(step, "non-finite state")
        if np.linalg.norm(z) > DIVERGENCE_NORM:
            raise DivergenceError(step, "state norm exceeded divergence threshold")


def _measurement_grad(prior, op, ae, y, z, t, sched):
    """``grad_z 0.5 ||y - A(D(E[z0 | z]))||^2`` through the exact Tweedie Jacobian."""
    z0 = prior.tweedie_denoise(z, t, sched)
    gx = op.data_fit_grad(ae.decode(z0), y)
    return prior.tweedie_vjp(z, t, sched, ae.decode_vjp(gx)), z0


def run_dps(prior: GmmPrior, op: ForwardOperator, y, sched: NoiseSchedule,
            cfg: GuidanceConfig, rng: np.random.Generator, ae: Autoencoder | None = None,
            x_true=None, keep_states: bool = False):
    """Ancestral sampling with a (projected) measurement-gradient step per reverse step.

    Returns ``(x0_hat, trajectory)``.
    """
    return run_psld_style(prior, op, y, sched, cfg, ae or Autoencoder(), 0.0, rng,
                          x_true=x_true, keep_states=keep_states)


def _gluing_target(op: ForwardOperator, y):
    """``A^T y``, standing in for ``A^T A x0*``; exact for masks, ``None`` otherwise."""
    if getattr(op, "kind", "") in ("box_mask", "random_mask"):
        return op.adjoint(y)
    return None


def _gluing_grad(op: ForwardOperator, ae: Autoencoder, target, z0):
    """Gradient in ``z0`` of ``0.5 * ||z0 - E(target + (I - A^T A) D(z0))||^2``."""
    x0 = ae.decode(z0)
    h = z0 - ae.encode(target + x0 - op.gram(x0))
    back = ae.encode_vjp(h)
    return h - ae.decode_vjp(back - op.gram(back))


def run_psld_style(prior: GmmPrior, op: ForwardOperator, y, sched: NoiseSchedule,
                   cfg: GuidanceConfig, ae: Autoencoder, gluing_weight, rng: np.random.Generator,
                   x_true=None, keep_states: bool = False):
    """Latent ancestral sampling with measurement and gluing gradients.

    ``gluing_weight`` is a scalar or a per-index array. The gluing term is
    only defined for mask operators; for other operators it is dropped.
    """
    latent = ae.latent_prior(prior)
    shape = latent.shape
    guide = _Guide(cfg, rng, x_true, ae.decode, keep_states)
    gw = np.asarray(gluing_weight, dtype=float)
    target = _gluing_target(op, y)

    z = rng.standard_normal(shape)
    for step, t in enumerate(range(sched.T, 0, -1)):
        g, z0 = _measurement_grad(latent, op, ae, y, z, t, sched)
        g = cfg.eta(t) * g
        gamma = float(gw) if gw.ndim == 0 else float(gw[t])
        if gamma and target is not None:
            gh = _gluing_grad(op, ae, target, z0)
            g = g + gamma * latent.tweedie_vjp(z, t, sched, gh)
        z_next = ancestral_step(z, z0, t, sched, rng)
        p = guide.projector(z, g) if step % cfg.freq == 0 else None
        pg = guide.project(g, p)
        z_next = z_next - pg
        guide.record(step, t, g, pg, p, z0)
        guide.check(step, z_next)
        z = z_next
    return ae.decode(z), guide.traj


def stochastic_resample(z0_y, z_prime_t, t: int, gamma: float, sched: NoiseSchedule,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw from the Gaussian that blends the consistent estimate with the unconditional sample.

    Mean ``(gamma sqrt(ab) z0_y + (1 - ab) z'_t) / (gamma + 1 - ab)``, variance
    ``gamma (1 - ab) / (gamma + 1 - ab)``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    ab = float(sched.alpha_bar[sched.check_index(t)])
    denom = gamma + 1.0 - ab
    mean = (gamma * np.sqrt(ab) * z0_y + (1.0 - ab) * z_prime_t) / denom
    var = gamma * (1.0 - ab) / denom
    if var == 0.0:
        return mean
    return mean + np.sqrt(var) * rng.standard_normal(np.shape(z0_y))


def run_resample_style(prior: GmmPrior, op: ForwardOperator, y, sched: NoiseSchedule,
                       cfg: GuidanceConfig, resample_steps, gd_iters: int, gd_lr: float,
                       gamma: float, ae: Autoencoder | None, rng: np.random.Generator,
                       ddim_eta: float = 0.0, x_true=None, keep_states: bool = False):
    """DDIM sampling with hard data consistency at the indices in ``resample_steps``.

    The projector is built once per consistency stage from the DDIM state
    and applied on inner iterations ``k`` with ``k % cfg.freq == 0``.
    """
    ae = ae or Autoencoder()
    latent = ae.latent_prior(prior)
    C = set(int(c) for c in resample_steps)
    if any(not 0 <= c < sched.T for c in C):
        raise ValueError("resample steps must lie in [0, T)")
    guide = _Guide(cfg, rng, x_true, ae.decode, keep_states)

    z = rng.standard_normal(latent.shape)
    for step, t in enumerate(range(sched.T - 1, -1, -1)):
        ab_next = sched.alpha_bar[t + 1]
        z0 = latent.tweedie_denoise(z, t + 1, sched)
        eps_hat = (z - np.sqrt(ab_next) * z0) / np.sqrt(1.0 - ab_next)
        delta = ddim_sigma(sched, t) if t > 0 else 0.0
        z_prime = ddim_step(z, z0, eps_hat, t, ddim_eta, delta, sched, rng)
        if t in C:
            z0_y = z0.copy()
            p = guide.projector(z_prime, op.data_fit_grad(ae.decode(z0_y), y)
                                if cfg.subspace == "gradient" else None)
            g = pg = np.zeros_like(z0_y)
            for k in range(gd_iters):
                g = ae.decode_vjp(op.data_fit_grad(ae.decode(z0_y), y))
                pg = guide.project(g, p) if k % cfg.freq == 0 else g
                z0_y = z0_y - gd_lr * pg
            guide.check(step, z0_y)
            guide.record(step, t, g, pg, p, z0_y)
            z = stochastic_resample(z0_y, z_prime, t, gamma, sched, rng)
        else:
            z = z_prime
        guide.check(step, z)
    return ae.decode(z), guide.traj


def daps_sigmas(n_levels: int = 50, sigma_max: float = 10.0, sigma_min: float = 0.01) -> np.ndarray:
    """Decreasing geometric annealing schedule with a final zero level."""
    return np.concatenate([np.geomspace(sigma_max, sigma_min, n_levels), [0.0]])


def daps_radius(sigma: float) -> float:
    """Spread ``r_t = sigma / sqrt(1 + sigma^2)`` of the Gaussian stand-in for ``p(x0 | x_t)``."""
    return float(sigma / np.sqrt(1.0 + sigma * sigma))


def daps_langevin_step(scale: float, noise_sigma: float):
    """Langevin step ``scale / (1/r^2 + 1/noise_sigma^2)`` as a ``(sigma, r) -> eta`` callable.

    The denominator bounds the drift curvature for operators with unit norm
    (masks, blur), so ``scale < 1`` keeps the Langevin drift stable at every level.
    """
    if not 0 < scale:
        raise ValueError("scale must be positive")
    inv_var_y = 1.0 / noise_sigma**2

    def step(sigma, r):
        return scale / (1.0 / r**2 + inv_var_y)

    return step


def pf_ode_denoise(prior: GmmPrior, x, sigma: float, n_steps: int = 20) -> np.ndarray:
    """Euler integration of ``dx/dsigma = -sigma * score(x, sigma)`` from ``sigma`` to 0."""
    x = np.array(x, dtype=float)
    if sigma == 0.0:
        return x
    levels = np.linspace(sigma, 0.0, n_steps + 1)
    for s, s_next in zip(levels[:-1], levels[1:]):
        x = x + (s - s_next) * s * prior.score_sigma(x, s)
    return x


def run_daps_style(prior: GmmPrior, op: ForwardOperator, y, sigmas, langevin_iters: int,
                   langevin_step, noise_sigma: float, cfg: GuidanceConfig,
                   rng: np.random.Generator, radius=daps_radius, ode_steps: int = 20,
                   x_true=None, keep_states: bool = False):
    """Annealed sampler: PF-ODE denoise, projected Langevin on ``x0``, re-noise.

    ``sigmas`` is decreasing, ``sigmas[0]`` is the starting level and the
    last entry the final level. ``langevin_step`` is a scalar, an array
    with one entry per annealing level, or a callable ``(sigma, r) -> eta``.
    The measurement enters through ``-data_fit_grad / noise_sigma**2``.
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(np.diff(sigmas) >= 0):
        raise ValueError("sigma schedule must be strictly decreasing")
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    guide = _Guide(cfg, rng, x_true, None, keep_states)
    inv_var_y = 1.0 / noise_sigma**2

    x = sigmas[0] * rng.standard_normal(prior.shape)
    for level in range(len(sigmas) - 1):
        s, s_next = sigmas[level], sigmas[level + 1]
        x0_ode = pf_ode_denoise(prior, x, s, ode_steps)
        r = radius(s)
        if callable(langevin_step):
            eta = float(langevin_step(s, r))
        else:
            ls = np.asarray(langevin_step, dtype=float)
            eta = float(ls) if ls.ndim == 0 else float(ls[level])
        x0 = x0_ode.copy()
        p = None
        if langevin_iters and cfg.projecting and cfg.subspace != "gradient":
            p = guide.projector(x0_ode)
        g = pg = np.zeros_like(x0)
        for j in range(langevin_iters):
            g = -(x0 - x0_ode) / r**2 - op.data_fit_grad(x0, y) * inv_var_y
            if cfg.projecting and cfg.subspace == "gradient":
                p = guide.projector(x0_ode, g)
            pg = guide.project(g, p) if j % cfg.freq == 0 else g
            x0 = x0 + eta * pg + np.sqrt(2.0 * eta) * rng.standard_normal(x0.shape)
        guide.check(level, x0)
        guide.record(level, s, g, pg, p, x0)
        x = x0 + s_next * rng.standard_normal(x0.shape) if s_next > 0 else x0
    return x, guide.traj
