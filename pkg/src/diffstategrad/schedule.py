"""Discrete variance-preserving noise schedule and reverse-step coefficients.

Arrays are indexed ``0..T``; index 0 is the clean-data convention with
``alpha_bar[0] == 1`` and ``beta[0] == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseSchedule", "make_vp_schedule", "add_noise", "ddim_sigma",
           "ddim_step", "ancestral_step"]


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha_bar: np.ndarray
    sigma_tilde: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta) - 1

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    def check_index(self, t: int, lo: int = 0) -> int:
        t = int(t)
        if not lo <= t <= self.T:
            raise IndexError(f"time index {t} outside [{lo}, {self.T}]")
        return t


def make_vp_schedule(T: int = 200, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """Linear-beta VP schedule with ancestral posterior standard deviations."""
    if T < 2:
        raise ValueError(f"T must be at least 2, got {T}")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    beta = np.concatenate([[0.0], np.linspace(beta_min, beta_max, T)])
    alpha_bar = np.cumprod(1.0 - beta)
    sigma_tilde = np.zeros(T + 1)
    sigma_tilde[1:] = np.sqrt(beta[1:] * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]))
    return NoiseSchedule(beta, alpha_bar, sigma_tilde)


def add_noise(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    t = sched.check_index(t)
    ab = sched.alpha_bar[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def ddim_sigma(sched: NoiseSchedule, t: int) -> float:
    """DDIM noise scale for the jump ``t + 1 -> t``."""
    a_t, a_next = sched.alpha_bar[t], sched.alpha_bar[t + 1]
    return float(np.sqrt((1.0 - a_t) / (1.0 - a_next) * (1.0 - a_next / a_t)))


def ddim_step(z_next, z0_hat, eps_hat, t: int, eta: float, delta: float,
              sched: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Unconditional DDIM step landing at index ``t``.

    ``sqrt(ab_t) z0 + sqrt(1 - ab_t - (eta*delta)^2) eps_hat + eta*delta*eps1``.
    ``z_next`` is accepted for signature symmetry; the step only needs its
    Tweedie pair ``(z0_hat, eps_hat)``.
    """
    t = sched.check_index(t)
    ab = sched.alpha_bar[t]
    noise_std = eta * delta
    det = 1.0 - ab - noise_std**2
    if det < -1e-12:
        raise ValueError(f"DDIM step at t={t}: negative variance 1 - alpha_bar - (eta*delta)^2 = {det}")
    out = np.sqrt(ab) * z0_hat + np.sqrt(max(det, 0.0)) * eps_hat
    if noise_std:
        out = out + noise_std * rng.standard_normal(np.shape(z0_hat))
    return out


def ancestral_step(z_t, z0_hat, t: int, sched: NoiseSchedule, rng: np.random.Generator,
                   noise: bool = True) -> np.ndarray:
    """DDPM posterior-mean step ``t -> t - 1`` plus ``sigma_tilde_t`` noise."""
    t = sched.check_index(t)
    if t == 0:
        raise ValueError("ancestral step needs t >= 1")
    ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    beta = sched.beta[t]
    c_state = np.sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab)
    c_clean = np.sqrt(ab_prev) * beta / (1.0 - ab)
    out = c_state * z_t + c_clean * z0_hat
    if noise:
        out = out + sched.sigma_tilde[t] * rng.standard_normal(np.shape(z_t))
    return out
