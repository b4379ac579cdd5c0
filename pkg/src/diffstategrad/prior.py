"""Gaussian-mixture data priors with exact noised scores.

A mixture ``sum_i w_i N(mu_i, Sigma_i)`` stays a mixture under Gaussian
noising: at scale ``a`` and noise variance ``v`` the marginal is
``sum_i w_i N(a mu_i, a^2 Sigma_i + v I)``. The VP process uses
``a = sqrt(alpha_bar_t)``, ``v = 1 - alpha_bar_t``; the variance-exploding
view used by the annealed sampler uses ``a = 1``, ``v = sigma^2``.
Everything a trained score network would provide (scores, Tweedie
denoisers, their Jacobians) is computed in closed form here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .schedule import NoiseSchedule

__all__ = ["GmmPrior", "PosteriorGmm", "make_lowrank_prior", "exact_linear_posterior"]

_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmmPrior:
    """Mixture prior over matrix-shaped states.

    Attributes
    ----------
    weights : ndarray, shape (K,)
    means : ndarray, shape (K, rows, cols)
    covariances : ndarray, shape (K, d, d), ``d = rows * cols``
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _eigvals: np.ndarray = field(init=False, repr=False, compare=False)
    _eigvecs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 2:
            means = means[None]
        K = means.shape[0]
        d = means.shape[1] * means.shape[2]
        covs = np.asarray(self.covariances, dtype=float)
        if covs.ndim == 0 or covs.ndim == 1:
            covs = np.broadcast_to(covs.reshape(-1), (K,))[:, None, None] * np.eye(d)
        if covs.shape != (K, d, d):
            raise ValueError(f"covariances must have shape {(K, d, d)}, got {covs.shape}")
        if w.shape != (K,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a nonnegative vector summing to 1")
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        lam, Q = np.linalg.eigh(covs)
        if np.any(lam < -1e-10 * max(1.0, np.abs(lam).max())):
            k = int(np.argwhere(lam < 0)[0, 0])
            raise ValueError(f"covariance of component {k} is not positive semidefinite")
        lam = np.clip(lam, 0.0, None)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "_eigvals", lam)
        object.__setattr__(self, "_eigvecs", Q)

    @property
    def shape(self) -> tuple[int, int]:
        return self.means.shape[1:]

    @property
    def dim(self) -> int:
        return self.means.shape[1] * self.means.shape[2]

    @property
    def n_components(self) -> int:
        return len(self.weights)

    # -- noised marginals -------------------------------------------------

    def _terms(self, x, a: float, v: float):
        """Log-joint per component and per-component scores at ``x``."""
        x = np.asarray(x, dtype=float).reshape(-1)
        mu = self.means.reshape(self.n_components, -1)
        var = a * a * self._eigvals + v                      # (K, d)
        diff = x[None, :] - a * mu                           # (K, d)
        proj = np.einsum("kdj,kd->kj", self._eigvecs, diff)  # Q^T diff
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        log_joint = logw - 0.5 * (np.sum(proj**2 / var, axis=1)
                                  + np.sum(np.log(var), axis=1) + self.dim * _LOG2PI)
        scores = -np.einsum("kdj,kj->kd", self._eigvecs, proj / var)
        return log_joint, scores, var

    def log_density_scaled(self, x, a: float, v: float) -> float:
        log_joint, _, _ = self._terms(x, a, v)
        return float(logsumexp(log_joint))

    def score_scaled(self, x, a: float, v: float) -> np.ndarray:
        log_joint, scores, _ = self._terms(x, a, v)
        resp = np.exp(log_joint - logsumexp(log_joint))
        return (resp @ scores).reshape(np.shape(x))

    def responsibilities(self, x, a: float, v: float) -> np.ndarray:
        log_joint, _, _ = self._terms(x, a, v)
        return np.exp(log_joint - logsumexp(log_joint))

    def hessian_vp_scaled(self, x, a: float, v: float, u) -> np.ndarray:
        """Hessian-vector product of ``log p`` at ``x`` with direction ``u``."""
        log_joint, scores, var = self._terms(x, a, v)
        resp = np.exp(log_joint - logsumexp(log_joint))
        u = np.asarray(u, dtype=float).reshape(-1)
        proj_u = np.einsum("kdj,d->kj", self._eigvecs, u)
        prec_u = np.einsum("kdj,kj->kd", self._eigvecs, proj_u / var)  # C_k^{-1} u
        s_dot_u = scores @ u
        mean_score = resp @ scores
        hvp = -(resp @ prec_u) + (resp * s_dot_u) @ scores - mean_score * (mean_score @ u)
        return hvp.reshape(np.shape(x))

    # VP-indexed views

    @staticmethod
    def _vp(t: int, sched: NoiseSchedule) -> tuple[float, float]:
        ab = float(sched.alpha_bar[sched.check_index(t)])
        return np.sqrt(ab), 1.0 - ab

    def log_density(self, x, t: int, sched: NoiseSchedule) -> float:
        return self.log_density_scaled(x, *self._vp(t, sched))

    def score(self, x, t: int, sched: NoiseSchedule) -> np.ndarray:
        """Exact ``grad log p_t(x)`` of the VP-noised mixture."""
        return self.score_scaled(x, *self._vp(t, sched))

    def tweedie_denoise(self, x_t, t: int, sched: NoiseSchedule) -> np.ndarray:
        """``E[x0 | x_t] = (x_t + (1 - ab_t) score) / sqrt(ab_t)``."""
        a, v = self._vp(t, sched)
        if v == 0.0:
            return np.array(x_t, dtype=float)
        return (x_t + v * self.score_scaled(x_t, a, v)) / a

    def tweedie_vjp(self, x_t, t: int, sched: NoiseSchedule, u) -> np.ndarray:
        """``J^T u`` for the Jacobian ``J`` of :meth:`tweedie_denoise` (``J`` is symmetric)."""
        a, v = self._vp(t, sched)
        if v == 0.0:
            return np.array(u, dtype=float)
        return (u + v * self.hessian_vp_scaled(x_t, a, v, u)) / a

    # variance-exploding views (x_sigma = x0 + sigma * eps)

    def score_sigma(self, x, sigma: float) -> np.ndarray:
        return self.score_scaled(x, 1.0, sigma * sigma)

    def denoise_sigma(self, x, sigma: float) -> np.ndarray:
        if sigma == 0.0:
            return np.array(x, dtype=float)
        return x + sigma * sigma * self.score_sigma(x, sigma)

    # -- moments and sampling ---------------------------------------------

    def mean(self) -> np.ndarray:
        return np.tensordot(self.weights, self.means, axes=1)

    def covariance(self) -> np.ndarray:
        mu = self.means.reshape(self.n_components, -1)
        m = self.weights @ mu
        second = np.einsum("k,kij->ij", self.weights, self.covariances)
        second += np.einsum("k,ki,kj->ij", self.weights, mu, mu)
        return second - np.outer(m, m)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        k = int(rng.choice(self.n_components, p=self.weights))
        xi = rng.standard_normal(self.dim)
        draw = self._eigvecs[k] @ (np.sqrt(self._eigvals[k]) * xi)
        return self.means[k] + draw.reshape(self.shape)

    def sample_n(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.stack([self.sample(rng) for _ in range(n)])

    def pushforward(self, E: np.ndarray, shape: tuple[int, int] | None = None) -> "GmmPrior":
        """Distribution of ``E @ vec(x)`` for ``x`` drawn from this prior."""
        from .linalg import most_square_shape

        E = np.asarray(E, dtype=float)
        shape = shape or most_square_shape(E.shape[0])
        mu = self.means.reshape(self.n_components, -1) @ E.T
        covs = np.einsum("ij,kjl,ml->kim", E, self.covariances, E)
        return GmmPrior(self.weights, mu.reshape((-1,) + tuple(shape)), covs)

    def to_dict(self) -> dict:
        """Serialisable form; only isotropic covariances are supported."""
        from .linalg import format_matrix

        scales = []
        eye = np.eye(self.dim)
        for k, cov in enumerate(self.covariances):
            c = float(cov[0, 0])
            if not np.allclose(cov, c * eye, atol=0, rtol=0):
                raise ValueError(f"component {k} covariance is not scalar times identity")
            scales.append(c)
        return {
            "weights": [float(w) for w in self.weights],
            "means": [format_matrix(m) for m in self.means],
            "cov_scales": scales,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GmmPrior":
        from .linalg import parse_matrix

        means = np.stack([parse_matrix(m) for m in data["means"]])
        return cls(np.asarray(data["weights"], dtype=float), means,
                   np.asarray(data["cov_scales"], dtype=float))


PosteriorGmm = GmmPrior


def make_lowrank_prior(rng: np.random.Generator, shape=(8, 8), n_components: int = 4,
                       rank: int = 2, cov_scale: float = 1e-3,
                       singular_values=(4.0, 2.0), shared_rank: int | None = None) -> GmmPrior:
    """Equal-weight mixture whose means are random rank-``rank`` outer-product sums.

    By default every component draws its own row and column bases. With
    ``shared_rank = m`` all means live in one common ``m``-dimensional row
    space and column space, ``mu_k = U (A_k diag(sv) B_k^T) V^T``, which
    mimics image classes that share a low-frequency subspace.
    """
    rows, cols = shape
    sv = np.resize(np.asarray(singular_values, dtype=float), rank)
    if shared_rank is not None:
        if not rank <= shared_rank <= min(rows, cols):
            raise ValueError("shared_rank must lie between rank and the smaller side")
        U0 = np.linalg.qr(rng.standard_normal((rows, shared_rank)))[0]
        V0 = np.linalg.qr(rng.standard_normal((cols, shared_rank)))[0]
    means = []
    for _ in range(n_components):
        if shared_rank is None:
            U = np.linalg.qr(rng.standard_normal((rows, rank)))[0]
            V = np.linalg.qr(rng.standard_normal((cols, rank)))[0]
        else:
            U = U0 @ np.linalg.qr(rng.standard_normal((shared_rank, rank)))[0]
            V = V0 @ np.linalg.qr(rng.standard_normal((shared_rank, rank)))[0]
        means.append((U * sv) @ V.T)
    weights = np.full(n_components, 1.0 / n_components)
    return GmmPrior(weights, np.stack(means), np.full(n_components, cov_scale))


def exact_linear_posterior(prior: GmmPrior, A: np.ndarray, y, noise_sigma: float) -> GmmPrior:
    """Condition each component on ``y = A vec(x) + noise_sigma * n`` by Gaussian conjugacy.

    Component weights are reweighted by their evidences ``N(y; A mu_k, A S_k A^T + s^2 I)``.
    """
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    K = prior.n_components
    mu = prior.means.reshape(K, -1)
    new_means, new_covs, log_ev = [], [], []
    for k in range(K):
        S = prior.covariances[k]
        SAt = S @ A.T
        innov = A @ SAt + noise_sigma**2 * np.eye(A.shape[0])
        chol = np.linalg.cholesky(innov)
        resid = y - A @ mu[k]
        gain = np.linalg.solve(innov, SAt.T).T
        m_post = mu[k] + gain @ resid
        c_post = S - gain @ SAt.T
        c_post = 0.5 * (c_post + c_post.T)
        lam_min = np.linalg.eigvalsh(c_post).min()
        if lam_min < -1e-8 * max(1.0, np.abs(S).max()):
            raise ValueError(f"posterior covariance of component {k} lost positive semidefiniteness "
                             f"(min eigenvalue {lam_min:.3e})")
        white = np.linalg.solve(chol, resid)
        log_ev.append(np.log(prior.weights[k]) - 0.5 * white @ white
                      - np.log(np.diag(chol)).sum() - 0.5 * len(y) * _LOG2PI)
        new_means.append(m_post.reshape(prior.shape))
        new_covs.append(c_post)
    log_ev = np.array(log_ev)
    w = np.exp(log_ev - logsumexp(log_ev))
    w = w / w.sum()
    return GmmPrior(w, np.stack(new_means), np.stack(new_covs))

