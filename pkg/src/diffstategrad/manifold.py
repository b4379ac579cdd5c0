"""Closed-form manifolds for checking that projected updates stay closer to the manifold.

Each kind has an exact nearest-point map, so distances are computed, not
optimised. For a point ``z`` on the manifold and a gradient ``g`` the two
updates compared are ``z - eta * g`` and ``z - eta * P(g)`` where ``P`` is
an (exact or perturbed) tangent-space projector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Manifold", "TangentFrame", "linear_subspace", "sphere", "product_torus",
    "matrix_subspace", "dist_to_manifold", "nearest_point", "tangent_frame",
    "random_point", "verify_prop1", "perturbed_projector", "fit_power_law",
    "rank_variety_distance", "rank_variety_tangent_projector",
]


@dataclass(frozen=True)
class Manifold:
    kind: str
    ambient_dim: int
    intrinsic_dim: int
    basis: np.ndarray | None = None
    radius: float = 1.0
    radii: tuple = ()

    def __post_init__(self):
        if not self.intrinsic_dim < self.ambient_dim:
            raise ValueError("intrinsic dimension must be below the ambient dimension")


@dataclass(frozen=True)
class TangentFrame:
    point: np.ndarray
    basis: np.ndarray  # (d, m), orthonormal columns

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def linear_subspace(basis) -> Manifold:
    """Subspace through the origin spanned by the columns of ``basis`` (orthonormalised)."""
    B = np.linalg.qr(np.asarray(basis, dtype=float))[0]
    return Manifold("linear_subspace", B.shape[0], B.shape[1], basis=B)


def sphere(d: int, radius: float = 1.0) -> Manifold:
    return Manifold("sphere", d, d - 1, radius=float(radius))


def product_torus(radii) -> Manifold:
    """Product of circles; circle ``j`` lives in coordinates ``(2j, 2j + 1)``."""
    radii = tuple(float(r) for r in radii)
    return Manifold("product_torus", 2 * len(radii), len(radii), radii=radii)


def matrix_subspace(U, V) -> Manifold:
    """Matrices ``U C V^T`` (``C`` free), flattened row-major."""
    return linear_subspace(np.kron(np.asarray(U), np.asarray(V)))


def nearest_point(man: Manifold, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if man.kind == "linear_subspace":
        return man.basis @ (man.basis.T @ z)
    if man.kind == "sphere":
        n = np.linalg.norm(z)
        if n == 0:
            raise ValueError("nearest point on a sphere is undefined at the centre")
        return man.radius * z / n
    if man.kind == "product_torus":
        pairs = z.reshape(-1, 2)
        norms = np.linalg.norm(pairs, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("nearest point on a circle is undefined at its centre")
        return (pairs / norms * np.asarray(man.radii)[:, None]).reshape(-1)
    raise ValueError(f"unknown manifold kind {man.kind!r}")


def dist_to_manifold(man: Manifold, z) -> float:
    z = np.asarray(z, dtype=float)
    if man.kind == "linear_subspace":
        return float(np.linalg.norm(z - man.basis @ (man.basis.T @ z)))
    if man.kind == "sphere":
        return float(abs(np.linalg.norm(z) - man.radius))
    if man.kind == "product_torus":
        norms = np.linalg.norm(z.reshape(-1, 2), axis=1)
        return float(np.linalg.norm(norms - np.asarray(man.radii)))
    raise ValueError(f"unknown manifold kind {man.kind!r}")


def random_point(man: Manifold, rng: np.random.Generator) -> np.ndarray:
    if man.kind == "linear_subspace":
        return man.basis @ rng.standard_normal(man.intrinsic_dim)
    if man.kind == "sphere":
        v = rng.standard_normal(man.ambient_dim)
        return man.radius * v / np.linalg.norm(v)
    theta = rng.uniform(0, 2 * np.pi, man.intrinsic_dim)
    r = np.asarray(man.radii)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).reshape(-1)


def tangent_frame(man: Manifold, z, tol: float = 1e-10) -> TangentFrame:
    z = np.asarray(z, dtype=float)
    if dist_to_manifold(man, z) > tol * max(1.0, np.linalg.norm(z)):
        raise ValueError("point is not on the manifold")
    if man.kind == "linear_subspace":
        return TangentFrame(z, man.basis)
    if man.kind == "sphere":
        normal = z / np.linalg.norm(z)
        # complete the normal to an orthonormal basis; drop the normal column
        Q = np.linalg.qr(np.column_stack([normal, np.eye(man.ambient_dim)]))[0]
        return TangentFrame(z, Q[:, 1:man.ambient_dim])
    # torus: each circle contributes its unit tangent (-sin, cos)
    pairs = z.reshape(-1, 2)
    k = len(pairs)
    B = np.zeros((2 * k, k))
    for j, (a, b) in enumerate(pairs):
        r = np.hypot(a, b)
        B[2 * j, j], B[2 * j + 1, j] = -b / r, a / r
    return TangentFrame(z, B)


def perturbed_projector(frame: TangentFrame, epsilon_scale: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Exact tangent projector plus a random matrix of operator norm ``epsilon_scale``."""
    if epsilon_scale < 0:
        raise ValueError("epsilon_scale must be nonnegative")
    P = frame.projector()
    if epsilon_scale == 0:
        return P
    E = rng.standard_normal(P.shape)
    return P + epsilon_scale * E / np.linalg.norm(E, 2)


def verify_prop1(man: Manifold, z, g, eta: float, projector=None):
    """Distances after the plain and the projected update.

    Returns ``(dist_std, dist_proj, margin)`` with ``margin = dist_std - dist_proj``.
    ``projector`` is a matrix or a callable; defaults to the exact tangent projector.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    z, g = np.asarray(z, dtype=float), np.asarray(g, dtype=float)
    if projector is None:
        projector = tangent_frame(man, z).projector()
    pg = projector(g) if callable(projector) else projector @ g
    d_std = dist_to_manifold(man, z - eta * g)
    d_proj = dist_to_manifold(man, z - eta * pg)
    return d_std, d_proj, d_std - d_proj


def fit_power_law(x, y) -> tuple[float, float]:
    """Least-squares fit of ``log y = p log x + log K``; returns ``(p, K)``."""
    p, logk = np.polyfit(np.log(np.asarray(x)), np.log(np.asarray(y)), 1)
    return float(p), float(np.exp(logk))


# Rank-r matrix variety: tangent space at Z = U S V^T is {U A^T + B V^T}.

def rank_variety_distance(X, r: int) -> float:
    """Distance from ``X`` to the set of matrices of rank at most ``r``."""
    s = np.linalg.svd(np.asarray(X, dtype=float), compute_uv=False)
    return float(np.sqrt(np.sum(s[r:] ** 2)))


def rank_variety_tangent_projector(U, V):
    """Exact tangent projector ``G -> UU^T G + G VV^T - UU^T G VV^T``."""
    PU, PV = U @ U.T, V @ V.T

    def project(G):
        return PU @ G + G @ PV - PU @ G @ PV

    return project
