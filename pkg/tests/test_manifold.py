import numpy as np
import pytest

from diffstategrad import manifold as mf
from diffstategrad.linalg import build_projector, project_gradient


def test_distances_hand_examples():
    assert np.isclose(mf.dist_to_manifold(mf.sphere(3), np.array([2.0, 0, 0])), 1.0)
    line = mf.linear_subspace(np.array([[1.0], [0.0]]))
    assert np.isclose(mf.dist_to_manifold(line, np.array([3.0, 4.0])), 4.0)
    torus = mf.product_torus([1.0, 2.0])
    assert np.isclose(mf.dist_to_manifold(torus, np.array([3.0, 0, 0, 2.0])), 2.0)


@pytest.mark.parametrize("man", [mf.sphere(5, 2.0), mf.product_torus([1.0, 0.5, 2.0]),
                                 mf.linear_subspace(np.random.default_rng(0).standard_normal((6, 2)))],
                         ids=lambda m: m.kind)
def test_points_frames_and_nearest(man, rng):
    for _ in range(20):
        z = mf.random_point(man, rng)
        assert mf.dist_to_manifold(man, z) < 1e-10
        B = mf.tangent_frame(man, z).basis
        assert B.shape == (man.ambient_dim, man.intrinsic_dim)
        assert np.allclose(B.T @ B, np.eye(man.intrinsic_dim), atol=1e-10)
        w = rng.standard_normal(man.ambient_dim)
        p = mf.nearest_point(man, w)
        assert np.isclose(np.linalg.norm(w - p), mf.dist_to_manifold(man, w))


def test_frame_orthogonal_to_normals(rng):
    z = mf.random_point(mf.sphere(4), rng)
    B = mf.tangent_frame(mf.sphere(4), z).basis
    assert np.allclose(B.T @ z, 0, atol=1e-10)
    e1 = np.eye(4)[0]
    assert np.allclose(np.abs(mf.tangent_frame(mf.sphere(4), e1).basis[0]), 0, atol=1e-12)
    with pytest.raises(ValueError):
        mf.tangent_frame(mf.sphere(4), 2 * e1)


def test_manifold_validation():
    with pytest.raises(ValueError):
        mf.Manifold("sphere", 3, 3)
    with pytest.raises(ValueError):
        mf.nearest_point(mf.sphere(3), np.zeros(3))
    with pytest.raises(ValueError):
        mf.perturbed_projector(mf.tangent_frame(mf.sphere(3), np.eye(3)[0]), -1.0, None)


def test_linear_exactness(rng):
    man = mf.linear_subspace(rng.standard_normal((8, 3)))
    for _ in range(100):
        z, g, eta = mf.random_point(man, rng), rng.standard_normal(8), rng.uniform(0.01, 10)
        d_std, d_proj, margin = mf.verify_prop1(man, z, g, eta)
        g_perp = g - man.basis @ (man.basis.T @ g)
        assert d_proj <= 1e-10
        assert np.isclose(d_std, eta * np.linalg.norm(g_perp), rtol=1e-8)
    z = mf.random_point(man, rng)
    assert mf.verify_prop1(man, z, man.basis @ rng.standard_normal(3), 0.5)[0] < 1e-10
    with pytest.raises(ValueError):
        mf.verify_prop1(man, z, z, 0.0)


def test_sphere_first_order(rng):
    man = mf.sphere(16)
    z = mf.random_point(man, rng)
    g = rng.standard_normal(16)
    g_perp = (g @ z) * z
    # the curvature term is O(eta^2 |g|^2), so the ratio settles once eta |g| is small
    for eta in (1e-5, 1e-6):
        d_std = mf.verify_prop1(man, z, g, eta)[0]
        assert abs(d_std / eta / np.linalg.norm(g_perp) - 1) < 0.01


def test_perturbed_projector_norm(rng):
    frame = mf.tangent_frame(mf.sphere(6), mf.random_point(mf.sphere(6), rng))
    P = frame.projector()
    assert np.array_equal(mf.perturbed_projector(frame, 0.0, rng), P)
    Q = mf.perturbed_projector(frame, 0.05, rng)
    assert np.isclose(np.linalg.norm(Q - P, 2), 0.05)


def test_power_law_fit():
    x = np.geomspace(1e-4, 1e-2, 10)
    p, K = mf.fit_power_law(x, 3.0 * x**2)
    assert np.isclose(p, 2.0) and np.isclose(K, 3.0)


def test_rank_variety_connection(rng):
    # the state-subspace projector keeps a rank-r state within second order of the variety
    U = np.linalg.qr(rng.standard_normal((8, 2)))[0]
    V = np.linalg.qr(rng.standard_normal((8, 2)))[0]
    Z = U @ np.diag([3.0, 1.5]) @ V.T
    p = build_projector(Z, 0.999)
    assert p.r == 2
    tangent = mf.rank_variety_tangent_projector(p.U_r, p.V_r)
    G = rng.standard_normal((8, 8))
    assert np.allclose(tangent(project_gradient(G, p)), project_gradient(G, p))
    for eta in (1e-2, 1e-3):
        d_proj = mf.rank_variety_distance(Z - eta * project_gradient(G, p), 2)
        d_std = mf.rank_variety_distance(Z - eta * G, 2)
        assert d_proj <= 1e-12 and d_std > 0
    # matrix subspaces flatten row-major, matching numpy reshape
    man = mf.matrix_subspace(U, V)
    assert mf.dist_to_manifold(man, (U @ rng.standard_normal((2, 2)) @ V.T).ravel()) < 1e-10
