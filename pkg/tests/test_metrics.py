import numpy as np
import pytest

from diffstategrad.metrics import (aligned_psnr, failure_rate, nmse, posterior_moment_error,
                                   psnr, sign_test, ssim, to_unit_range)
from diffstategrad.prior import GmmPrior


def test_psnr_examples(rng):
    x = rng.uniform(0, 1, (8, 8))
    assert psnr(x, x) == float("inf")
    assert np.isclose(psnr(x + 0.1, x), 20.0)
    noise = rng.standard_normal((8, 8)) * 0.05
    assert np.isclose(psnr(x + noise, x) - psnr(x + np.sqrt(2) * noise, x), 10 * np.log10(2))
    with pytest.raises(ValueError):
        psnr(x, x[:4])
    with pytest.raises(ValueError):
        psnr(x, x, peak=0)


def test_ssim_examples(rng):
    x = rng.uniform(0, 1, (8, 8))
    assert np.isclose(ssim(x, x), 1.0)
    checker = (np.indices((8, 8)).sum(axis=0) % 2).astype(float)
    assert ssim(checker, 1 - checker) < 0
    # a common shift leaves every term unchanged when the two local means agree
    ref = x + 0.01 * rng.standard_normal((8, 8))
    ref += x.mean() - ref.mean()
    assert abs(ssim(x + 0.3, ref + 0.3) - ssim(x, ref)) < 1e-3
    with pytest.raises(ValueError):
        ssim(x, x[:, :4])


def test_ssim_windows_and_bounds(rng):
    x, y = rng.uniform(0, 1, (12, 12)), rng.uniform(0, 1, (12, 12))
    # sliding 8x8 windows, averaged; checked against an explicit loop
    vals = []
    for i in range(5):
        for j in range(5):
            a, b = x[i:i + 8, j:j + 8], y[i:i + 8, j:j + 8]
            c1, c2 = 1e-4, 9e-4
            cov = np.mean((a - a.mean()) * (b - b.mean()))
            vals.append((2 * a.mean() * b.mean() + c1) * (2 * cov + c2)
                        / ((a.mean() ** 2 + b.mean() ** 2 + c1) * (a.var() + b.var() + c2)))
    assert np.isclose(ssim(x, y), np.mean(vals))
    for _ in range(10_000 // 100):
        a, b = rng.uniform(-1, 1, (8, 8)), rng.uniform(-1, 1, (8, 8))
        assert -1 <= ssim(a, b) <= 1


def test_nmse_examples(rng):
    ref = rng.standard_normal((4, 4))
    assert nmse(ref, ref) == 0
    assert np.isclose(nmse(np.zeros_like(ref), ref), 1)
    assert np.isclose(nmse(2 * ref, ref), 1)
    with pytest.raises(ValueError):
        nmse(ref, np.zeros_like(ref))


def test_failure_rate():
    assert failure_rate([25, 30]) == 0
    assert failure_rate([1, 2]) == 1
    assert failure_rate([19, 21, 25, 18], 20) == 0.5
    assert failure_rate([20.0]) == 0  # strictly below
    with pytest.raises(ValueError):
        failure_rate([])


def test_aligned_psnr_sees_rotation(rng):
    x = rng.uniform(0, 1, (8, 8))
    assert aligned_psnr(x[::-1, ::-1], x) == float("inf")
    assert np.allclose(to_unit_range(np.array([-1.0, 0.0, 1.0])), [0, 0.5, 1])


def test_noise_lowers_psnr_on_average(rng):
    ref = rng.uniform(0, 1, (8, 8))
    x = ref + 0.05 * rng.standard_normal((8, 8))
    base = psnr(x, ref)
    noisier = np.mean([psnr(x + 0.05 * rng.standard_normal((8, 8)), ref) for _ in range(200)])
    assert noisier < base


def test_posterior_moment_error(rng):
    mean = rng.standard_normal((2, 3))
    exact = GmmPrior(np.ones(1), mean[None], np.array([0.5]))
    assert np.isclose(posterior_moment_error(np.stack([mean] * 5), exact), 1.0)
    n = 10_000
    draws = mean + np.sqrt(0.5) * rng.standard_normal((n, 2, 3))
    err = posterior_moment_error(draws, exact)
    assert err <= 5 / np.sqrt(n) * (1 + np.sqrt(6 * 0.5) / np.linalg.norm(mean) + np.sqrt(2))
    errs = [posterior_moment_error(mean + np.sqrt(0.5) * rng.standard_normal((m, 2, 3)), exact)
            for m in (100, 100_000)]
    assert errs[1] < errs[0]
    zero = GmmPrior(np.ones(1), np.zeros((1, 2, 3)), np.array([0.5]))
    assert np.isfinite(posterior_moment_error(draws - mean, zero))
    with pytest.raises(ValueError):
        posterior_moment_error(draws[:1], exact)


def test_sign_test():
    assert sign_test(0, 0) == 1.0
    assert np.isclose(sign_test(20, 0), 0.5**20)
    assert sign_test(10, 10) > 0.5
