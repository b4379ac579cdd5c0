"""Reconstruction and posterior-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MetricReport", "psnr", "ssim", "nmse", "failure_rate", "posterior_moment_error",
           "to_unit_range", "aligned_psnr", "sign_test"]


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    nmse: float
    per_seed: dict = field(default_factory=dict)


def _same_shape(x, ref):
    x, ref = np.asarray(x, dtype=float), np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    return x, ref


def to_unit_range(x):
    """Map states from ``[-1, 1]`` to image range ``[0, 1]``."""
    return 0.5 * (np.asarray(x, dtype=float) + 1.0)


def psnr(x, ref, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when ``x == ref``."""
    x, ref = _same_shape(x, ref)
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak**2 / mse)


def ssim(x, ref, peak: float = 1.0, win: int = 8) -> float:
    """Mean SSIM over all ``win x win`` sliding windows (uniform weights).

    Images smaller than the window use a single window covering the whole image.
    """
    x, ref = _same_shape(x, ref)
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    w0, w1 = min(win, x.shape[0]), min(win, x.shape[1])
    xs = np.lib.stride_tricks.sliding_window_view(x, (w0, w1))
    rs = np.lib.stride_tricks.sliding_window_view(ref, (w0, w1))
    axes = (-2, -1)
    mx, mr = xs.mean(axis=axes), rs.mean(axis=axes)
    vx = xs.var(axis=axes)
    vr = rs.var(axis=axes)
    cov = ((xs - mx[..., None, None]) * (rs - mr[..., None, None])).mean(axis=axes)
    num = (2 * mx * mr + c1) * (2 * cov + c2)
    den = (mx**2 + mr**2 + c1) * (vx + vr + c2)
    return float(np.mean(num / den))


def nmse(x, ref) -> float:
    x, ref = _same_shape(x, ref)
    denom = float(np.sum(ref * ref))
    if denom == 0.0:
        raise ValueError("nmse undefined for a zero reference")
    return float(np.sum((x - ref) ** 2)) / denom


def aligned_psnr(x, ref, peak: float = 1.0) -> float:
    """PSNR against the better of ``x`` and its 180-degree rotation.

    Fourier magnitudes cannot tell the two apart.
    """
    return max(psnr(x, ref, peak), psnr(np.asarray(x)[::-1, ::-1], ref, peak))


def failure_rate(psnrs, threshold_db: float = 20.0) -> float:
    values = np.asarray(list(psnrs), dtype=float)
    if values.size == 0:
        raise ValueError("failure_rate of an empty list")
    return float(np.mean(values < threshold_db))


def posterior_moment_error(samples, exact) -> float:
    """Relative error of the sample mean plus relative error of the covariance trace.

    ``exact`` is a :class:`~diffstategrad.prior.GmmPrior`. Falls back to
    absolute mean error when the exact mean is zero.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    flat = samples.reshape(samples.shape[0], -1)
    m_hat = flat.mean(axis=0)
    tr_hat = float(np.sum(flat.var(axis=0, ddof=1)))
    m = exact.mean().reshape(-1)
    tr = float(np.trace(exact.covariance()))
    m_norm = float(np.linalg.norm(m))
    mean_err = np.linalg.norm(m_hat - m)
    mean_term = mean_err / m_norm if m_norm > 0 else mean_err
    trace_term = abs(tr_hat - tr) / tr if tr > 0 else abs(tr_hat - tr)
    return float(mean_term + trace_term)


def sign_test(wins: int, losses: int) -> float:
    """One-sided sign-test p-value for ``wins`` out of ``wins + losses`` (ties dropped)."""
    from scipy.stats import binomtest

    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)
