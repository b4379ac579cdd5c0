"""Measurement operators ``y = A(x) + n`` with exact data-fit gradients.

States are matrices whose entries live roughly in ``[-1, 1]``. Linear
operators expose their adjoint and a dense matrix (built once by applying
the operator to the standard basis), which the exact posterior oracle and
the PSLD gluing term need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .linalg import format_matrix, parse_matrix

__all__ = [
    "ForwardOperator", "MaskOperator", "BlurOperator", "DownsampleOperator",
    "PhaseRetrievalOperator", "HdrOperator", "Measurement",
    "box_mask", "random_mask", "gaussian_blur", "downsample", "phase_retrieval", "hdr_clip",
    "make_operator", "make_measurement", "gaussian_kernel", "catmull_rom_matrix",
]


@dataclass(frozen=True)
class Measurement:
    y: np.ndarray
    noise_sigma: float


class ForwardOperator:
    kind: str = ""
    linear: bool = False

    def __init__(self, in_shape):
        self.in_shape = tuple(int(n) for n in in_shape)
        self._dense = None

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.in_shape

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != self.in_shape:
            raise ValueError(f"{self.kind}: expected input shape {self.in_shape}, got {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        return self._apply(self._check(x))

    __call__ = apply

    def _apply(self, x):
        raise NotImplementedError

    def adjoint(self, u) -> np.ndarray:
        raise TypeError(f"{self.kind} is not linear")

    def data_fit(self, x, y) -> float:
        r = self.apply(x) - y
        return 0.5 * float(np.sum(r * r))

    def data_fit_grad(self, x, y) -> np.ndarray:
        """Gradient of ``0.5 * ||y - A(x)||^2`` with respect to ``x``."""
        x = self._check(x)
        return self.adjoint(self._apply(x) - y)

    def matrix(self) -> np.ndarray:
        """Dense ``(prod(out_shape), prod(in_shape))`` matrix of a linear operator."""
        if not self.linear:
            raise TypeError(f"{self.kind} is not linear")
        if self._dense is None:
            d = int(np.prod(self.in_shape))
            basis = np.eye(d).reshape((d,) + self.in_shape)
            cols = [self._apply(b).reshape(-1) for b in basis]
            self._dense = np.stack(cols, axis=1)
        return self._dense

    def gram(self, x) -> np.ndarray:
        """``A^T A x`` for linear operators."""
        return self.adjoint(self.apply(x))

    def to_dict(self) -> dict:
        raise NotImplementedError


class MaskOperator(ForwardOperator):
    linear = True

    def __init__(self, mask, kind: str = "random_mask"):
        mask = np.asarray(mask, dtype=float)
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        super().__init__(mask.shape)
        self.mask = mask
        self.kind = kind

    def _apply(self, x):
        return x * self.mask

    def adjoint(self, u):
        return np.asarray(u, dtype=float) * self.mask

    def to_dict(self):
        return {"kind": self.kind, "mask": format_matrix(self.mask)}


def box_mask(shape=(8, 8), box=None, corner=None) -> MaskOperator:
    """Zero out a square box; defaults to the centred half-side (quarter-area) box."""
    rows, cols = shape
    box = box or (rows // 2, cols // 2)
    if corner is None:
        corner = ((rows - box[0]) // 2, (cols - box[1]) // 2)
    mask = np.ones(shape)
    mask[corner[0]:corner[0] + box[0], corner[1]:corner[1] + box[1]] = 0.0
    return MaskOperator(mask, kind="box_mask")


def random_mask(shape=(8, 8), drop: float = 0.7, rng=None) -> MaskOperator:
    """Drop ``round(drop * n)`` pixels chosen uniformly at random."""
    rng = np.random.default_rng(rng)
    n = int(np.prod(shape))
    n_drop = int(round(drop * n))
    mask = np.ones(n)
    mask[rng.permutation(n)[:n_drop]] = 0.0
    return MaskOperator(mask.reshape(shape), kind="random_mask")


def gaussian_kernel(sigma: float, size: int | None = None) -> np.ndarray:
    if size is None:
        size = 2 * int(np.ceil(3 * sigma)) + 1
    if sigma == 0:
        k = np.zeros((size, size))
        k[size // 2, size // 2] = 1.0
        return k
    ax = np.arange(size) - size // 2
    g = np.exp(-0.5 * (ax / sigma) ** 2)
    k = np.outer(g, g)
    return k / k.sum()


class BlurOperator(ForwardOperator):
    kind = "gaussian_blur"
    linear = True

    def __init__(self, in_shape, kernel, sigma: float | None = None):
        super().__init__(in_shape)
        self.kernel = np.asarray(kernel, dtype=float)
        self.sigma = sigma

    def _apply(self, x):
        return ndimage.convolve(x, self.kernel, mode="reflect")

    def adjoint(self, u):
        u = np.asarray(u, dtype=float).reshape(-1)
        return (self.matrix().T @ u).reshape(self.in_shape)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma, "size": int(self.kernel.shape[0])}


def gaussian_blur(shape=(8, 8), sigma: float = 1.0, size: int | None = None) -> BlurOperator:
    return BlurOperator(shape, gaussian_kernel(sigma, size), sigma)


def _catmull_rom(x):
    x = np.abs(x)
    a = -0.5
    return np.where(x <= 1, (a + 2) * x**3 - (a + 3) * x**2 + 1,
                    np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0))


def catmull_rom_matrix(n_in: int, factor: int) -> np.ndarray:
    """Antialiased bicubic downsampling weights, rows normalised to sum to one."""
    n_out = n_in // factor
    W = np.zeros((n_out, n_in))
    src = np.arange(n_in)
    for i in range(n_out):
        centre = (i + 0.5) * factor - 0.5
        w = _catmull_rom((src - centre) / factor)
        W[i] = w / w.sum()
    return W


class DownsampleOperator(ForwardOperator):
    kind = "downsample"
    linear = True

    def __init__(self, in_shape, factor: int = 2):
        super().__init__(in_shape)
        if in_shape[0] % factor or in_shape[1] % factor:
            raise ValueError("image side must be divisible by the downsampling factor")
        self.factor = int(factor)
        self.W_rows = catmull_rom_matrix(in_shape[0], factor)
        self.W_cols = catmull_rom_matrix(in_shape[1], factor)

    @property
    def out_shape(self):
        return (self.in_shape[0] // self.factor, self.in_shape[1] // self.factor)

    def _apply(self, x):
        return self.W_rows @ x @ self.W_cols.T

    def adjoint(self, u):
        return self.W_rows.T @ np.asarray(u, dtype=float) @ self.W_cols

    def to_dict(self):
        return {"kind": self.kind, "factor": self.factor}


def downsample(shape=(8, 8), factor: int = 2) -> DownsampleOperator:
    return DownsampleOperator(shape, factor)


class PhaseRetrievalOperator(ForwardOperator):
    """Fourier magnitude of the zero-padded state after mapping ``[-1, 1] -> [0, 1]``.

    The padded canvas has side ``round(oversample * n)``; the image sits in
    the top-left corner (magnitudes are shift invariant).
    """

    kind = "phase_retrieval"

    def __init__(self, in_shape, oversample: float = 2.0):
        super().__init__(in_shape)
        self.oversample = float(oversample)
        self.pad_shape = tuple(int(round(oversample * n)) for n in in_shape)
        if any(p < n for p, n in zip(self.pad_shape, in_shape)):
            raise ValueError("oversample must be at least 1")

    @property
    def out_shape(self):
        return self.pad_shape

    def _spectrum(self, x):
        canvas = np.zeros(self.pad_shape)
        canvas[: self.in_shape[0], : self.in_shape[1]] = 0.5 * (x + 1.0)
        return np.fft.fft2(canvas)

    def _apply(self, x):
        return np.abs(self._spectrum(x))

    def data_fit_grad(self, x, y):
        x = self._check(x)
        X = self._spectrum(x)
        mag = np.abs(X)
        phase = np.zeros_like(X)
        nz = mag > 0
        # zero-magnitude bins have no phase; take the zero subgradient there
        phase[nz] = X[nz] / mag[nz]
        weighted = (mag - y) * phase
        # adjoint of the unnormalised DFT is N * ifft2
        back = np.real(np.fft.ifft2(weighted)) * np.prod(self.pad_shape)
        return 0.5 * back[: self.in_shape[0], : self.in_shape[1]]

    def to_dict(self):
        return {"kind": self.kind, "oversample": self.oversample}


def phase_retrieval(shape=(8, 8), oversample: float = 2.0) -> PhaseRetrievalOperator:
    return PhaseRetrievalOperator(shape, oversample)


class HdrOperator(ForwardOperator):
    """``clip(scale * x, lo, hi)``; the default range matches the state range."""

    kind = "hdr_clip"

    def __init__(self, in_shape, scale: float = 2.0, lo: float = -1.0, hi: float = 1.0):
        super().__init__(in_shape)
        self.scale, self.lo, self.hi = float(scale), float(lo), float(hi)

    def _apply(self, x):
        return np.clip(self.scale * x, self.lo, self.hi)

    def data_fit_grad(self, x, y):
        x = self._check(x)
        z = self.scale * x
        inside = (z > self.lo) & (z < self.hi)
        return np.where(inside, self.scale * (z - y), 0.0)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale, "lo": self.lo, "hi": self.hi}


def hdr_clip(shape=(8, 8), scale: float = 2.0, lo: float = -1.0, hi: float = 1.0) -> HdrOperator:
    return HdrOperator(shape, scale, lo, hi)


def make_operator(spec: dict, shape=(8, 8), rng=None) -> ForwardOperator:
    """Build an operator from a config mapping ``{"kind": ..., **params}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind in ("box_mask", "random_mask") and "mask" in spec:
        m = spec["mask"]
        return MaskOperator(parse_matrix(m) if isinstance(m, str) else m, kind=kind)
    if kind == "box_mask":
        return box_mask(shape, **spec)
    if kind == "random_mask":
        return random_mask(shape, rng=rng, **spec)
    if kind == "gaussian_blur":
        return gaussian_blur(shape, **spec)
    if kind == "downsample":
        return downsample(shape, **spec)
    if kind == "phase_retrieval":
        return phase_retrieval(shape, **spec)
    if kind == "hdr_clip":
        return hdr_clip(shape, **spec)
    raise ValueError(f"unknown operator kind {kind!r}")


def make_measurement(op: ForwardOperator, x_true, noise_sigma: float,
                     rng: np.random.Generator) -> Measurement:
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    clean = op.apply(x_true)
    if noise_sigma == 0:
        return Measurement(clean, 0.0)
    return Measurement(clean + noise_sigma * rng.standard_normal(clean.shape), float(noise_sigma))
