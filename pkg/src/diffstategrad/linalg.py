"""SVD-based subspace projection of guidance gradients.

The projector is built from the current diffusion state ``Z`` (a matrix).
Its leading left/right singular vectors span the subspace a measurement
gradient ``G`` is restricted to::

    G' = U_r U_r^T G V_r V_r^T

with ``r`` chosen adaptively as the smallest rank whose squared singular
values retain at least a fraction ``tau`` of the total energy.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "SvdFactors",
    "StateProjector",
    "svd",
    "select_rank",
    "build_projector",
    "project_gradient",
    "most_square_shape",
    "as_matrix",
    "format_matrix",
    "parse_matrix",
    "save_matrix",
    "load_matrix",
]

PROJECTION_MODES = ("full", "left", "right")


class SvdFactors(NamedTuple):
    """Thin SVD ``m = U @ diag(S) @ V.T`` with ``V`` holding right vectors as columns."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray


@dataclass(frozen=True)
class StateProjector:
    """Rank-``r`` left/right singular bases of a diffusion state.

    Attributes
    ----------
    U_r : ndarray, shape (rows, r)
    V_r : ndarray, shape (cols, r)
    r : int
        Selected rank.
    tau : float
        Variance retention threshold used to pick ``r``.
    freq : int
        Apply the projection every ``freq`` guidance steps.
    mode : {'full', 'left', 'right'}
    """

    U_r: np.ndarray
    V_r: np.ndarray
    r: int
    tau: float
    freq: int = 1
    mode: str = "full"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U_r.shape[0], self.V_r.shape[0])

    def __call__(self, g: np.ndarray) -> np.ndarray:
        return project_gradient(g, self)


def _check_finite(m: np.ndarray, what: str = "matrix") -> None:
    if not np.all(np.isfinite(m)):
        bad = np.argwhere(~np.isfinite(m))[0]
        raise ValueError(f"{what} has non-finite entry at index {tuple(bad)}")


def svd(m: np.ndarray) -> SvdFactors:
    """Thin SVD with a deterministic sign convention.

    Each left singular vector is flipped so its largest-magnitude entry is
    positive (ties broken by the first index), and the matching right
    vector is flipped with it.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    _check_finite(m)
    U, S, Vt = np.linalg.svd(m, full_matrices=False)
    V = Vt.T
    pivot = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[pivot, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return SvdFactors(U * signs, S, V * signs)


def select_rank(singular_values, tau: float) -> int:
    """Smallest ``k`` such that ``sum(s[:k]**2) / sum(s**2) >= tau``.

    Raises
    ------
    ValueError
        If the spectrum is all zero, not nonincreasing, or ``tau`` is
        outside ``(0, 1]``.
    """
    s = np.asarray(singular_values, dtype=float).ravel()
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if s.size == 0 or np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("singular values must be nonnegative and nonincreasing")
    energy = s**2
    total = energy.sum()
    if total == 0.0:
        raise ValueError("all-zero spectrum: the state is the zero matrix")
    cumulative = np.cumsum(energy) / total
    # Rounding can leave the final entry a hair below 1.
    cumulative[-1] = 1.0
    if tau == 1.0:
        return int(np.count_nonzero(s))
    return int(np.searchsorted(cumulative, tau, side="left")) + 1


def build_projector(state: np.ndarray, tau: float = 0.99, freq: int = 1,
                    mode: str = "full") -> StateProjector:
    """Build the rank-adaptive projector from a matrix-form state."""
    if freq < 1:
        raise ValueError(f"freq must be a positive integer, got {freq}")
    if mode not in PROJECTION_MODES:
        raise ValueError(f"unknown projection mode {mode!r}")
    U, S, V = svd(state)
    r = select_rank(S, tau)
    return StateProjector(U[:, :r].copy(), V[:, :r].copy(), r, float(tau), int(freq), mode)


def project_gradient(g: np.ndarray, p: StateProjector) -> np.ndarray:
    """Return ``U_r U_r^T g V_r V_r^T`` (or the one-sided variant for ``p.mode``)."""
    g = np.asarray(g, dtype=float)
    if g.shape != p.shape:
        raise ValueError(f"gradient shape {g.shape} does not match projector shape {p.shape}")
    if p.mode == "left":
        return p.U_r @ (p.U_r.T @ g)
    if p.mode == "right":
        return (g @ p.V_r) @ p.V_r.T
    core = p.U_r.T @ g @ p.V_r
    return p.U_r @ core @ p.V_r.T


def most_square_shape(n: int) -> tuple[int, int]:
    """Factor ``n = rows * cols`` with ``rows <= cols`` as close as possible."""
    if n < 1:
        raise ValueError("n must be positive")
    rows = math.isqrt(n)
    while n % rows:
        rows -= 1
    return rows, n // rows


def as_matrix(x: np.ndarray) -> np.ndarray:
    """View a state as a matrix; vectors get the most-square layout."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return x
    return x.reshape(most_square_shape(x.size))


# Matrix text format: "rows cols" header, then one row per line, 17 significant digits.

def format_matrix(m: np.ndarray) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in io.StringIO(text).read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    try:
        rows, cols = (int(v) for v in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"bad matrix header {lines[0]!r}") from exc
    body = lines[1:]
    if len(body) != rows:
        raise ValueError(f"expected {rows} rows, found {len(body)}")
    data = np.array([[float(v) for v in ln.split(" ")] for ln in body], dtype=float)
    if data.shape != (rows, cols):
        raise ValueError(f"expected shape {(rows, cols)}, parsed {data.shape}")
    _check_finite(data)
    return data


def save_matrix(path, m: np.ndarray) -> None:
    Path(path).write_text(format_matrix(m))


def load_matrix(path) -> np.ndarray:
    return parse_matrix(Path(path).read_text())
