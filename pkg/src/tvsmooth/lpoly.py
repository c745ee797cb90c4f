"""Local polynomial smoothing over time via equivalent kernel weights.

For a query time ``t`` the degree-``ell`` local polynomial fit is linear in
the responses, ``fit(t) = sum_k w_k(t; h) y_k``, with

    w_k = (1/(m h)) U(0)^T B^{-1} U(u_k) K(u_k),   u_k = (t_k - t)/h,
    B   = (1/(m h)) sum_k U(u_k) U(u_k)^T K(u_k),   U(u) = (1, u, ..., u^ell).

The weights depend only on the grid, so one vector is shared by every
node pair of a snapshot stack.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .core import KERNELS, MAX_DEGREE, SmoothConfig, TimeGrid, TvSmoothError, ValidationError, as_stack

__all__ = [
    "SingularDesignError",
    "WeightVector",
    "kernel",
    "design_matrix",
    "equiv_weights",
    "apply_weights",
    "smooth_sequence",
]

_invalid = partial(ValidationError, module="lpoly")

COND_LIMIT = 1e12


class SingularDesignError(TvSmoothError):
    module = "lpoly"

    def __init__(self, msg, t=None, h=None):
        super().__init__(msg)
        self.t = t
        self.h = h


def _tricube(u):
    a = np.abs(u)
    return np.where(a <= 1, (70.0 / 81.0) * (1 - a ** 3) ** 3, 0.0)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1, 0.75 * (1 - u ** 2), 0.0)


def _uniform(u):
    return np.where(np.abs(u) <= 1, 0.5, 0.0)


_KERNELS = {"tricube": _tricube, "epanechnikov": _epanechnikov, "uniform": _uniform}


def kernel(kind: str):
    """Return the kernel function ``K(u)`` of the given kind (support [-1, 1])."""
    try:
        return _KERNELS[kind]
    except KeyError:
        raise _invalid(f"unknown kernel {kind!r}; choose from {KERNELS}") from None


@dataclass(frozen=True, eq=False)
class WeightVector:
    t: float
    h: float
    ell: int
    weights: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)


def _check(grid: TimeGrid, h: float, ell: int) -> None:
    if not 0 <= ell <= MAX_DEGREE:
        raise _invalid(f"degree {ell} outside [0, {MAX_DEGREE}]")
    if h < 1.0 / (2 * grid.m):
        raise _invalid(f"bandwidth {h} below 1/(2m) = {1.0 / (2 * grid.m):.6g}")


def _window(grid: TimeGrid, t: float, h: float, kind: str):
    d = grid.points - t
    inside = np.abs(d) <= h
    u = d[inside] / h
    k = kernel(kind)(u)
    return inside, u, k


def design_matrix(grid: TimeGrid, t: float, h: float, ell: int, kind: str = "tricube") -> np.ndarray:
    """Kernel-weighted moment matrix ``B`` of shape ``(ell+1, ell+1)``.

    Raises
    ------
    SingularDesignError
        If fewer than ``ell + 1`` grid points get positive kernel weight, or
        the condition number of ``B`` exceeds ``1e12``.
    """
    _check(grid, h, ell)
    _, u, k = _window(grid, t, h, kind)
    return _design(grid.m, t, h, ell, u, k)


def _design(m, t, h, ell, u, k):
    active = k > 0
    if np.count_nonzero(active) < ell + 1:
        raise SingularDesignError(
            f"only {np.count_nonzero(active)} grid point(s) in the window around t={t:.6g} "
            f"with h={h:.6g}; degree {ell} needs {ell + 1}. Try a larger bandwidth.", t, h)
    U = np.vander(u, ell + 1, increasing=True)
    B = (U * k[:, None]).T @ U / (m * h)
    cond = np.linalg.cond(B)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularDesignError(
            f"design matrix at t={t:.6g}, h={h:.6g} is ill-conditioned (cond={cond:.3g}). "
            "Try a larger bandwidth.", t, h)
    return B


def equiv_weights(grid: TimeGrid, t: float, h: float, ell: int, kind: str = "tricube") -> WeightVector:
    """Equivalent kernel weights of a degree-``ell`` local polynomial fit at ``t``.

    Weights outside ``|t_k - t| <= h`` are exactly zero. They may be negative
    for ``ell >= 1``.
    """
    _check(grid, h, ell)
    inside, u, k = _window(grid, t, h, kind)
    B = _design(grid.m, t, h, ell, u, k)
    e0 = np.zeros(ell + 1)
    e0[0] = 1.0
    coef = np.linalg.solve(B, e0)
    U = np.vander(u, ell + 1, increasing=True)
    w = np.zeros(grid.m)
    w[inside] = (U @ coef) * k / (grid.m * h)
    w.setflags(write=False)
    return WeightVector(float(t), float(h), int(ell), w)


def apply_weights(weights: np.ndarray, stack: np.ndarray, clip: bool = True) -> np.ndarray:
    """Weighted sum ``sum_k w_k stack[k]`` with a fixed summation order."""
    out = np.zeros(stack.shape[1:], dtype=float)
    for k in np.flatnonzero(weights):
        out += weights[k] * stack[k]
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out


def smooth_sequence(seq, t: float, cfg: SmoothConfig, h: float | None = None,
                    clip: bool = True) -> np.ndarray:
    """Temporally smooth every entry of a snapshot or probability sequence at ``t``.

    ``h`` defaults to ``cfg.h1``. The result is clipped to [0, 1] unless
    ``clip`` is false.
    """
    times, stack = as_stack(seq)
    grid = TimeGrid(times)
    w = equiv_weights(grid, t, cfg.h1 if h is None else h, cfg.ell, cfg.kernel)
    return apply_weights(w.weights, stack, clip=clip)
