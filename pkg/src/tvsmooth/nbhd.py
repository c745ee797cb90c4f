"""Node-domain neighborhood smoothing of an intermediate probability matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TvSmoothError

__all__ = [
    "DimensionError",
    "NeighborhoodSet",
    "pairwise_distance",
    "quantile_rank",
    "build_neighborhoods",
    "neighborhood_smooth",
    "singleton_neighborhoods",
]


TIE_TOL = 1e-12


class DimensionError(TvSmoothError):
    module = "nbhd"


@dataclass(frozen=True, eq=False)
class NeighborhoodSet:
    """Boolean membership ``mask[i, i']`` (row ``i`` is ``N_i``) and per-node thresholds."""

    mask: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
            raise DimensionError(f"neighborhood mask must be square, got {mask.shape}")
        if not np.all(np.diagonal(mask)):
            raise DimensionError("every node must belong to its own neighborhood")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "thresholds", np.asarray(self.thresholds, dtype=float))

    @property
    def sizes(self) -> np.ndarray:
        return self.mask.sum(axis=1)

    def members(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.mask[i])


def pairwise_distance(P: np.ndarray) -> np.ndarray:
    """Empirical row distance between nodes.

    ``d(i, i') = sqrt(max_{l != i, i'} |<P_i - P_i', P_l>| / n)``, inner
    products over all ``n`` coordinates. The result is exactly symmetric with
    zero diagonal.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {P.shape}")
    n = P.shape[0]
    if n < 3:
        raise DimensionError(f"distance needs at least 3 nodes, got {n}")
    # G[i, l] = <P_i, P_l>
    G = P @ P.T
    D = np.zeros((n, n))
    cols = np.arange(n)
    for i in range(n):
        diff = np.abs(G[i][None, :] - G)
        diff[:, i] = 0.0
        diff[cols, cols] = 0.0
        D[i] = diff.max(axis=1)
    np.fill_diagonal(D, 0.0)
    return np.sqrt(D / n)


def quantile_rank(h2: float, n: int) -> int:
    """Rank of the type-1 ``h2``-quantile among the ``n - 1`` distances from a node."""
    # guard against h2*(n-1) landing a hair above an integer
    r = math.ceil(h2 * (n - 1) - 1e-9)
    return min(max(r, 1), n - 1)


def build_neighborhoods(D: np.ndarray, h2: float) -> NeighborhoodSet:
    """Neighborhoods ``N_i = {i' : d(i, i') <= q_i} ∪ {i}``.

    ``q_i`` is the ``ceil(h2 (n-1))``-th smallest distance from ``i`` to the
    other nodes; ties at the threshold, up to rounding, are included.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if not 0 < h2 <= 1:
        raise DimensionError(f"h2 must lie in (0, 1], got {h2}")
    r = quantile_rank(h2, n)
    off = D[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    q = np.partition(off, r - 1, axis=1)[:, r - 1]
    # ties are decided on the squared scale, up to rounding of the inner products
    D2 = D ** 2
    tol = TIE_TOL * max(1.0, float(D2.max()))
    mask = D2 <= (q ** 2)[:, None] + tol
    np.fill_diagonal(mask, True)
    return NeighborhoodSet(mask, q)


def singleton_neighborhoods(n: int) -> NeighborhoodSet:
    return NeighborhoodSet(np.eye(n, dtype=bool), np.zeros(n))


def neighborhood_smooth(P: np.ndarray, nbhd: NeighborhoodSet, clip: bool = True) -> np.ndarray:
    """Average rows of ``P`` over each node's neighborhood, then symmetrize.

    Row ``i`` of the one-sided estimate is the mean of ``P[i']`` over
    ``i' in N_i``; the returned matrix is ``(H + H.T) / 2``.
    """
    P = np.asarray(P, dtype=float)
    M = nbhd.mask
    if M.shape != P.shape:
        raise DimensionError(f"neighborhood shape {M.shape} does not match matrix {P.shape}")
    H = (M.astype(float) @ P) / M.sum(axis=1)[:, None]
    out = 0.5 * (H + H.T)
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return out
