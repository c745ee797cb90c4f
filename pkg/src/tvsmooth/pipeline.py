"""End-to-end estimators built from the temporal and node-domain smoothers."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np

from .core import (ProbMatrixSequence, SmoothConfig, SnapshotSequence, TimeGrid, ValidationError,
                   as_stack)
from .lpoly import SingularDesignError, WeightVector, apply_weights, equiv_weights
from .nbhd import build_neighborhoods, neighborhood_smooth, pairwise_distance

__all__ = [
    "EstimateRequest",
    "boundary_weights",
    "two_stage_at",
    "estimate_two_stage",
    "estimate_three_stage",
    "estimate_variant",
    "estimate",
    "nearest_index",
    "suggest_bandwidths",
    "parallel_map",
]

_invalid = partial(ValidationError, module="pipeline")

log = logging.getLogger(__name__)


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Ordered map; results never depend on ``threads``."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True, eq=False)
class EstimateRequest:
    data: SnapshotSequence | ProbMatrixSequence
    query_times: np.ndarray
    cfg: SmoothConfig

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.query_times, dtype=float))
        if q.size == 0 or np.any((q < 0) | (q > 1)):
            raise _invalid("query times must be a non-empty list in [0, 1]")
        object.__setattr__(self, "query_times", q)
        # static baselines never smooth in time
        if self.cfg.variant in ("proposed", "reversed"):
            self.cfg.check_grid(len(as_stack(self.data)[0]))


def boundary_weights(grid: TimeGrid, t: float, h: float, ell: int, kind: str) -> WeightVector:
    """Equivalent weights, doubling ``h`` once if the window at ``t`` runs off the grid."""
    try:
        return equiv_weights(grid, t, h, ell, kind)
    except SingularDesignError:
        pts = grid.points
        if t - h >= pts[0] and t + h <= pts[-1]:
            raise
        log.info("singular design at boundary t=%.6g with h=%.6g; retrying with h=%.6g", t, h, 2 * h)
        try:
            return equiv_weights(grid, t, 2 * h, ell, kind)
        except SingularDesignError as exc:
            raise SingularDesignError(f"{exc} (after doubling the bandwidth at t={t:.6g})",
                                      t, 2 * h) from None


def two_stage_at(times: np.ndarray, stack: np.ndarray, t: float, cfg: SmoothConfig) -> np.ndarray:
    """Temporal smoothing at ``t`` followed by neighborhood smoothing."""
    w = boundary_weights(TimeGrid(times), t, cfg.h1, cfg.ell, cfg.kernel)
    P_tilde = apply_weights(w.weights, stack)
    D = pairwise_distance(P_tilde)
    return neighborhood_smooth(P_tilde, build_neighborhoods(D, cfg.h2))


def _node_smooth(A: np.ndarray, h2: float) -> np.ndarray:
    return neighborhood_smooth(A, build_neighborhoods(pairwise_distance(A), h2))


def _result(req, mats, stage, variant, times=None):
    data = req.data
    return ProbMatrixSequence(req.query_times if times is None else times, data.labels,
                              np.stack(mats), stage, data.time_mapping,
                              {"variant": variant, "config": req.cfg.to_dict()})


def estimate_two_stage(req: EstimateRequest, threads: int = 1) -> ProbMatrixSequence:
    """Two-stage estimate at every query time."""
    times, stack = as_stack(req.data)
    mats = parallel_map(lambda t: two_stage_at(times, stack, t, req.cfg), list(req.query_times), threads)
    return _result(req, mats, "two-stage", "proposed")


def estimate_three_stage(req: EstimateRequest, threads: int = 1) -> ProbMatrixSequence:
    """Two-stage estimates at every grid time, then smoothed again in time with ``cfg.h3``."""
    cfg = req.cfg
    if cfg.h3 is None:
        raise _invalid("three-stage estimation needs h3 in the config")
    times, stack = as_stack(req.data)
    grid = TimeGrid(times)
    hats = np.stack(parallel_map(lambda t: two_stage_at(times, stack, t, cfg), list(times), threads))

    def refine(t):
        w = boundary_weights(grid, t, cfg.h3, cfg.ell, cfg.kernel)
        return apply_weights(w.weights, hats)

    return _result(req, parallel_map(refine, list(req.query_times), threads), "three-stage", "proposed")


def nearest_index(points: np.ndarray, t: float) -> int:
    """Index of the grid point nearest ``t``; ties go to the earlier time."""
    return int(np.argmin(np.abs(points - t)))


def estimate_variant(req: EstimateRequest, threads: int = 1) -> ProbMatrixSequence:
    """Baselines: ``reversed``, ``independent`` or ``pooled`` per ``req.cfg.variant``."""
    cfg = req.cfg
    times, stack = as_stack(req.data)
    q = list(req.query_times)
    if cfg.variant == "reversed":
        grid = TimeGrid(times)
        smoothed = np.stack(parallel_map(lambda A: _node_smooth(A, cfg.h2), list(stack), threads))

        def temporal(t):
            w = boundary_weights(grid, t, cfg.h1, cfg.ell, cfg.kernel)
            return apply_weights(w.weights, smoothed)

        mats = parallel_map(temporal, q, threads)
    elif cfg.variant == "independent":
        idx = [nearest_index(times, t) for t in q]
        cache = {k: _node_smooth(stack[k], cfg.h2) for k in sorted(set(idx))}
        mats = [cache[k] for k in idx]
    elif cfg.variant == "pooled":
        est = _node_smooth(stack.mean(axis=0), cfg.h2)
        mats = [est] * len(q)
    else:
        raise _invalid(f"estimate_variant does not handle variant {cfg.variant!r}")
    return _result(req, mats, "two-stage", cfg.variant)


def estimate(req: EstimateRequest, stage: str = "two", threads: int = 1) -> ProbMatrixSequence:
    """Dispatch on ``req.cfg.variant`` and ``stage`` (``"two"`` or ``"three"``)."""
    if req.cfg.variant != "proposed":
        return estimate_variant(req, threads)
    if stage == "three":
        return estimate_three_stage(req, threads)
    if stage == "two":
        return estimate_two_stage(req, threads)
    raise _invalid(f"unknown stage {stage!r}")


def empirical_sparsity(data: SnapshotSequence | ProbMatrixSequence) -> float:
    """Largest off-diagonal edge density over snapshots."""
    _, stack = as_stack(data)
    n = stack.shape[1]
    return float(max(A.sum() - np.trace(A) for A in stack) / (n * (n - 1)))


def suggest_bandwidths(n: int, m: int, rho: float, beta: float = 2.0) -> dict:
    """Orders of magnitude of the theoretically optimal bandwidths (constants unknown).

    Only a rough starting point for a tuning grid; cross-validation remains
    the operational selector.
    """
    if rho <= 0:
        raise _invalid("sparsity must be positive to suggest bandwidths")
    L = math.log(n * m)
    e = 1.0 / (2 * beta + 1)
    dense = n * rho >= math.sqrt(n * m ** (beta / (beta + 1)) * L)
    if dense:
        h1 = (L / (rho ** 2 * n * m)) ** e
        h2 = rho ** e * (L / (n * m)) ** (beta * e)
        h3 = rho ** (-2 * e) * (L / (n * m)) ** e
    else:
        h1 = (L / (rho * m)) ** e
        h2 = 1.0 / n
        h3 = rho ** (-2 * e) * (L / m) ** (2 * e)
    return {"regime": "node-smoothing" if dense else "temporal-only", "n": n, "m": m, "rho": rho,
            "beta": beta, "ell": max(math.ceil(beta) - 1, 0),
            "h1": h1, "h2": h2, "h3": h3}
