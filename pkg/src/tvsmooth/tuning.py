"""Leave-one-time-out cross-validation of ``(ell, h1, h2)``."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .core import SmoothConfig, SnapshotSequence, TvSmoothError, ValidationError
from .lpoly import SingularDesignError, apply_weights
from .metrics import frob_rel
from .nbhd import build_neighborhoods, neighborhood_smooth, pairwise_distance
from .pipeline import boundary_weights, parallel_map

__all__ = ["EmptySnapshotError", "CvGrid", "CvReport", "cross_validate", "loo_predict"]

_invalid = partial(ValidationError, module="tuning")

log = logging.getLogger(__name__)


class EmptySnapshotError(TvSmoothError):
    module = "tuning"


@dataclass(frozen=True)
class CvGrid:
    ells: tuple
    h1s: tuple
    h2s: tuple
    kernel: str = "tricube"

    def __post_init__(self):
        for name in ("ells", "h1s", "h2s"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise _invalid(f"cv grid: {name} must be non-empty")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "ells", tuple(int(x) for x in self.ells))
        object.__setattr__(self, "h1s", tuple(float(x) for x in self.h1s))
        object.__setattr__(self, "h2s", tuple(float(x) for x in self.h2s))
        for ell in self.ells:
            for h1 in self.h1s:
                for h2 in self.h2s:
                    SmoothConfig(ell=ell, h1=h1, h2=h2, kernel=self.kernel)

    @property
    def thetas(self) -> list[tuple[int, float, float]]:
        return list(itertools.product(self.ells, self.h1s, self.h2s))

    @classmethod
    def default(cls, n: int, m: int, kernel: str = "tricube") -> "CvGrid":
        """Degrees 0-2, eight log-spaced ``h1`` in [2/m, 0.5] and ``h2`` in [1/(n-1), 1]."""
        h1 = np.geomspace(min(2.0 / m, 0.5), 0.5, 8)
        h2 = np.geomspace(1.0 / (n - 1), 1.0, 8)
        return cls((0, 1, 2), tuple(h1), tuple(h2), kernel)

    def to_dict(self) -> dict:
        return {"ells": list(self.ells), "h1s": list(self.h1s), "h2s": list(self.h2s),
                "kernel": self.kernel}

    @classmethod
    def from_dict(cls, d: dict) -> "CvGrid":
        return cls(tuple(d["ells"]), tuple(d["h1s"]), tuple(d["h2s"]), d.get("kernel", "tricube"))


@dataclass
class CvReport:
    grid: CvGrid
    thetas: list
    fold_errors: np.ndarray  # (n_theta, m); NaN marks an invalid fold
    mean_errors: np.ndarray
    valid_folds: np.ndarray
    best: tuple
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def best_config(self) -> SmoothConfig:
        ell, h1, h2 = self.best
        return SmoothConfig(ell=ell, h1=h1, h2=h2, kernel=self.grid.kernel)

    def to_dict(self) -> dict:
        def num(x):
            return None if not math.isfinite(x) else float(x)

        return {
            "grid": self.grid.to_dict(),
            "times": [float(t) for t in self.times],
            "candidates": [
                {"ell": th[0], "h1": th[1], "h2": th[2], "mean_error": num(self.mean_errors[i]),
                 "valid_folds": int(self.valid_folds[i]),
                 "fold_errors": [num(e) for e in self.fold_errors[i]]}
                for i, th in enumerate(self.thetas)
            ],
            "best": {"ell": self.best[0], "h1": self.best[1], "h2": self.best[2]},
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path


def _fold(data: SnapshotSequence, k: int, grid: CvGrid) -> dict:
    """Errors of every theta on fold ``k``, keyed by theta."""
    train_grid = data.grid.without(k)
    train = np.delete(data.adjacency, k, axis=0)
    t = float(data.grid.points[k])
    target = data.adjacency[k]
    out = {}
    for ell, h1 in itertools.product(grid.ells, grid.h1s):
        try:
            w = boundary_weights(train_grid, t, h1, ell, grid.kernel)
        except SingularDesignError as exc:
            log.info("cv: ell=%d h1=%.4g invalid on fold %d: %s", ell, h1, k, exc)
            for h2 in grid.h2s:
                out[(ell, h1, h2)] = math.nan
            continue
        P_tilde = apply_weights(w.weights, train)
        D = pairwise_distance(P_tilde)
        for h2 in grid.h2s:
            P_hat = neighborhood_smooth(P_tilde, build_neighborhoods(D, h2))
            out[(ell, h1, h2)] = frob_rel(P_hat, target)
    return out


def loo_predict(data: SnapshotSequence, k: int, cfg: SmoothConfig) -> np.ndarray:
    """Two-stage prediction of snapshot ``k`` from the other ``m - 1`` snapshots."""
    train_grid = data.grid.without(k)
    train = np.delete(data.adjacency, k, axis=0)
    w = boundary_weights(train_grid, float(data.grid.points[k]), cfg.h1, cfg.ell, cfg.kernel)
    P_tilde = apply_weights(w.weights, train)
    return neighborhood_smooth(P_tilde, build_neighborhoods(pairwise_distance(P_tilde), cfg.h2))


def cross_validate(data: SnapshotSequence, grid: CvGrid | None = None, threads: int = 1) -> CvReport:
    """Select ``(ell, h1, h2)`` by leave-one-time-out prediction error.

    Each fold predicts a held-out snapshot from the remaining ones and scores
    the relative Frobenius error over off-diagonal entries. A candidate with
    any invalid fold (singular design even after bandwidth doubling) gets an
    infinite mean error. Ties go to the lexicographically smallest
    ``(ell, h1, h2)``.
    """
    if not isinstance(data, SnapshotSequence):
        raise _invalid("cross-validation needs observed snapshots")
    m = data.m
    if m < 3:
        raise _invalid(f"cross-validation needs at least 3 snapshots, got {m}")
    if data.n < 3:
        raise _invalid("cross-validation needs at least 3 nodes")
    empty = [k for k in range(m) if not data.adjacency[k].any()]
    if empty:
        raise EmptySnapshotError(f"snapshot(s) {empty} have no edges; relative error undefined")
    if grid is None:
        grid = CvGrid.default(data.n, m)
    floor = 1.0 / (2 * (m - 1))
    if min(grid.h1s) < floor:
        raise _invalid(f"h1 grid value {min(grid.h1s)} below 1/(2(m-1)) = {floor:.6g}")

    folds = parallel_map(lambda k: _fold(data, k, grid), list(range(m)), threads)
    thetas = grid.thetas
    errs = np.array([[folds[k][th] for k in range(m)] for th in thetas])
    valid = np.sum(np.isfinite(errs), axis=1)
    means = np.where(valid == m, errs.mean(axis=1), np.inf)
    n_bad = int(np.sum(valid < m))
    if n_bad:
        log.info("cv: %d of %d candidates had invalid folds; their mean error is inf", n_bad, len(thetas))
    if not np.any(np.isfinite(means)):
        raise SingularDesignError("every cv candidate failed on some fold; enlarge the h1 grid")
    best_i = min(range(len(thetas)), key=lambda i: (means[i], thetas[i]))
    return CvReport(grid, thetas, errs, means, valid, thetas[best_i], data.grid.points.copy())
