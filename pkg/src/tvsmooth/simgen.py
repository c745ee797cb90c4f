"""Seeded generators for dynamic network models and the replicated benchmark.

Randomness comes from counter-based Philox streams keyed by
``(seed, purpose, replicate, snapshot)``, so any replicate or snapshot can
be drawn on its own and results never depend on evaluation order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .core import (ProbMatrixSequence, SmoothConfig, SnapshotSequence, TimeGrid, TvSmoothError,
                   ValidationError)
from .metrics import frob_rel, two_inf_rel
from .nbhd import build_neighborhoods, neighborhood_smooth, pairwise_distance
from .lpoly import SingularDesignError
from .pipeline import EstimateRequest, boundary_weights, estimate, parallel_map
from .tuning import CvGrid, cross_validate

__all__ = [
    "CalibrationError",
    "MODELS",
    "GeneratorSpec",
    "GroundTruth",
    "stream",
    "community_sizes",
    "build_truth",
    "sample",
    "mean_degree",
    "MethodSpec",
    "BenchmarkResult",
    "run_benchmark",
    "default_methods",
]

_invalid = partial(ValidationError, module="simgen")

MODELS = ("sbm_sine", "sbm_npd", "rdpg_smooth", "latent_distance")

# stream purposes
_TRUTH, _SAMPLE = 0, 1
_TREND, _LATENT = 0, 1


class CalibrationError(TvSmoothError):
    module = "simgen"


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) % 2 ** 64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GeneratorSpec:
    """Parametric description of one generative model.

    ``target_degree`` calibrates the scale so the mean off-diagonal row sum
    of ``P`` at the first grid time equals it. With ``target_degree=None``
    the raw ``scale`` (SBM within-block ``a``, RDPG multiplier) or ``alpha``
    is used instead.
    """

    model: str = "sbm_sine"
    n: int = 600
    m: int = 100
    K: int = 4
    out_in_ratio: float = 0.5
    target_degree: float | None = 50.0
    latent_dim: int = 2
    alpha: float | None = None
    scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise _invalid(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.n < 3 or self.m < 1:
            raise _invalid("need n >= 3 and m >= 1")
        if self.model.startswith("sbm") and not 1 <= self.K <= self.n:
            raise _invalid(f"K={self.K} communities for n={self.n} nodes")
        if self.target_degree is not None and not 0 < self.target_degree < self.n - 1:
            raise _invalid(f"target degree must lie in (0, n-1), got {self.target_degree}")
        if self.target_degree is None:
            need = "alpha" if self.model == "latent_distance" else "scale"
            if getattr(self, need) is None:
                raise _invalid(f"without target_degree, {need} must be given")

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid.equispaced(self.m)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "GeneratorSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    prob: ProbMatrixSequence
    communities: np.ndarray | None = None
    trajectories: np.ndarray | None = None  # (m, n, d)
    trends: dict | None = None  # community pair -> +1 / -1
    calibration: dict = field(default_factory=dict)


def community_sizes(n: int, K: int) -> list[int]:
    """``floor(n/K)`` per community, remainder to the first ones."""
    base, rem = divmod(n, K)
    return [base + (1 if c < rem else 0) for c in range(K)]


def _labels(n: int, K: int) -> np.ndarray:
    return np.repeat(np.arange(K), community_sizes(n, K))


def mean_degree(P: np.ndarray) -> float:
    """Mean off-diagonal row sum."""
    return float((P.sum() - np.trace(P)) / P.shape[0])


def _trend(sign: int, t: np.ndarray) -> np.ndarray:
    return 1.0 + sign * 0.5 * np.sin(2 * np.pi * t)


def _sbm_unit(spec: GeneratorSpec, times: np.ndarray):
    """Block probabilities with within-block base 1, between ``out_in_ratio``."""
    K = spec.K
    signs = np.ones((K, K), dtype=int)
    trends = None
    if spec.model == "sbm_npd":
        # first half of the communities follow the inverted within-block trend
        for c in range(K // 2):
            signs[c, c] = -1
        rng = stream(spec.seed, _TRUTH, _TREND)
        trends = {}
        for c in range(K):
            for d in range(c + 1, K):
                s = 1 if rng.random() < 0.5 else -1
                signs[c, d] = signs[d, c] = s
                trends[(c, d)] = s
    base = np.full((K, K), spec.out_in_ratio)
    np.fill_diagonal(base, 1.0)
    blocks = base[None] * _trend(1, times)[:, None, None]
    neg = signs < 0
    blocks[:, neg] = (base[neg][None] * _trend(-1, times)[:, None])
    return blocks, trends


def _trajectories(spec: GeneratorSpec, times: np.ndarray) -> np.ndarray:
    """Smooth positive latent curves ``c0 + c1 sin(2 pi t + phi)``, rescaled to norm <= 1."""
    rng = stream(spec.seed, _TRUTH, _LATENT)
    n, d = spec.n, spec.latent_dim
    c0 = rng.uniform(0.3, 1.0, size=(n, d))
    c1 = rng.uniform(-0.5, 0.5, size=(n, d)) * c0
    phi = rng.uniform(0.0, 2 * np.pi, size=(n, d))
    Z = c0[None] + c1[None] * np.sin(2 * np.pi * times[:, None, None] + phi[None])
    return Z / np.linalg.norm(Z, axis=2).max()


def _zero_diag(P: np.ndarray) -> np.ndarray:
    idx = np.arange(P.shape[1])
    P[:, idx, idx] = 0.0
    return P


def build_truth(spec: GeneratorSpec) -> GroundTruth:
    """True probability matrices ``P(t_k)`` at ``t_k = k/m`` (zero diagonal)."""
    times = spec.grid.points
    labels = tuple(str(i) for i in range(spec.n))
    communities = trajectories = trends = None

    if spec.model in ("sbm_sine", "sbm_npd"):
        communities = _labels(spec.n, spec.K)
        unit, trends = _sbm_unit(spec, times)
        P_unit = _zero_diag(unit[:, communities][:, :, communities].copy())
        if spec.target_degree is not None:
            a = spec.target_degree / mean_degree(P_unit[0])
        else:
            a = float(spec.scale)
        peak = P_unit.max()
        if a * peak > 1.0:
            raise CalibrationError(
                f"{spec.model}: within-block base a={a:.4g} gives probabilities up to {a * peak:.4g} > 1; "
                f"max achievable initial degree is {mean_degree(P_unit[0]) / peak:.4g}")
        P = a * P_unit
        calib = {"a": a, "b": a * spec.out_in_ratio}
    elif spec.model == "rdpg_smooth":
        trajectories = _trajectories(spec, times)
        G = _zero_diag(np.einsum("kid,kjd->kij", trajectories, trajectories))
        G = np.clip(G, 0.0, 1.0)
        s = spec.target_degree / mean_degree(G[0]) if spec.target_degree is not None else float(spec.scale)
        if s * G.max() > 1.0:
            raise CalibrationError(
                f"rdpg_smooth: multiplier {s:.4g} pushes probabilities to {s * G.max():.4g} > 1; "
                f"max achievable initial degree is {mean_degree(G[0]) / G.max():.4g}")
        P = s * G
        trajectories = trajectories * math.sqrt(s)
        calib = {"multiplier": s}
    else:
        trajectories = _trajectories(spec, times)
        dist = np.linalg.norm(trajectories[:, :, None, :] - trajectories[:, None, :, :], axis=3)

        def probs(alpha, d=dist):
            return _zero_diag(expit(alpha - d))

        if spec.target_degree is not None:
            def gap(alpha):
                return mean_degree(probs(alpha, dist[:1])[0]) - spec.target_degree
            alpha = brentq(gap, -50.0, 50.0, xtol=1e-10, rtol=1e-12)
        else:
            alpha = float(spec.alpha)
        P = probs(alpha)
        calib = {"alpha": alpha}
    if np.any(P < 0) or np.any(P > 1):
        raise CalibrationError(f"{spec.model}: generated probabilities leave [0, 1]")
    prob = ProbMatrixSequence(times, labels, P, "truth", None, {"model": spec.model})
    return GroundTruth(prob, communities, trajectories, trends, calib)


def sample(spec: GeneratorSpec, truth: GroundTruth, replicate: int = 0, threads: int = 1) -> SnapshotSequence:
    """Independent Bernoulli draws of every upper-triangular entry at every time."""
    P = truth.prob.matrices
    n = P.shape[1]
    iu, ju = np.triu_indices(n, k=1)

    def draw(k):
        u = stream(spec.seed, _SAMPLE, replicate, k).random(iu.size)
        A = np.zeros((n, n))
        A[iu, ju] = (u < P[k][iu, ju]).astype(float)
        return A + A.T

    adj = np.stack(parallel_map(draw, list(range(P.shape[0])), threads))
    return SnapshotSequence(TimeGrid(truth.prob.times), truth.prob.labels, adj)


# --------------------------------------------------------------------------
# benchmark
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """One benchmarked estimator.

    ``tuning`` is ``"cv"`` (leave-one-time-out, proposed only), ``"oracle"``
    (minimise the mean Frobenius error against the truth over the tuning
    grid), ``"rule"`` (``h2 = sqrt(log n / n)``, the usual static
    neighborhood-smoothing choice) or ``"fixed"`` with ``config``.
    """

    name: str
    variant: str = "proposed"
    tuning: str = "cv"
    config: dict | None = None

    def __post_init__(self):
        if self.tuning not in ("cv", "oracle", "rule", "fixed"):
            raise _invalid(f"unknown tuning mode {self.tuning!r}")
        if self.tuning == "cv" and self.variant != "proposed":
            raise _invalid("cv tuning is defined for the proposed estimator only")
        if self.tuning == "fixed" and not self.config:
            raise _invalid(f"method {self.name}: fixed tuning needs a config")

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        return cls(d["name"], d.get("variant", d["name"]), d.get("tuning", "cv"), d.get("config"))


def default_methods() -> list[MethodSpec]:
    return [MethodSpec("proposed", "proposed", "cv"),
            MethodSpec("reversed", "reversed", "oracle"),
            MethodSpec("independent", "independent", "rule"),
            MethodSpec("pooled", "pooled", "rule")]


METRICS = ("frobenius", "l2inf")


@dataclass
class BenchmarkResult:
    model: str
    times: np.ndarray
    errors: dict  # method -> array (R, 2, m)
    tuned: dict = field(default_factory=dict)  # method -> list of per-replicate configs

    def mean(self, method: str, metric: str = "frobenius") -> np.ndarray:
        return self.errors[method][:, METRICS.index(metric)].mean(axis=0)

    def rows(self) -> list[dict]:
        out = []
        for method, arr in self.errors.items():
            R = arr.shape[0]
            for mi, metric in enumerate(METRICS):
                vals = arr[:, mi]
                mean = vals.mean(axis=0)
                se = vals.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(mean.shape, np.nan)
                for k, t in enumerate(self.times):
                    out.append({"model": self.model, "method": method, "metric": metric,
                                "t": float(t), "mean_error": float(mean[k]),
                                "stderr": float(se[k]), "replicates": R})
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        cols = ["model", "method", "metric", "t", "mean_error", "stderr", "replicates"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            r = dict(r)
            for c in ("t", "mean_error", "stderr"):
                r[c] = f"{r[c]:.10g}"
            w.writerow(r)
        text = buf.getvalue()
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text


def _errors(est: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.array([[frob_rel(e, p) for e, p in zip(est, truth)],
                     [two_inf_rel(e, p) for e, p in zip(est, truth)]])


def _oracle_reversed(data: SnapshotSequence, truth: np.ndarray, grid: CvGrid) -> SmoothConfig:
    """Tuning of the reversed variant minimising mean Frobenius error against the truth."""
    times, stack = data.grid.points, data.adjacency
    n = data.n
    dists = [pairwise_distance(A) for A in stack]
    off = ~np.eye(n, dtype=bool)
    T = truth[:, off]
    tnorm = np.linalg.norm(T, axis=1)
    best = (math.inf, None)
    for h2 in grid.h2s:
        S = np.stack([neighborhood_smooth(A, build_neighborhoods(D, h2)) for A, D in zip(stack, dists)])
        S = S[:, off]
        for ell in grid.ells:
            for h1 in grid.h1s:
                try:
                    W = np.stack([boundary_weights(data.grid, t, h1, ell, grid.kernel).weights for t in times])
                except SingularDesignError:
                    continue
                E = np.clip(W @ S, 0.0, 1.0)
                err = float(np.mean(np.linalg.norm(E - T, axis=1) / tnorm))
                key = (err, (ell, h1, h2))
                if key < best:
                    best = key
    if best[1] is None:
        raise CalibrationError("no valid oracle tuning for the reversed variant")
    ell, h1, h2 = best[1]
    return SmoothConfig(ell=ell, h1=h1, h2=h2, kernel=grid.kernel, variant="reversed")


def _oracle_static(data, truth, grid, variant):
    best = (math.inf, None)
    for h2 in grid.h2s:
        cfg = SmoothConfig(h2=h2, variant=variant, kernel=grid.kernel)
        est = estimate(EstimateRequest(data, data.grid.points, cfg)).matrices
        err = float(np.mean(_errors(est, truth)[0]))
        if (err, h2) < best:
            best = (err, h2)
    return SmoothConfig(h2=best[1], variant=variant, kernel=grid.kernel)


def _configure(method: MethodSpec, data, truth, grid, threads) -> SmoothConfig:
    n = data.n
    if method.tuning == "fixed":
        cfg = SmoothConfig.from_dict({**method.config, "variant": method.variant})
    elif method.tuning == "cv":
        cfg = cross_validate(data, grid, threads).best_config
    elif method.tuning == "rule":
        cfg = SmoothConfig(h2=min(1.0, math.sqrt(math.log(n) / n)), variant=method.variant,
                           kernel=grid.kernel)
    elif method.variant == "reversed":
        cfg = _oracle_reversed(data, truth, grid)
    elif method.variant in ("independent", "pooled"):
        cfg = _oracle_static(data, truth, grid, method.variant)
    else:
        raise _invalid(f"oracle tuning is not defined for variant {method.variant!r}")
    return cfg


def run_benchmark(spec: GeneratorSpec, methods: list[MethodSpec] | None = None, replicates: int = 1,
                  grid: CvGrid | None = None, threads: int = 1) -> BenchmarkResult:
    """Sample ``replicates`` networks, estimate with every method at all grid times, score both errors."""
    methods = default_methods() if methods is None else methods
    truth = build_truth(spec)
    times = truth.prob.times
    P = truth.prob.matrices
    grid = CvGrid.default(spec.n, spec.m) if grid is None else grid

    def one(r):
        data = sample(spec, truth, r)
        errs, cfgs = {}, {}
        for meth in methods:
            cfg = _configure(meth, data, P, grid, 1)
            est = estimate(EstimateRequest(data, times, cfg)).matrices
            errs[meth.name] = _errors(est, P)
            cfgs[meth.name] = cfg.to_dict()
        return errs, cfgs

    results = parallel_map(one, list(range(replicates)), threads)
    errors = {m.name: np.stack([res[0][m.name] for res in results]) for m in methods}
    tuned = {m.name: [res[1][m.name] for res in results] for m in methods}
    return BenchmarkResult(spec.model, times.copy(), errors, tuned)
