"""Core domain types and on-disk formats for time-varying networks.

A network observed at ``m`` time points is held in a :class:`SnapshotSequence`
(binary adjacency snapshots); estimates are held in a
:class:`ProbMatrixSequence`. Both are immutable once built.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TvSmoothError",
    "ParseError",
    "ValidationError",
    "TimeGrid",
    "SnapshotSequence",
    "ProbMatrixSequence",
    "SmoothConfig",
    "STAGES",
    "KERNELS",
    "VARIANTS",
    "load_snapshots",
    "save_snapshots",
    "save_prob_sequence",
    "load_prob_sequence",
]

STAGES = ("intermediate", "two-stage", "three-stage", "truth")
KERNELS = ("tricube", "epanechnikov", "uniform")
VARIANTS = ("proposed", "reversed", "independent", "pooled")
MAX_DEGREE = 4
CSV_PRECISION = 10


class TvSmoothError(Exception):
    """Base error; ``module`` names the subsystem that raised it."""

    module = "tvsmooth"

    def __init__(self, *args, module: str | None = None):
        super().__init__(*args)
        if module is not None:
            self.module = module

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


class ParseError(TvSmoothError):
    module = "net-core"


class ValidationError(TvSmoothError):
    module = "net-core"


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing observation times in [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size < 1:
            raise ValidationError("time grid must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("time grid contains non-finite values")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise ValidationError("time points must lie in [0, 1]")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("time points must be strictly increasing (duplicate snapshot time?)")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return int(self.points.size)

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())

    def without(self, k: int) -> "TimeGrid":
        return TimeGrid(np.delete(self.points, k))

    @classmethod
    def equispaced(cls, m: int) -> "TimeGrid":
        """Grid ``t_k = k/m`` for ``k = 1..m``."""
        return cls(np.arange(1, m + 1) / m)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SnapshotSequence:
    """Binary symmetric adjacency snapshots on a fixed node set.

    ``adjacency`` has shape ``(m, n, n)``. ``time_mapping`` records the affine
    map ``year = origin + span * t`` when times were loaded as years.
    """

    grid: TimeGrid
    labels: tuple
    adjacency: np.ndarray
    time_mapping: dict | None = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 3 or adj.shape[1] != adj.shape[2]:
            raise ValidationError(f"adjacency must have shape (m, n, n), got {adj.shape}")
        if adj.shape[0] != self.grid.m:
            raise ValidationError(f"{adj.shape[0]} snapshots for {self.grid.m} time points")
        labels = tuple(str(x) for x in self.labels)
        if len(labels) != adj.shape[1]:
            raise ValidationError(f"{len(labels)} labels for {adj.shape[1]} nodes")
        if len(set(labels)) != len(labels):
            raise ValidationError("node labels must be distinct")
        if not np.all((adj == 0) | (adj == 1)):
            raise ValidationError("adjacency entries must be 0 or 1")
        if not np.array_equal(adj, adj.transpose(0, 2, 1)):
            raise ValidationError("adjacency matrices must be symmetric")
        if np.any(np.diagonal(adj, axis1=1, axis2=2)):
            raise ValidationError("adjacency matrices must have zero diagonal (self-loop)")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "adjacency", _frozen(adj.astype(np.float64)))

    @property
    def n(self) -> int:
        return int(self.adjacency.shape[1])

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def matrices(self) -> np.ndarray:
        """Alias so both sequence types expose their stack the same way."""
        return self.adjacency

    def drop(self, k: int) -> "SnapshotSequence":
        """Sequence with snapshot ``k`` removed."""
        return SnapshotSequence(self.grid.without(k), self.labels,
                                np.delete(self.adjacency, k, axis=0), self.time_mapping)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SnapshotSequence)
                and self.grid == other.grid
                and self.labels == other.labels
                and np.array_equal(self.adjacency, other.adjacency)
                and self.time_mapping == other.time_mapping)


@dataclass(frozen=True, eq=False)
class ProbMatrixSequence:
    """Symmetric probability matrices at given times.

    ``matrices`` has shape ``(len(times), n, n)``. ``times`` need not be a
    grid (query times may repeat or be unsorted), so it is kept as an array.
    """

    times: np.ndarray
    labels: tuple
    matrices: np.ndarray
    stage: str = "two-stage"
    time_mapping: dict | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValidationError(f"matrices must have shape (T, n, n), got {mats.shape}")
        if mats.shape[0] != times.size:
            raise ValidationError(f"{mats.shape[0]} matrices for {times.size} times")
        if np.any((times < 0) | (times > 1)):
            raise ValidationError("times must lie in [0, 1]")
        if self.stage not in STAGES:
            raise ValidationError(f"unknown stage {self.stage!r}")
        labels = tuple(str(x) for x in self.labels)
        if len(labels) != mats.shape[1]:
            raise ValidationError(f"{len(labels)} labels for {mats.shape[1]} nodes")
        if np.any(mats < 0) or np.any(mats > 1) or not np.all(np.isfinite(mats)):
            raise ValidationError("probabilities must lie in [0, 1]")
        if not np.array_equal(mats, mats.transpose(0, 2, 1)):
            raise ValidationError("probability matrices must be symmetric")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "matrices", _frozen(mats))

    @property
    def n(self) -> int:
        return int(self.matrices.shape[1])

    @property
    def m(self) -> int:
        return int(self.times.size)

    @property
    def grid(self) -> TimeGrid:
        """The times as a :class:`TimeGrid`; fails if they are not strictly increasing."""
        return TimeGrid(self.times)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ProbMatrixSequence)
                and np.array_equal(self.times, other.times)
                and self.labels == other.labels
                and np.array_equal(self.matrices, other.matrices)
                and self.stage == other.stage
                and self.time_mapping == other.time_mapping)


@dataclass(frozen=True)
class SmoothConfig:
    """Tuning bundle for the estimators.

    Parameters
    ----------
    ell : int
        Local polynomial degree (0 to 4).
    h1 : float
        Temporal bandwidth for the first smoothing pass.
    h2 : float
        Neighborhood quantile in (0, 1].
    h3 : float, optional
        Bandwidth of the optional temporal refinement pass.
    kernel : str
        One of ``tricube``, ``epanechnikov``, ``uniform``.
    variant : str
        One of ``proposed``, ``reversed``, ``independent``, ``pooled``.
    """

    ell: int = 1
    h1: float = 0.1
    h2: float = 0.1
    h3: float | None = None
    kernel: str = "tricube"
    variant: str = "proposed"

    def __post_init__(self):
        if int(self.ell) != self.ell or not 0 <= self.ell <= MAX_DEGREE:
            raise ValidationError(f"ell must be an integer in [0, {MAX_DEGREE}], got {self.ell}")
        object.__setattr__(self, "ell", int(self.ell))
        # bandwidths above 1 are allowed (global window); the quantile is not
        for name in ("h1", "h3"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if not 0 < self.h2 <= 1:
            raise ValidationError(f"h2 must lie in (0, 1], got {self.h2}")
        if self.kernel not in KERNELS:
            raise ValidationError(f"unknown kernel {self.kernel!r}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")

    def check_grid(self, m: int) -> None:
        """Enforce the weight-stability floor ``h >= 1/(2m)`` for a grid of size ``m``."""
        floor = 1.0 / (2 * m)
        for name in ("h1", "h3"):
            v = getattr(self, name)
            if v is not None and v < floor:
                raise ValidationError(f"{name}={v} is below 1/(2m)={floor:.6g}")

    def replace(self, **kw) -> "SmoothConfig":
        d = self.to_dict()
        d.update(kw)
        return SmoothConfig(**d)

    def to_dict(self) -> dict:
        return {"ell": self.ell, "h1": self.h1, "h2": self.h2, "h3": self.h3,
                "kernel": self.kernel, "variant": self.variant}

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothConfig":
        known = {k: d[k] for k in ("ell", "h1", "h2", "h3", "kernel", "variant") if k in d}
        return cls(**known)


# --------------------------------------------------------------------------
# snapshot TSV
# --------------------------------------------------------------------------

def _parse_time(tok: str, lineno: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(f"line {lineno}: bad time value {tok!r}") from None


def load_snapshots(path: str | os.PathLike) -> SnapshotSequence:
    """Read a snapshot edge list.

    Each data line holds ``time node_u node_v`` separated by tabs or spaces.
    An optional header line starting with ``time`` is skipped. Comment lines
    ``# nodes ...`` and ``# times ...`` (written by :func:`save_snapshots`)
    fix the node order and declare snapshots without edges. Integer times
    greater than 1 are read as years and rescaled affinely onto [0, 1].
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    declared_nodes: list[str] = []
    declared_times: list[float] = []
    mapping = None
    rows: list[tuple[str, str, str, int]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "nodes":
                    declared_nodes.extend(parts[1:])
                elif parts and parts[0] == "times":
                    declared_times.extend(_parse_time(p, lineno) for p in parts[1:])
                elif parts and parts[0] == "time_mapping":
                    if len(parts) != 3:
                        raise ParseError(f"line {lineno}: time_mapping needs origin and span")
                    mapping = {"origin": float(parts[1]), "span": float(parts[2])}
                continue
            parts = line.split()
            if parts[0] == "time" and not rows:
                continue
            if len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 3 fields, got {len(parts)}")
            rows.append((parts[0], parts[1], parts[2], lineno))

    values = [_parse_time(r[0], r[3]) for r in rows]
    all_times = values + declared_times
    if not all_times:
        raise ParseError(f"{path}: no snapshots found")
    if any(not math.isfinite(v) for v in all_times):
        raise ParseError("non-finite time value")

    if max(all_times) > 1.0:
        if any(v != int(v) for v in all_times) or min(all_times) < 0:
            raise ParseError("time outside [0, 1] (only integer years may exceed 1)")
        lo, hi = min(all_times), max(all_times)
        if hi == lo:
            raise ParseError("year-valued times need at least two distinct years")
        mapping = {"origin": lo, "span": hi - lo}
        values = [(v - lo) / (hi - lo) for v in values]
        declared_times = [(v - lo) / (hi - lo) for v in declared_times]
    elif min(all_times) < 0:
        raise ParseError("time outside [0, 1]")

    if len(set(declared_times)) != len(declared_times):
        raise ValidationError("duplicate snapshot time in '# times' declaration")

    index: dict[str, int] = {}
    for lab in declared_nodes:
        if lab in index:
            raise ValidationError(f"duplicate node label {lab!r}")
        index[lab] = len(index)
    for _, u, v, lineno in rows:
        if u == v:
            raise ValidationError(f"line {lineno}: self-loop on node {u!r}")
        for lab in (u, v):
            if lab not in index:
                index[lab] = len(index)

    times = sorted(set(values) | set(declared_times))
    tpos = {t: k for k, t in enumerate(times)}
    n = len(index)
    adj = np.zeros((len(times), n, n), dtype=np.float64)
    for (_, u, v, _), t in zip(rows, values):
        k, i, j = tpos[t], index[u], index[v]
        adj[k, i, j] = adj[k, j, i] = 1.0
    return SnapshotSequence(TimeGrid(np.array(times)), tuple(index), adj, mapping)


def save_snapshots(seq: SnapshotSequence, path: str | os.PathLike) -> Path:
    """Write ``seq`` in the edge-list format read by :func:`load_snapshots`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    iu, ju = np.triu_indices(seq.n, k=1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# nodes\t" + "\t".join(seq.labels) + "\n")
        fh.write("# times\t" + "\t".join(repr(float(t)) for t in seq.grid.points) + "\n")
        if seq.time_mapping is not None:
            fh.write(f"# time_mapping\t{seq.time_mapping['origin']!r}\t{seq.time_mapping['span']!r}\n")
        fh.write("time\tnode_u\tnode_v\n")
        for k, t in enumerate(seq.grid.points):
            a = seq.adjacency[k]
            ts = repr(float(t))
            for i, j in zip(iu[a[iu, ju] > 0], ju[a[iu, ju] > 0]):
                fh.write(f"{ts}\t{seq.labels[i]}\t{seq.labels[j]}\n")
    return path


# --------------------------------------------------------------------------
# probability sequences on disk
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.{CSV_PRECISION}g}"


def save_prob_sequence(seq: ProbMatrixSequence, directory: str | os.PathLike) -> Path:
    """Write one CSV per time point plus ``manifest.json``; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(seq.m):
        name = f"P_{k:04d}.csv"
        with open(d / name, "w", encoding="utf-8", newline="\n") as fh:
            for row in seq.matrices[k]:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        files.append(name)
    manifest = {
        "format": "tvsmooth-prob-sequence/1",
        "stage": seq.stage,
        "n": seq.n,
        "times": [float(t) for t in seq.times],
        "labels": list(seq.labels),
        "files": files,
        "precision": CSV_PRECISION,
        "time_mapping": seq.time_mapping,
        "meta": seq.meta,
    }
    mpath = d / "manifest.json"
    with open(mpath, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return mpath


def load_prob_sequence(path: str | os.PathLike) -> ProbMatrixSequence:
    """Inverse of :func:`save_prob_sequence`; ``path`` is the manifest or its directory."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise ParseError(f"no manifest at {path}")
    with open(path, encoding="utf-8") as fh:
        man = json.load(fh)
    mats = []
    for name in man["files"]:
        try:
            mats.append(np.loadtxt(path.parent / name, delimiter=",", ndmin=2))
        except ValueError as exc:
            raise ParseError(f"{name}: {exc}") from None
    n = int(man["n"])
    arr = np.stack(mats) if mats else np.zeros((0, n, n))
    return ProbMatrixSequence(np.array(man["times"], dtype=float), tuple(man["labels"]), arr,
                              man["stage"], man.get("time_mapping"), man.get("meta") or {})


def as_stack(seq) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(times, matrices)`` for either sequence type."""
    if isinstance(seq, SnapshotSequence):
        return seq.grid.points, seq.adjacency
    if isinstance(seq, ProbMatrixSequence):
        return seq.times, seq.matrices
    raise TypeError(f"expected a snapshot or probability sequence, got {type(seq).__name__}")


def offdiag_mask(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


def iter_pairs(n: int) -> Iterable[tuple[int, int]]:
    for i in range(n):
        for j in range(i + 1, n):
            yield i, j


def parse_times(spec: str | Sequence[float] | None, grid: TimeGrid) -> np.ndarray:
    """Query times from ``"grid"``, a comma list, or a sequence."""
    if spec is None or (isinstance(spec, str) and spec.strip() == "grid"):
        return grid.points.copy()
    if isinstance(spec, str):
        try:
            vals = [float(x) for x in spec.split(",") if x.strip()]
        except ValueError:
            raise ParseError(f"bad --times value {spec!r}") from None
    else:
        vals = [float(x) for x in spec]
    arr = np.array(vals, dtype=float)
    if arr.size == 0 or np.any((arr < 0) | (arr > 1)):
        raise ValidationError("query times must be a non-empty list in [0, 1]")
    return arr
