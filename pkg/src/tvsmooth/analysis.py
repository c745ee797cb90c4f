"""Downstream analyses of an estimated probability sequence.

Nodes are summarised by their stacked connection-probability rows over
time, clustered with Ward linkage on a correlation dissimilarity, and the
cut is chosen by average silhouette. Separately, a group-based polarization
score measures how much pairwise probability variance is explained by
pair types of a (time-varying) node categorisation.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import ParseError, ProbMatrixSequence, TvSmoothError

__all__ = [
    "AnalysisError",
    "ClusterResult",
    "GroupPartition",
    "trajectory_vectors",
    "trajectory_dissimilarity",
    "ward_linkage",
    "cut_linkage",
    "silhouette",
    "ward_cluster",
    "cluster_trajectories",
    "pair_types",
    "polarization_score",
    "load_party_tsv",
]


class AnalysisError(TvSmoothError):
    module = "analysis"


def trajectory_vectors(seq: ProbMatrixSequence) -> np.ndarray:
    """Row ``i`` of every matrix, self-entry dropped, concatenated over time: ``(n, (n-1) T)``."""
    mats = seq.matrices
    T, n, _ = mats.shape
    off = ~np.eye(n, dtype=bool)
    return np.concatenate([mats[k][off].reshape(n, n - 1) for k in range(T)], axis=1)


def trajectory_dissimilarity(seq: ProbMatrixSequence) -> np.ndarray:
    """``D = 1 - (corr + 1)/2`` between node trajectories."""
    V = trajectory_vectors(seq)
    sd = V.std(axis=1)
    flat = np.flatnonzero(sd == 0)
    if flat.size:
        raise AnalysisError(f"node(s) {[seq.labels[i] for i in flat]} have constant trajectories")
    S = np.corrcoef(V)
    D = 1.0 - (S + 1.0) / 2.0
    D = np.clip(0.5 * (D + D.T), 0.0, 1.0)
    np.fill_diagonal(D, 0.0)
    return D


def ward_linkage(D: np.ndarray) -> np.ndarray:
    """Ward agglomeration by the Lance-Williams recurrence on squared dissimilarities.

    Returns a SciPy-style ``(n-1, 4)`` linkage ``[id_a, id_b, height, size]``;
    heights are on the dissimilarity scale. Ties go to the pair whose
    smallest members are lexicographically smallest.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if D.ndim != 2 or D.shape != (n, n):
        raise AnalysisError(f"dissimilarity must be square, got {D.shape}")
    if n < 2:
        raise AnalysisError("need at least two objects to cluster")
    S = D ** 2
    size = np.ones(n)
    ids = np.arange(n)
    active = np.ones(n, dtype=bool)
    Z = np.zeros((n - 1, 4))
    for step in range(n - 1):
        cand = np.where(active[:, None] & active[None, :], S, np.inf)
        cand[np.tril_indices(n)] = np.inf
        a, b = np.unravel_index(np.argmin(cand), cand.shape)
        sab = S[a, b]
        na, nb = size[a], size[b]
        Z[step] = (min(ids[a], ids[b]), max(ids[a], ids[b]), np.sqrt(sab), na + nb)
        others = np.flatnonzero(active)
        others = others[(others != a) & (others != b)]
        nk = size[others]
        new = ((na + nk) * S[a, others] + (nb + nk) * S[b, others] - nk * sab) / (na + nb + nk)
        S[a, others] = S[others, a] = new
        size[a] = na + nb
        ids[a] = n + step
        active[b] = False
    return Z


def cut_linkage(Z: np.ndarray, k: int) -> np.ndarray:
    """Flat labels ``0..k-1`` after applying the first ``n - k`` merges.

    Labels are numbered by each cluster's smallest member.
    """
    n = Z.shape[0] + 1
    if not 1 <= k <= n:
        raise AnalysisError(f"cannot cut {n} objects into {k} clusters")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in range(n - k):
        a, b = int(Z[step, 0]), int(Z[step, 1])
        parent[find(a)] = n + step
        parent[find(b)] = n + step
    roots = [find(i) for i in range(n)]
    order = {}
    for r in roots:
        order.setdefault(r, len(order))
    return np.array([order[r] for r in roots])


def silhouette(D: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean and per-object silhouette on a precomputed dissimilarity.

    Objects in singleton clusters score 0. Needs at least two clusters.
    """
    D = np.asarray(D, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise AnalysisError("silhouette needs at least two clusters")
    n = D.shape[0]
    s = np.zeros(n)
    members = {c: np.flatnonzero(labels == c) for c in uniq}
    for i in range(n):
        own = members[labels[i]]
        if own.size == 1:
            continue
        a = D[i, own].sum() / (own.size - 1)
        b = min(D[i, idx].mean() for c, idx in members.items() if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s.mean()), s


@dataclass(frozen=True, eq=False)
class ClusterResult:
    linkage: np.ndarray
    k: int
    labels: np.ndarray
    silhouettes: dict
    dissimilarity: np.ndarray

    def to_dict(self, node_labels: Iterable[str] | None = None) -> dict:
        node_labels = list(node_labels) if node_labels is not None else [str(i) for i in range(len(self.labels))]
        return {
            "k": self.k,
            "labels": {lab: int(c) for lab, c in zip(node_labels, self.labels)},
            "silhouettes": {str(k): float(v) for k, v in sorted(self.silhouettes.items())},
            "merges": [{"a": int(a), "b": int(b), "height": float(h), "size": int(s)}
                       for a, b, h, s in self.linkage],
        }


def ward_cluster(D: np.ndarray, k_range: Iterable[int]) -> ClusterResult:
    """Ward clustering with the cut chosen by maximal average silhouette (ties to smaller K)."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    ks = sorted(set(int(k) for k in k_range))
    if not ks or ks[0] < 2 or ks[-1] > n:
        raise AnalysisError(f"k_range must lie within [2, {n}], got {ks}")
    Z = ward_linkage(D)
    scores = {k: silhouette(D, cut_linkage(Z, k))[0] for k in ks}
    best = max(ks, key=lambda k: (scores[k], -k))
    return ClusterResult(Z, best, cut_linkage(Z, best), scores, D)


def cluster_trajectories(seq: ProbMatrixSequence, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Mean within-cluster probability over distinct pairs, per time.

    Singleton clusters map to an all-NaN curve.
    """
    labels = np.asarray(labels)
    mats = seq.matrices
    out = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            out[int(c)] = np.full(mats.shape[0], np.nan)
            continue
        sub = mats[:, idx][:, :, idx]
        tot = sub.sum(axis=(1, 2)) - np.trace(sub, axis1=1, axis2=2)
        out[int(c)] = tot / (idx.size * (idx.size - 1))
    return out


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Node categories per time point; ``categories`` has shape ``(T, n)``."""

    categories: np.ndarray

    def types_at(self, k: int) -> np.ndarray:
        return pair_types(self.categories[k])


def pair_types(cats: np.ndarray) -> np.ndarray:
    """Unordered category pair of every ``i < j`` pair, as ``"a|b"`` strings."""
    cats = np.asarray(cats, dtype=str)
    iu, ju = np.triu_indices(cats.size, k=1)
    lo = np.where(cats[iu] <= cats[ju], cats[iu], cats[ju])
    hi = np.where(cats[iu] <= cats[ju], cats[ju], cats[iu])
    return np.char.add(np.char.add(lo, "|"), hi)


def _shifted_mean(x: np.ndarray) -> float:
    # exact for constant groups
    return float(x[0] + np.mean(x - x[0]))


def polarization_score(seq: ProbMatrixSequence, partition: GroupPartition) -> np.ndarray:
    """Between-group over total sum of squares of upper-triangular probabilities, per time.

    Times where all pair probabilities coincide give NaN.
    """
    mats = seq.matrices
    T, n, _ = mats.shape
    cats = np.asarray(partition.categories)
    if cats.shape != (T, n):
        raise AnalysisError(f"partition shape {cats.shape} does not match sequence ({T}, {n})")
    iu, ju = np.triu_indices(n, k=1)
    r2 = np.full(T, np.nan)
    for k in range(T):
        x = mats[k][iu, ju]
        g = partition.types_at(k)
        grand = _shifted_mean(x)
        fitted = np.empty_like(x)
        for key in np.unique(g):
            sel = g == key
            fitted[sel] = _shifted_mean(x[sel])
        ss_total = float(np.sum((x - grand) ** 2))
        if ss_total == 0:
            continue
        r2[k] = float(np.sum((fitted - grand) ** 2)) / ss_total
    return r2


def load_party_tsv(path: str | os.PathLike, seq: ProbMatrixSequence) -> GroupPartition:
    """Read ``time node category`` rows and align them with the sequence times.

    Each node takes its latest category at or before each time point (its
    earliest one before that). Year-valued times are mapped with the
    sequence's ``time_mapping``.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    records: dict[str, list[tuple[float, str]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), start=1):
            if not row or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "time":
                continue
            if len(row) != 3:
                raise ParseError(f"{path}:{lineno}: expected time, node, category")
            try:
                t = float(row[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad time {row[0]!r}") from None
            if t > 1:
                tm = seq.time_mapping
                if tm is None:
                    raise ParseError(f"{path}:{lineno}: year-valued time but sequence has no time mapping")
                t = (t - tm["origin"]) / tm["span"]
            records.setdefault(row[1].strip(), []).append((t, row[2].strip()))
    missing = [lab for lab in seq.labels if lab not in records]
    if missing:
        raise ParseError(f"no category for node(s) {missing[:5]}")
    cats = np.empty((seq.m, seq.n), dtype=object)
    for j, lab in enumerate(seq.labels):
        recs = sorted(records[lab])
        ts = np.array([r[0] for r in recs])
        for k, t in enumerate(seq.times):
            pos = int(np.searchsorted(ts, t + 1e-9, side="right")) - 1
            cats[k, j] = recs[max(pos, 0)][1]
    return GroupPartition(cats.astype(str))
