import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tvsmooth.core import SmoothConfig, SnapshotSequence, ValidationError
from tvsmooth.tuning import CvGrid, EmptySnapshotError, cross_validate, loo_predict

from conftest import random_snapshots
from test_pipeline import composed_oracle


def rel_frob_offdiag(P, A):
    num = den = 0.0
    n = P.shape[0]
    for i in range(n):
        for j in range(n):
            if i != j:
                num += (P[i, j] - A[i, j]) ** 2
                den += A[i, j] ** 2
    return math.sqrt(num / den)


def test_singleton_grid():
    seq = random_snapshots(n=8, m=9, seed=1)
    grid = CvGrid((1,), (0.3,), (0.4,))
    rep = cross_validate(seq, grid)
    assert rep.best == (1, 0.3, 0.4)
    assert rep.fold_errors.shape == (1, 9)
    assert rep.valid_folds[0] == 9
    assert rep.mean_errors[0] == pytest.approx(rep.fold_errors[0].mean(), rel=1e-15)


def test_closed_form_global_average():
    # uniform kernel, degree 0, window covering everything, every node a neighbour:
    # the prediction averages columns i and j of the pooled training mean
    seq = random_snapshots(n=9, m=6, seed=2)
    rep = cross_validate(seq, CvGrid((0,), (1.5,), (1.0,), "uniform"))
    for k in range(seq.m):
        pooled = np.delete(seq.adjacency, k, axis=0).mean(axis=0)
        c = pooled.mean(axis=0)
        P = 0.5 * (c[:, None] + c[None, :])
        assert rep.fold_errors[0, k] == pytest.approx(rel_frob_offdiag(P, seq.adjacency[k]), rel=1e-12)


def test_fold_errors_match_loop_oracle():
    seq = random_snapshots(n=6, m=8, seed=3)
    grid = CvGrid((0, 1), (0.3, 0.5), (0.3, 1.0))
    rep = cross_validate(seq, grid)
    for i, (ell, h1, h2) in enumerate(rep.thetas):
        cfg = SmoothConfig(ell=ell, h1=h1, h2=h2)
        for k in range(seq.m):
            train = np.delete(seq.adjacency, k, axis=0)
            pts = np.delete(seq.grid.points, k)
            t = seq.grid.points[k]
            assert np.isfinite(rep.fold_errors[i, k])
            P = composed_oracle(train, pts, t, cfg)
            assert rep.fold_errors[i, k] == pytest.approx(rel_frob_offdiag(P, seq.adjacency[k]), abs=1e-12)


def test_perturbation_isolation():
    seq = random_snapshots(n=10, m=10, seed=4)  # grid 0.1, ..., 1.0
    grid = CvGrid((0,), (0.15,), (0.2, 0.5))
    base = cross_validate(seq, grid)
    k = 5
    adj = seq.adjacency.copy()
    adj[k] = 1 - adj[k]
    np.fill_diagonal(adj[k], 0)
    mutated = SnapshotSequence(seq.grid, seq.labels, adj)
    rep = cross_validate(mutated, grid)
    far = [j for j in range(seq.m) if abs(seq.grid.points[j] - seq.grid.points[k]) > 0.15]
    assert_array_equal(rep.fold_errors[:, far], base.fold_errors[:, far])
    assert np.all(rep.fold_errors[:, k] != base.fold_errors[:, k])
    # the held-out snapshot never enters its own prediction
    cfg = SmoothConfig(ell=0, h1=0.15, h2=0.2)
    assert_array_equal(loo_predict(mutated, k, cfg), loo_predict(seq, k, cfg))


def test_deterministic_and_thread_independent():
    seq = random_snapshots(n=10, m=8, seed=5)
    grid = CvGrid((0, 1), (0.2, 0.4), (0.1, 0.5, 1.0))
    a = cross_validate(seq, grid, threads=1)
    b = cross_validate(seq, grid, threads=3)
    assert a.best == b.best
    assert a.fold_errors.tobytes() == b.fold_errors.tobytes()


def test_ties_go_to_smallest_theta():
    # duplicate candidates can only tie
    seq = random_snapshots(n=8, m=6, seed=6)
    rep = cross_validate(seq, CvGrid((0,), (1.5, 2.0), (1.0,), "uniform"))
    assert rep.mean_errors[0] == rep.mean_errors[1]
    assert rep.best == (0, 1.5, 1.0)


def test_invalid_folds_get_infinite_mean():
    seq = random_snapshots(n=8, m=10, seed=7)
    rep = cross_validate(seq, CvGrid((2,), (0.06, 0.5), (0.5,)))
    assert rep.valid_folds[0] < seq.m
    assert math.isinf(rep.mean_errors[0])
    assert rep.best == (2, 0.5, 0.5)
    d = rep.to_dict()
    assert d["candidates"][0]["mean_error"] is None
    json.dumps(d)


def test_report_json(tmp_path):
    seq = random_snapshots(n=8, m=6, seed=8)
    rep = cross_validate(seq, CvGrid((0, 1), (0.4,), (0.5,)))
    d = json.loads(rep.save(tmp_path / "r.json").read_text())
    assert (d["best"]["ell"], d["best"]["h1"], d["best"]["h2"]) == rep.best
    assert len(d["candidates"]) == 2
    assert len(d["candidates"][0]["fold_errors"]) == 6
    assert_allclose(d["times"], seq.grid.points)
    assert CvGrid.from_dict(d["grid"]) == rep.grid


def test_default_grid():
    g = CvGrid.default(101, 50)
    assert g.ells == (0, 1, 2)
    assert len(g.h1s) == 8 and len(g.h2s) == 8
    assert g.h1s[0] == pytest.approx(0.04) and g.h1s[-1] == pytest.approx(0.5)
    assert g.h2s[0] == pytest.approx(0.01) and g.h2s[-1] == pytest.approx(1.0)


def test_input_errors():
    with pytest.raises(ValidationError):
        cross_validate(random_snapshots(n=5, m=2), CvGrid((0,), (0.5,), (0.5,)))
    seq = random_snapshots(n=5, m=5)
    adj = seq.adjacency.copy()
    adj[1] = 0
    with pytest.raises(EmptySnapshotError):
        cross_validate(SnapshotSequence(seq.grid, seq.labels, adj), CvGrid((0,), (0.5,), (0.5,)))
    with pytest.raises(ValidationError):
        cross_validate(seq, CvGrid((0,), (0.11,), (0.5,)))
    with pytest.raises(ValidationError):
        CvGrid((0,), (), (0.5,))
