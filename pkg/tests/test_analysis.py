import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from hypothesis import given, settings
from hypothesis import strategies as st

from tvsmooth.analysis import (AnalysisError, GroupPartition, cluster_trajectories, cut_linkage,
                               load_party_tsv, pair_types, polarization_score, silhouette,
                               trajectory_dissimilarity, trajectory_vectors, ward_cluster, ward_linkage)
from tvsmooth.core import ProbMatrixSequence


def rand_seq(n, T, rng):
    P = rng.random((T, n, n))
    P = 0.5 * (P + P.transpose(0, 2, 1))
    return ProbMatrixSequence(np.linspace(0, 1, T), range(n), P)


def rand_dissimilarity(n, rng):
    X = rng.random((n, n))
    D = 0.5 * (X + X.T)
    np.fill_diagonal(D, 0)
    return D


def ward_oracle(D):
    """Greedy agglomeration minimising the Ward merge cost, computed from scratch each step."""
    S = D ** 2
    clusters = [[i] for i in range(D.shape[0])]
    merges = []
    while len(clusters) > 1:
        best = None
        for x in range(len(clusters)):
            for y in range(x + 1, len(clusters)):
                A, B = clusters[x], clusters[y]
                mab = S[np.ix_(A, B)].mean()
                maa = S[np.ix_(A, A)].mean()
                mbb = S[np.ix_(B, B)].mean()
                cost = 2 * len(A) * len(B) / (len(A) + len(B)) * (mab - 0.5 * maa - 0.5 * mbb)
                key = (cost, min(A), min(B))
                if best is None or key < best[0]:
                    best = (key, x, y)
        (cost, _, _), x, y = best
        merged = sorted(clusters[x] + clusters[y])
        merges.append((frozenset(clusters[x]), frozenset(clusters[y]), np.sqrt(cost)))
        clusters = [c for i, c in enumerate(clusters) if i not in (x, y)] + [merged]
        clusters.sort(key=min)
    return merges


def linkage_members(Z, n):
    members = {i: frozenset([i]) for i in range(n)}
    out = []
    for step, (a, b, h, size) in enumerate(Z):
        A, B = members[int(a)], members[int(b)]
        members[n + step] = A | B
        assert len(A | B) == size
        out.append((A, B, h))
    return out


def test_dissimilarity_twins_and_opposites():
    # node 1 copies node 0 and node 3 mirrors node 4 (v3 = 1 - v4)
    rng = np.random.default_rng(0)
    T, n = 3, 5
    P = np.zeros((T, n, n))
    for k in range(T):
        a, b, c, d = rng.uniform(0.1, 0.9, 4)
        upper = {(0, 1): a, (0, 2): b, (1, 2): b, (0, 4): c, (1, 4): c, (0, 3): 1 - c, (1, 3): 1 - c,
                 (2, 4): d, (2, 3): 1 - d, (3, 4): 0.5}
        for (i, j), v in upper.items():
            P[k, i, j] = P[k, j, i] = v
    seq = ProbMatrixSequence(np.linspace(0, 1, T), range(n), P)
    V = trajectory_vectors(seq)
    assert_array_equal(V[0], V[1])
    assert_allclose(V[3], 1 - V[4], atol=1e-15)
    D = trajectory_dissimilarity(seq)
    assert D[0, 1] == pytest.approx(0, abs=1e-12)
    assert D[3, 4] == pytest.approx(1, abs=1e-12)


def test_trajectory_vectors_layout():
    rng = np.random.default_rng(1)
    seq = rand_seq(4, 3, rng)
    V = trajectory_vectors(seq)
    assert V.shape == (4, 9)
    assert_array_equal(V[2], np.concatenate([np.delete(M[2], 2) for M in seq.matrices]))


def test_dissimilarity_pearson_oracle():
    rng = np.random.default_rng(2)
    seq = rand_seq(6, 4, rng)
    V = trajectory_vectors(seq)
    D = trajectory_dissimilarity(seq)
    for i in range(6):
        for j in range(6):
            a, b = V[i] - V[i].mean(), V[j] - V[j].mean()
            r = (a @ b) / np.sqrt((a @ a) * (b @ b))
            assert D[i, j] == pytest.approx(0 if i == j else 1 - (r + 1) / 2, abs=1e-12)


def test_dissimilarity_affine_invariance():
    rng = np.random.default_rng(3)
    seq = rand_seq(7, 3, rng)
    scaled = ProbMatrixSequence(seq.times, seq.labels, 0.4 * seq.matrices + 0.3)
    assert_allclose(trajectory_dissimilarity(scaled), trajectory_dissimilarity(seq), atol=1e-12)


def test_constant_trajectory_rejected():
    P = np.full((2, 4, 4), 0.3)
    with pytest.raises(AnalysisError):
        trajectory_dissimilarity(ProbMatrixSequence([0.2, 0.8], range(4), P))


def test_ward_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(25):
        n = int(rng.integers(3, 11))
        D = rand_dissimilarity(n, rng)
        got = linkage_members(ward_linkage(D), n)
        ref = ward_oracle(D)
        for (A, B, h), (A2, B2, h2) in zip(got, ref):
            assert {A, B} == {A2, B2}
            assert h == pytest.approx(h2, abs=1e-12)


def test_ward_matches_scipy():
    from scipy.cluster.hierarchy import linkage
    from scipy.spatial.distance import squareform

    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(3, 15))
        X = rng.normal(size=(n, 3))
        D = np.linalg.norm(X[:, None] - X[None], axis=2)
        Z = ward_linkage(D)
        Zs = linkage(squareform(D, checks=False), "ward")
        assert_allclose(Z[:, 2], Zs[:, 2], atol=1e-12)
        ours = [{A, B} for A, B, _ in linkage_members(Z, n)]
        theirs = [{A, B} for A, B, _ in linkage_members(Zs, n)]
        assert ours == theirs


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 12), seed=st.integers(0, 2 ** 32 - 1))
def test_ward_heights_monotone_and_cuts_nested(n, seed):
    D = rand_dissimilarity(n, np.random.default_rng(seed))
    Z = ward_linkage(D)
    assert np.all(np.diff(Z[:, 2]) >= -1e-12)
    for k in range(2, n + 1):
        fine, coarse = cut_linkage(Z, k), cut_linkage(Z, k - 1)
        assert np.unique(fine).size == k and np.unique(coarse).size == k - 1
        # every fine cluster sits inside one coarse cluster
        for c in np.unique(fine):
            assert np.unique(coarse[fine == c]).size == 1


def test_separated_groups():
    rng = np.random.default_rng(6)
    groups = np.array([0, 0, 1, 0, 1, 1, 0, 1])
    D = np.where(groups[:, None] == groups[None, :], rng.uniform(0, 0.02, (8, 8)), rng.uniform(0.97, 1, (8, 8)))
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0)
    res = ward_cluster(D, [2, 3])
    assert res.k == 2
    assert_array_equal(res.labels, groups)
    assert res.silhouettes[2] > 0.9


def test_all_singletons_silhouette_zero():
    D = rand_dissimilarity(3, np.random.default_rng(7))
    res = ward_cluster(D, [3])
    assert res.k == 3 and res.silhouettes[3] == 0.0


def test_silhouette_matches_sklearn():
    from sklearn.metrics import silhouette_samples, silhouette_score

    rng = np.random.default_rng(8)
    for _ in range(20):
        n = int(rng.integers(4, 15))
        D = rand_dissimilarity(n, rng)
        k = int(rng.integers(2, n))
        labels = cut_linkage(ward_linkage(D), k)
        mean, per = silhouette(D, labels)
        assert_allclose(per, silhouette_samples(D, labels, metric="precomputed"), atol=1e-12)
        assert mean == pytest.approx(silhouette_score(D, labels, metric="precomputed"), abs=1e-12)
        assert np.all(np.abs(per) <= 1)


def test_k_range_bounds():
    D = rand_dissimilarity(4, np.random.default_rng(9))
    with pytest.raises(AnalysisError):
        ward_cluster(D, [1, 2])
    with pytest.raises(AnalysisError):
        ward_cluster(D, [5])


def test_cluster_curves():
    T, n = 4, 5
    t = np.linspace(0, 1, T)
    P = np.zeros((T, n, n))
    P[:, :3, :3] = 0.6
    P[:, 3, 4] = P[:, 4, 3] = 0.1 + 0.5 * t
    P[:, np.arange(n), np.arange(n)] = 0
    seq = ProbMatrixSequence(t, range(n), P)
    curves = cluster_trajectories(seq, np.array([0, 0, 0, 1, 1]))
    assert_allclose(curves[0], 0.6)
    assert_allclose(curves[1], 0.1 + 0.5 * t)
    lone = cluster_trajectories(seq, np.array([0, 0, 0, 1, 2]))
    assert np.all(np.isnan(lone[2]))


def test_pair_types():
    assert list(pair_types(np.array(["R", "D", "R"]))) == ["D|R", "R|R", "D|R"]


def test_polarization_trivial_cases():
    cats = np.array(["D", "D", "R", "R", "R"])
    g = pair_types(cats)
    iu, ju = np.triu_indices(5, 1)
    level = {"D|D": 0.9, "R|R": 0.7, "D|R": 0.1}
    P = np.zeros((5, 5))
    P[iu, ju] = [level[x] for x in g]
    P = P + P.T
    seq = ProbMatrixSequence([0.5], range(5), P[None])
    part = GroupPartition(cats[None])
    assert polarization_score(seq, part)[0] == 1.0
    # every group mean equal to the grand mean
    Q = np.zeros((5, 5))
    vals = {"D|D": [0.5], "R|R": [0.2, 0.8, 0.5], "D|R": [0.3, 0.7, 0.4, 0.6, 0.5, 0.5]}
    for key, v in vals.items():
        Q[iu[g == key], ju[g == key]] = v
    Q = Q + Q.T
    r2 = polarization_score(ProbMatrixSequence([0.5], range(5), Q[None]), part)[0]
    assert r2 == 0.0


def test_polarization_anova_oracle_and_range():
    rng = np.random.default_rng(10)
    for _ in range(30):
        n, T = int(rng.integers(3, 10)), 3
        seq = rand_seq(n, T, rng)
        cats = rng.choice(["A", "B", "C"], size=(T, n))
        r2 = polarization_score(seq, GroupPartition(cats))
        for k in range(T):
            x, g = [], []
            for i in range(n):
                for j in range(i + 1, n):
                    x.append(seq.matrices[k, i, j])
                    g.append("|".join(sorted((cats[k, i], cats[k, j]))))
            x, g = np.array(x), np.array(g)
            grand = x.mean()
            between = sum((g == key).sum() * (x[g == key].mean() - grand) ** 2 for key in set(g))
            assert r2[k] == pytest.approx(between / ((x - grand) ** 2).sum(), abs=1e-12)
        assert np.all((r2 >= 0) & (r2 <= 1))


def test_polarization_undefined_when_flat():
    seq = ProbMatrixSequence([0.5], range(3), np.full((1, 3, 3), 0.4) * (1 - np.eye(3)))
    assert np.isnan(polarization_score(seq, GroupPartition(np.array([["a", "b", "a"]])))[0])


def test_party_tsv(tmp_path):
    P = np.full((3, 3, 3), 0.2) * (1 - np.eye(3))
    seq = ProbMatrixSequence([0.0, 0.5, 1.0], ["x", "y", "z"], P,
                             time_mapping={"origin": 2000.0, "span": 10.0})
    f = tmp_path / "party.tsv"
    f.write_text("time\tnode\tcategory\n2000\tx\tD\n2006\tx\tR\n2003\ty\tR\n2000\tz\tD\n")
    cats = load_party_tsv(f, seq).categories
    assert_array_equal(cats, [["D", "R", "D"], ["D", "R", "D"], ["R", "R", "D"]])
    f.write_text("2000\tx\tD\n")
    from tvsmooth.core import ParseError

    with pytest.raises(ParseError):
        load_party_tsv(f, seq)
