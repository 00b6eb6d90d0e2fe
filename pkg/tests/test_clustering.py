import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from encluster import clustering as cl
from encluster.clustering import FeatureSet
from encluster.errors import ConfigurationError, DegenerateMetricError, InvalidInputError, UndefinedMetricError


def fs_of(rows, kind="T"):
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[:, None]
    return FeatureSet(kind, rows, [f"e{i}" for i in range(len(rows))])


def blobs(n_per=50, sigma=0.1, sep=10.0, seed=0):
    rng = np.random.default_rng(seed)
    centres = np.array([[0, 0], [sep, 0], [0, sep]], dtype=float)
    rows = np.vstack([c + rng.normal(scale=sigma, size=(n_per, 2)) for c in centres])
    return fs_of(rows), np.repeat(np.arange(3), n_per)


def brute_force_inertia(x, k):
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(x)):
        labels = np.array(labels)
        if len(set(labels)) != k:
            continue
        sse = sum(np.sum((x[labels == j] - x[labels == j].mean(axis=0)) ** 2) for j in range(k))
        best = min(best, sse)
    return best


def test_k1_centroid_is_mean():
    x = np.random.default_rng(0).normal(size=(20, 3))
    res = cl.kmeans(fs_of(x), 1)
    assert np.allclose(res.centroids[0], x.mean(axis=0))
    assert np.all(res.labels == 0)


def test_four_point_example_matches_brute_force():
    x = np.array([[0.0], [0.1], [10.0], [10.1]])
    res = cl.kmeans(fs_of(x), 2, seed=0)
    assert res.labels[0] == res.labels[1] != res.labels[2] == res.labels[3]
    assert res.inertia == pytest.approx(brute_force_inertia(x, 2), abs=1e-12)
    assert res.inertia == pytest.approx(0.01, abs=1e-12)
    assert sorted(res.centroids[:, 0]) == pytest.approx([0.05, 10.05])


@pytest.mark.parametrize("seed", range(5))
def test_small_random_near_brute_force(seed):
    x = np.random.default_rng(seed).normal(size=(7, 2))
    best = min(cl.kmeans(fs_of(x), 3, seed=s).inertia for s in range(20))
    assert best == pytest.approx(brute_force_inertia(x, 3), rel=1e-9)


def test_k_equals_n_zero_inertia():
    x = np.random.default_rng(1).normal(size=(6, 2))
    res = cl.kmeans(fs_of(x), 6)
    assert res.inertia == 0.0
    assert sorted(res.labels) == list(range(6))


def test_k_out_of_range():
    with pytest.raises(ConfigurationError):
        cl.kmeans(fs_of([[0.0], [1.0]]), 3)
    with pytest.raises(ConfigurationError):
        cl.kmeans(fs_of([[0.0], [1.0]]), 0)


def test_inertia_history_non_increasing():
    x = np.random.default_rng(2).normal(size=(300, 5))
    res = cl.kmeans(fs_of(x), 8, seed=3)
    h = res.inertia_history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))
    assert res.inertia <= h[-1] * (1 + 1e-9)


def test_duplicate_points_no_empty_cluster():
    x = np.array([[0.0], [0.0], [0.0], [0.0], [5.0]])
    res = cl.kmeans(fs_of(x), 3, seed=0)
    assert len(set(res.labels)) == 3


def test_permutation_invariance():
    fs, truth = blobs()
    perm = np.random.default_rng(4).permutation(len(fs))
    a = cl.kmeans(fs, 3, seed=0)
    b = cl.kmeans(fs_of(fs.rows[perm]), 3, seed=0)
    assert cl.adjusted_rand_index(a.labels[perm], b.labels) == 1.0
    assert a.inertia == pytest.approx(b.inertia, rel=1e-9)


def test_determinism():
    fs, _ = blobs(seed=1)
    a, b = cl.kmeans(fs, 4, seed=9), cl.kmeans(fs, 4, seed=9)
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.centroids, b.centroids)


def test_validity_hand_example():
    x = [-6.0, -4.0, 4.0, 6.0]
    m = cl.validity(fs_of(x), np.array([0, 0, 1, 1]))
    assert m.bc == pytest.approx(10.0, abs=1e-12)
    assert m.wc == pytest.approx(1.0, abs=1e-12)
    assert m.lambda_bc == pytest.approx(10 / 11, abs=1e-12)
    assert m.lambda_wc == pytest.approx(1 / 11, abs=1e-12)


def test_validity_equal_shares():
    m = cl.validity(fs_of([-15.0, 5.0, -5.0, 15.0]), np.array([0, 0, 1, 1]))
    assert m.bc == pytest.approx(m.wc)
    assert m.lambda_bc == pytest.approx(0.5, abs=1e-12)


def test_validity_repeated_points():
    m = cl.validity(fs_of([1.0, 1.0, 3.0, 3.0, 3.0]), np.array([0, 0, 1, 1, 1]))
    assert m.wc == 0.0 and m.lambda_bc == 1.0 and m.lambda_wc == 0.0


def test_validity_undefined_and_degenerate():
    with pytest.raises(UndefinedMetricError):
        cl.validity(fs_of([1.0, 2.0, 3.0]), np.array([0, 0, 0]))
    with pytest.raises(UndefinedMetricError):
        cl.validity(fs_of([1.0, 2.0]), np.array([0, 1]))
    with pytest.raises(DegenerateMetricError):
        cl.validity(fs_of([2.0, 2.0, 2.0]), np.array([0, 0, 1]))


def test_validity_matches_loop_oracle():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(40, 3))
    labels = rng.integers(0, 4, size=40)
    grand = [sum(r[d] for r in x) / 40 for d in range(3)]
    bc = wc = 0.0
    for j in range(4):
        mem = [r for r, l in zip(x, labels) if l == j]
        c = [sum(r[d] for r in mem) / len(mem) for d in range(3)]
        bc += sum((g - v) ** 2 for g, v in zip(grand, c)) ** 0.5
        wc += sum(sum((r[d] - c[d]) ** 2 for d in range(3)) ** 0.5 for r in mem) / len(mem)
    bc /= 3
    wc /= 36
    m = cl.validity(fs_of(x), labels)
    assert m.bc == pytest.approx(bc, rel=1e-12)
    assert m.wc == pytest.approx(wc, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_lambda_sum_is_one(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, 4))
    res = cl.kmeans(fs_of(x), k, seed=seed)
    m = cl.validity(fs_of(x), res)
    assert abs(m.lambda_bc + m.lambda_wc - 1.0) <= 1e-12
    assert 0 <= m.lambda_bc <= 1


def test_sweep_rows_and_medians():
    fs, _ = blobs(n_per=20)
    sw = cl.sweep_k(fs, 2, 6, seeds=[0, 1, 2])
    assert len(sw.rows) == 15
    assert [(r.k, r.seed) for r in sw.rows] == [(k, s) for k in range(2, 7) for s in range(3)]
    for r in sw.rows:
        m = cl.validity(fs, cl.kmeans(fs, r.k, r.seed))
        assert r.lambda_wc == m.lambda_wc
    med = sw.medians()
    assert sorted(med) == [2, 3, 4, 5, 6]
    threaded = cl.sweep_k(fs, 2, 6, seeds=[0, 1, 2], threads=3)
    assert threaded.rows == sw.rows


def test_sweep_three_blobs_drop_at_true_k():
    fs, _ = blobs(n_per=30)
    med = cl.sweep_k(fs, 2, 5, seeds=range(5)).medians()
    # the within share collapses once every blob has its own cluster
    assert med[3]["lambda_wc"] < med[2]["lambda_wc"]
    assert med[3]["lambda_bc"] > 0.99


def test_sweep_range_checked():
    fs, _ = blobs(n_per=2)
    with pytest.raises(ConfigurationError):
        cl.sweep_k(fs, 1, 3, seeds=[0])
    with pytest.raises(ConfigurationError):
        cl.sweep_k(fs, 2, 6, seeds=[0])


def test_plateau():
    rows = [cl.SweepRow(k, 0, 1 - w, w, 0.0, 1) for k, w in [(2, 0.5), (3, 0.3), (4, 0.295), (5, 0.2)]]
    assert cl.SweepResult("T", rows).plateau_k(0.01) == 4
    assert cl.SweepResult("T", rows).plateau_k(0.001) is None


def test_ari_hand_example():
    assert cl.adjusted_rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    assert cl.adjusted_rand_index([0, 0, 1, 1], [5, 5, 7, 7]) == 1.0
    assert cl.adjusted_rand_index(["a", "a", "b"], [1, 1, 2]) == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_ari_matches_sklearn(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 5, size=60)
    b = rng.integers(0, 4, size=60)
    assert cl.adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(b, a), abs=1e-12)
    perm = rng.permutation(5)
    assert cl.adjusted_rand_index(perm[a], b) == pytest.approx(cl.adjusted_rand_index(a, b), abs=1e-12)


def test_ari_length_mismatch():
    with pytest.raises(InvalidInputError):
        cl.adjusted_rand_index([0, 1], [0, 1, 1])


def test_result_files_roundtrip(tmp_path):
    fs, _ = blobs(n_per=10)
    sw = cl.sweep_k(fs, 2, 3, seeds=[0, 1])
    p = cl.write_results_csv(tmp_path / "r.csv", "DTW", sw.rows)
    back = cl.read_results_csv(p)
    assert back.rows == sw.rows and back.kind == "DTW"
    res = cl.kmeans(fs, 3)
    p = cl.write_assignments_csv(tmp_path / "a.csv", fs.ids, res.labels)
    got = cl.read_assignments_csv(p)
    assert [got[i] for i in fs.ids] == list(res.labels + 1)
    assert min(got.values()) == 1
