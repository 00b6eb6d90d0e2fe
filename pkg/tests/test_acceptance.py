"""Acceptance criteria 1-10, one PASS/FAIL line each in the terminal summary."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from encluster import autoencoder as ae
from encluster import cli, clustering, extraction, features, synth
from encluster.clustering import FeatureSet
from encluster.extraction import UnifiedEncounter

from conftest import ACCEPTANCE_LINES

BASELINE = json.loads((Path(__file__).parent / "baselines" / "dtw_k5_ari.json").read_text())
SEEDS = list(range(10))


def record(n, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {n:2d} {title}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def dtw_set(unified100):
    return FeatureSet.from_reps(features.featurize(unified100, "DTW"))


@pytest.fixture(scope="module")
def ned_set(unified100):
    return FeatureSet.from_reps(features.featurize(unified100, "NED"))


@pytest.fixture(scope="module")
def dtw_sweep(dtw_set):
    t0 = time.perf_counter()
    result = clustering.sweep_k(dtw_set, 2, 12, SEEDS)
    return result, time.perf_counter() - t0


def random_unified(rng, n, kbar):
    return [
        UnifiedEncounter(f"r{i}", rng.uniform(-100, 100, (kbar, 2)), rng.uniform(-100, 100, (kbar, 2))) for i in range(n)
    ]


def test_c01_dtw_oracle():
    encs = random_unified(np.random.default_rng(101), 100, 10)
    t0 = time.perf_counter()
    mats = [features.dtw_matrix(e) for e in encs]
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for e, f in zip(encs, mats):
        for m in range(10):
            for n in range(10):
                dx = e.points_a[m][0] - e.points_b[n][0]
                dy = e.points_a[m][1] - e.points_b[n][1]
                worst = max(worst, abs(f[m, n] - math.sqrt(dx * dx + dy * dy)))
    record(1, "DTW oracle", worst <= 1e-9 and elapsed < 1.0, f"max|d| = {worst:.2e} (<= 1e-9), {elapsed * 1e3:.1f} ms (< 1 s)")


def test_c02_ned_contract():
    encs = random_unified(np.random.default_rng(102), 100, 50)
    worst = max(abs(features.ned_vector(e).max() - 1.0) for e in encs)
    pts = np.random.default_rng(0).normal(size=(50, 2))
    zero = features.ned_vector(UnifiedEncounter("z", pts, pts.copy()))
    ok = worst <= 1e-12 and np.array_equal(zero, np.zeros(50))
    record(2, "NED contract", ok, f"max|max(NED) - 1| = {worst:.1e} (<= 1e-12), coincident -> zeros: {not zero.any()}")


def test_c03_validity_hand_check(dtw_sweep):
    x = np.array([[0.0], [2.0], [10.0], [12.0]])
    m = clustering.validity(x, np.array([0, 0, 1, 1]))
    errs = (abs(m.bc - 10), abs(m.wc - 1), abs(m.lambda_bc - 10 / 11))
    sweep, _ = dtw_sweep
    worst_sum = max(abs(r.lambda_bc + r.lambda_wc - 1) for r in sweep.rows)
    ok = max(errs) <= 1e-12 and worst_sum <= 1e-12
    record(
        3,
        "validity hand check",
        ok,
        f"BC={m.bc:.12g} WC={m.wc:.12g} lambda_BC={m.lambda_bc:.12f}; "
        f"max|lambda sum - 1| over {len(sweep.rows)} sweep runs = {worst_sum:.1e}",
    )


def test_c04_kmeans_correctness():
    rng = np.random.default_rng(104)
    centres = np.array([[0.0, 0.0], [10.0, 0.0], [5.0, 10.0 * math.sqrt(3) / 2]])
    x = np.vstack([c + rng.normal(scale=0.1, size=(50, 2)) for c in centres])
    truth = np.repeat(np.arange(3), 50)
    aris = [clustering.adjusted_rand_index(clustering.kmeans(x, 3, seed=s).labels, truth) for s in range(20)]
    pts = np.array([[0.0], [0.1], [10.0], [10.1]])
    best, best_labels = np.inf, None
    for mask in range(1, 8):  # every 2-partition, point 0 fixed in cluster 0
        labels = np.array([0] + [(mask >> i) & 1 for i in range(3)])
        sse = sum(np.sum((pts[labels == j] - pts[labels == j].mean()) ** 2) for j in (0, 1))
        if sse < best:
            best, best_labels = sse, labels
    res = clustering.kmeans(pts, 2, seed=0)
    same = clustering.adjusted_rand_index(res.labels, best_labels) == 1.0
    ok = min(aris) == 1.0 and same and abs(res.inertia - best) <= 1e-12
    record(4, "k-means correctness", ok, f"min ARI over 20 seeds = {min(aris):.4f}; 4-point partition matches brute force: {same}")


def test_c05_lambda_wc_trend(dtw_sweep):
    sweep, elapsed = dtw_sweep
    med = sweep.medians()
    wc = [med[k]["lambda_wc"] for k in range(2, 13)]
    steps = np.diff(wc)
    ok = len(wc) == 11 and float(steps.max()) <= 0.02 and elapsed < 300
    record(
        5,
        "lambda_WC trend",
        ok,
        f"median lambda_WC k=2..12 {wc[0]:.4f} -> {wc[-1]:.4f}, largest step {steps.max():+.4f} (<= +0.02), "
        f"{int(np.sum(steps > 0))} of 10 steps rise; sweep {elapsed:.1f} s (< 300 s)",
    )


def test_c06_method_ordering(dtw_sweep, ned_set):
    sweep, _ = dtw_sweep
    dtw_bc = sweep.medians()[5]["lambda_bc"]
    ned = clustering.sweep_k(ned_set, 5, 5, SEEDS)
    ned_bc = ned.medians()[5]["lambda_bc"]
    record(6, "method ordering", dtw_bc >= ned_bc, f"median lambda_BC at k=5: DTW {dtw_bc:.4f} >= NED {ned_bc:.4f}")


def test_c07_scenario_recovery(corpus, dtw_set):
    _, labels = corpus
    truth = [labels[i] for i in dtw_set.ids]
    runs = [clustering.kmeans(dtw_set, 5, seed=s) for s in BASELINE["seeds"]]
    best = min(runs, key=lambda r: (r.inertia, r.seed))
    ari = clustering.adjusted_rand_index(best.labels, truth)
    again = clustering.kmeans(dtw_set, 5, seed=best.seed)
    deterministic = np.array_equal(again.labels, best.labels) and again.inertia == best.inertia
    threshold = BASELINE["threshold"]
    ok = threshold >= 0.5 and ari >= threshold and deterministic
    record(
        7,
        "scenario recovery",
        ok,
        f"DTW k=5 ARI {ari:.4f} >= T = {threshold} (baseline {BASELINE['baseline_ari']}, seed {best.seed}); "
        f"deterministic: {deterministic}",
    )


def test_c08_autoencoder_numerics(unified100):
    rng = np.random.default_rng(108)
    worst = 0.0
    for trial in range(3):
        m = ae.ae_init([8, 6, 3, 6, 8], seed=trial)
        for b in m.biases:
            b += rng.normal(scale=0.1, size=b.shape)
        batch = rng.normal(scale=0.5, size=(4, 8))
        g = ae.ae_gradient(m, batch)
        ana = np.concatenate([p.ravel() for p in [*g.weights, *g.biases]])
        num = []
        for p in m.params():
            flat = p.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + 1e-5
                up = ae.batch_loss(m, batch)
                flat[i] = old - 1e-5
                down = ae.batch_loss(m, batch)
                flat[i] = old
                num.append((up - down) / 2e-5)
        num = np.array(num)
        worst = max(worst, np.linalg.norm(ana - num) / max(np.linalg.norm(ana), np.linalg.norm(num)))

    data = np.vstack([features.ned_vector(u) for u in unified100])
    cfg = ae.TrainConfig()
    runs = [ae.ae_train(ae.ae_init(ae.default_layer_dims(data.shape[1]), seed=0), data, cfg) for _ in range(2)]
    (m1, h1), (m2, h2) = runs
    ratio = h1[-1] / h1[0]
    bitwise = h1 == h2 and all(np.array_equal(a, b) for a, b in zip(m1.params(), m2.params()))
    ok = worst <= 1e-5 and ratio <= 0.2 and len(h1) == 200 and bitwise
    record(
        8,
        "autoencoder numerics",
        ok,
        f"gradient rel err {worst:.1e} (<= 1e-5); NED-AE loss {h1[0]:.4g} -> {h1[-1]:.4g} "
        f"= {ratio:.2%} of epoch 1 (<= 20%); bit-reproducible: {bitwise}",
    )


def test_c09_performance():
    encounters, _ = synth.gen_corpus(100, seed=9)
    assert len(encounters) == 500
    t0 = time.perf_counter()
    unified = [extraction.unify_encounter(e, 100) for e in encounters]
    dtw = features.featurize(unified, "DTW")
    t_dtw = time.perf_counter() - t0
    t0 = time.perf_counter()
    unified = [extraction.unify_encounter(e, 100) for e in encounters]
    ned = features.featurize(unified, "NED")
    t_ned = time.perf_counter() - t0
    ok = t_dtw < 30 and t_ned < 2 and len(dtw) == len(ned) == 500
    record(9, "performance", ok, f"500 encounters at K=100 (incl. unification): DTW {t_dtw:.2f} s (< 30 s), NED {t_ned:.2f} s (< 2 s)")


def _pipeline(out):
    steps = [
        ["synth"],
        ["extract"],
        ["featurize", "--kind", "DTW"],
        ["sweep", "--kind", "DTW"],
        ["cluster", "--kind", "DTW", "--k", "5"],
        ["export", "--kind", "DTW", "--k", "5", "--format", "svg"],
    ]
    return [cli.main(["--out", str(out), "--seed", "0", *s]) for s in steps]


@pytest.mark.slow
def test_c10_end_to_end_determinism(tmp_path):
    codes = [_pipeline(tmp_path / run) for run in ("run1", "run2")]
    files = sorted(p.relative_to(tmp_path / "run1") for p in (tmp_path / "run1").rglob("*") if p.suffix in (".csv", ".svg"))
    differ = [str(f) for f in files if (tmp_path / "run1" / f).read_bytes() != (tmp_path / "run2" / f).read_bytes()]
    has_svg = any(f.suffix == ".svg" for f in files)
    has_results = any(f.name.endswith("_results.csv") for f in files)
    n_found = len(extraction.read_archive(tmp_path / "run1" / "archive"))
    ok = all(c == 0 for run in codes for c in run) and not differ and has_svg and has_results and n_found == 200
    record(
        10,
        "end-to-end determinism",
        ok,
        f"{len(files)} CSV/SVG files compared across two runs, {len(differ)} differ {differ[:3]}; re-scan found {n_found} encounters",
    )
