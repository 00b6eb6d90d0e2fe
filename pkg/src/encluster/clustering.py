"""k-means on encounter representations and between/within-cluster validity."""

from __future__ import annotations

import csv
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .errors import ConfigurationError, DegenerateMetricError, InvalidInputError, UndefinedMetricError

RESULTS_HEADER = ("kind", "k", "seed", "lambda_bc", "lambda_wc", "inertia", "iterations")
ASSIGNMENTS_HEADER = ("encounter_id", "cluster")


@dataclass(frozen=True, eq=False)
class FeatureSet:
    kind: str
    rows: np.ndarray
    ids: list[str]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or len(rows) < 1:
            raise InvalidInputError("feature rows must be a non-empty 2-D array")
        if len(self.ids) != len(rows):
            raise InvalidInputError(f"{len(self.ids)} ids for {len(rows)} rows")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", list(self.ids))

    @classmethod
    def from_reps(cls, reps) -> FeatureSet:
        reps = list(reps)
        if not reps:
            raise InvalidInputError("no representations")
        kind = reps[0].kind
        return cls(getattr(kind, "value", kind), np.vstack([r.data for r in reps]), [r.encounter_id for r in reps])

    def __len__(self):
        return len(self.rows)


@dataclass(eq=False)
class ClusterResult:
    """Labels are 0-based indices into ``centroids``."""

    k: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    seed: int
    iterations: int
    inertia_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class ValidityMetrics:
    bc: float
    wc: float
    lambda_bc: float
    lambda_wc: float


def _sq_dists(x: np.ndarray, x_sq: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] - 2.0 * x @ c.T + np.einsum("ij,ij->i", c, c)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x: np.ndarray, x_sq: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x_sq, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen center; take the lowest unused index
            used = set(chosen)
            idx = next(i for i in range(n) if i not in used)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x_sq, x[[idx]])[:, 0])
    return x[chosen].copy()


def _repair_empty(x, labels, centroids, d2):
    """Give each empty cluster the point farthest from its current centroid."""
    k = len(centroids)
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = d2[np.arange(len(x)), labels].copy()
        own[counts[labels] <= 1] = -1.0  # never empty another cluster
        i = int(np.argmax(own))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        centroids[j] = x[i]
        d2[:, j] = np.sum((x - x[i]) ** 2, axis=1)
    return labels


def kmeans(fs: FeatureSet | np.ndarray, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> ClusterResult:
    """Lloyd's algorithm from k-means++ seeding.

    Points go to the nearest centroid in squared Euclidean distance, ties to
    the lowest index. Iteration stops once no centroid moves more than
    ``tol`` or after ``max_iter`` rounds. Empty clusters are refilled with the
    point farthest from its own centroid.
    """
    x = fs.rows if isinstance(fs, FeatureSet) else np.asarray(fs, dtype=float)
    n = len(x)
    if not 1 <= k <= n:
        raise ConfigurationError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    x_sq = np.einsum("ij,ij->i", x, x)
    centroids = _kmeanspp(x, x_sq, k, rng)
    history = []
    iterations = 0
    labels = np.zeros(n, dtype=int)
    for iterations in range(1, max_iter + 1):
        d2 = _sq_dists(x, x_sq, centroids)
        labels = np.argmin(d2, axis=1)
        labels = _repair_empty(x, labels, centroids, d2)
        history.append(float(d2[np.arange(n), labels].sum()))
        new = np.vstack([x[labels == j].mean(axis=0) for j in range(k)])
        shift = np.sqrt(np.max(np.sum((new - centroids) ** 2, axis=1)))
        centroids = new
        if shift < tol:
            break
    # exact inertia for the final labels, without the expansion's cancellation error
    inertia = float(sum(np.sum((x[labels == j] - centroids[j]) ** 2) for j in range(k)))
    return ClusterResult(k, labels, centroids, inertia, seed, iterations, history)


def validity(fs: FeatureSet | np.ndarray, res: ClusterResult | np.ndarray) -> ValidityMetrics:
    """Between- and within-cluster dispersion with their relative shares.

    ``BC = sum_j |mean - mean_j| / (J - 1)`` and
    ``WC = sum_j (1/|X_j|) sum_i |x_ji - mean_j| / (N - J)`` with plain
    (non-squared) Euclidean distances.
    """
    x = fs.rows if isinstance(fs, FeatureSet) else np.asarray(fs, dtype=float)
    labels = res.labels if isinstance(res, ClusterResult) else np.asarray(res)
    clusters = np.unique(labels)
    n, j = len(x), len(clusters)
    if j < 2:
        raise UndefinedMetricError("validity needs at least 2 clusters")
    if n == j:
        raise UndefinedMetricError("validity needs more points than clusters (N - J = 0)")
    grand = x.mean(axis=0)
    bc = 0.0
    wc = 0.0
    for c in clusters:
        members = x[labels == c]
        centre = members.mean(axis=0)
        bc += float(np.linalg.norm(grand - centre))
        wc += float(np.linalg.norm(members - centre, axis=1).sum()) / len(members)
    bc /= j - 1
    wc /= n - j
    total = bc + wc
    if total <= 0:
        raise DegenerateMetricError("BC + WC = 0")
    return ValidityMetrics(bc, wc, bc / total, wc / total)


@dataclass(frozen=True)
class SweepRow:
    k: int
    seed: int
    lambda_bc: float
    lambda_wc: float
    inertia: float
    iterations: int


@dataclass
class SweepResult:
    kind: str
    rows: list[SweepRow]

    def medians(self) -> dict[int, dict[str, float]]:
        out = {}
        for k in sorted({r.k for r in self.rows}):
            sel = [r for r in self.rows if r.k == k]
            out[k] = {
                "lambda_bc": statistics.median(r.lambda_bc for r in sel),
                "lambda_wc": statistics.median(r.lambda_wc for r in sel),
                "inertia": statistics.median(r.inertia for r in sel),
            }
        return out

    def plateau_k(self, threshold: float = 0.01) -> int | None:
        """First k whose median lambda_WC moved less than ``threshold`` from k - 1."""
        med = self.medians()
        ks = sorted(med)
        for prev, k in zip(ks, ks[1:]):
            if abs(med[k]["lambda_wc"] - med[prev]["lambda_wc"]) < threshold:
                return k
        return None


def sweep_k(
    fs: FeatureSet, k_min: int, k_max: int, seeds: Sequence[int], threads: int = 1, max_iter: int = 300, tol: float = 1e-6
) -> SweepResult:
    n = len(fs)
    if not 2 <= k_min <= k_max <= n - 1:
        raise ConfigurationError(f"need 2 <= k_min <= k_max <= N - 1 = {n - 1}, got {k_min}..{k_max}")
    jobs = [(k, s) for k in range(k_min, k_max + 1) for s in seeds]

    def run(job):
        k, s = job
        res = kmeans(fs, k, s, max_iter=max_iter, tol=tol)
        m = validity(fs, res)
        return SweepRow(k, s, m.lambda_bc, m.lambda_wc, res.inertia, res.iterations)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    rows.sort(key=lambda r: (r.k, r.seed))
    return SweepResult(fs.kind, rows)


def adjusted_rand_index(labels, truth) -> float:
    labels = list(labels)
    truth = list(truth)
    if len(labels) != len(truth):
        raise InvalidInputError(f"length mismatch {len(labels)} vs {len(truth)}")
    if len(labels) < 2:
        raise InvalidInputError("ARI needs at least 2 items")
    _, a = np.unique(np.asarray(labels, dtype=object).astype(str), return_inverse=True)
    _, b = np.unique(np.asarray(truth, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)

    def pairs(v):
        v = np.asarray(v, dtype=float)
        return float(np.sum(v * (v - 1) / 2))

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    total = len(labels) * (len(labels) - 1) / 2
    expected = sum_a * sum_b / total
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        # both partitions trivial (all-in-one or all singletons) and identical
        return 1.0
    return (index - expected) / (maximum - expected)


# --- result files -------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_results_csv(path: str | Path, kind: str, rows: Sequence[SweepRow]) -> Path:
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in rows:
            w.writerow([kind, r.k, r.seed, _fmt(r.lambda_bc), _fmt(r.lambda_wc), _fmt(r.inertia), r.iterations])
    return Path(path)


def read_results_csv(path: str | Path) -> SweepResult:
    with open(path, newline="", encoding="utf-8") as fh:
        records = list(csv.DictReader(fh))
    rows = [
        SweepRow(int(r["k"]), int(r["seed"]), float(r["lambda_bc"]), float(r["lambda_wc"]), float(r["inertia"]), int(r["iterations"]))
        for r in records
    ]
    kinds = sorted({r["kind"] for r in records})
    return SweepResult(",".join(kinds), rows)


def write_assignments_csv(path: str | Path, ids: Sequence[str], labels: Sequence[int]) -> Path:
    """Cluster numbers are written 1-based."""
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSIGNMENTS_HEADER)
        for eid, lab in zip(ids, labels):
            w.writerow([eid, int(lab) + 1])
    return Path(path)


def read_assignments_csv(path: str | Path) -> dict[str, int]:
    """Encounter id -> 1-based cluster number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ASSIGNMENTS_HEADER:
            raise InvalidInputError(f"{path}: expected header {','.join(ASSIGNMENTS_HEADER)}")
        out = {}
        for row in reader:
            if len(row) != 2:
                raise InvalidInputError(f"{path}:{reader.line_num}: malformed row")
            out[row[0]] = int(row[1])
    return out
