"""Detection of two-vehicle driving encounters and the encounter archive format."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geo
from ._io import atomic_open, file_digest
from .errors import ConsistencyError, FormatError, InvalidInputError, NoOverlapError
from .geo import GpsTrajectory, LocalTrajectory

DEFAULT_MAX_DIST = 100.0
DEFAULT_MIN_DURATION = 10.0
# absorbs float error in grid timestamps far from the epoch
DURATION_TOL = 1e-6

ARCHIVE_CSV = "encounters.csv"
ARCHIVE_MANIFEST = "manifest.json"
ARCHIVE_HEADER = ("encounter_id", "vehicle", "step", "t", "x", "y")


@dataclass(frozen=True, eq=False)
class DrivingEncounter:
    id: str
    traj_a: LocalTrajectory
    traj_b: LocalTrajectory
    source_ids: tuple[str, str]

    def __post_init__(self):
        a, b = self.traj_a, self.traj_b
        if len(a) != len(b) or len(a) < 2:
            raise InvalidInputError(f"encounter {self.id!r}: trajectories must have equal length >= 2")
        if not np.array_equal(a.t, b.t):
            raise InvalidInputError(f"encounter {self.id!r}: timestamp grids differ")
        if a.anchor != b.anchor:
            raise InvalidInputError(f"encounter {self.id!r}: trajectories use different anchors")

    @property
    def duration(self) -> float:
        return self.traj_a.duration

    @property
    def anchor(self) -> tuple[float, float]:
        return self.traj_a.anchor

    @property
    def t(self) -> np.ndarray:
        return self.traj_a.t

    def __len__(self):
        return len(self.traj_a)

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.traj_a.xy - self.traj_b.xy, axis=1)


@dataclass(frozen=True, eq=False)
class UnifiedEncounter:
    """An encounter re-sampled to ``kbar`` points per vehicle."""

    id: str
    points_a: np.ndarray
    points_b: np.ndarray

    def __post_init__(self):
        pa = np.asarray(self.points_a, dtype=float)
        pb = np.asarray(self.points_b, dtype=float)
        if pa.shape != pb.shape or pa.ndim != 2 or pa.shape[1] != 2:
            raise InvalidInputError(f"encounter {self.id!r}: point arrays must both be (kbar, 2)")
        object.__setattr__(self, "points_a", pa)
        object.__setattr__(self, "points_b", pb)

    @property
    def kbar(self) -> int:
        return len(self.points_a)


def unify_encounter(enc: DrivingEncounter, kbar: int) -> UnifiedEncounter:
    a = geo.resample_uniform(enc.traj_a, kbar)
    b = geo.resample_uniform(enc.traj_b, kbar)
    return UnifiedEncounter(enc.id, a.xy, b.xy)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of maximal True runs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[0::2].tolist(), edges[1::2].tolist()))


def _bbox(tr: GpsTrajectory):
    return tr.lat.min(), tr.lat.max(), tr.lon.min(), tr.lon.max()


def _may_meet(a: GpsTrajectory, b: GpsTrajectory, max_dist: float) -> bool:
    """Conservative prefilter: time spans overlap and distance-expanded boxes intersect."""
    if min(a.t[-1], b.t[-1]) < max(a.t[0], b.t[0]):
        return False
    la0, la1, lo0, lo1 = _bbox(a)
    lb0, lb1, mo0, mo1 = _bbox(b)
    # 1% slack over the projection's meters-per-degree
    dlat = 1.01 * max_dist / (geo.EARTH_RADIUS_M * geo.DEG)
    worst_cos = math.cos(min(89.9, max(abs(la0), abs(la1), abs(lb0), abs(lb1))) * geo.DEG)
    dlon = dlat / worst_cos
    return not (la1 + dlat < lb0 or lb1 + dlat < la0 or lo1 + dlon < mo0 or mo1 + dlon < lo0)


def _segment_encounters(
    a: LocalTrajectory,
    b: LocalTrajectory,
    max_dist: float,
    min_duration: float,
    reanchor: bool,
) -> list[tuple[LocalTrajectory, LocalTrajectory]]:
    dist = np.linalg.norm(a.xy - b.xy, axis=1)
    out = []
    for lo, hi in _runs(dist < max_dist):
        if hi - lo < 2 or a.t[hi - 1] - a.t[lo] < min_duration - DURATION_TOL:
            continue
        sa, sb = a.slice(lo, hi), b.slice(lo, hi)
        if reanchor:
            anchor = _midpoint_anchor(sa, sb)
            if anchor != sa.anchor:
                sa, sb = geo.reanchor(sa, anchor), geo.reanchor(sb, anchor)
                # re-check in the new frame; projection differences can move points
                # sitting right at the threshold
                out.extend(_segment_encounters(sa, sb, max_dist, min_duration, reanchor=False))
                continue
        out.append((sa, sb))
    return out


def _midpoint_anchor(a: LocalTrajectory, b: LocalTrajectory) -> tuple[float, float]:
    lat, lon = geo.local_to_latlon((a.xy[0] + b.xy[0]) / 2, a.anchor)
    return float(lat[0]), float(lon[0])


def _scan_pair(
    ta: GpsTrajectory, tb: GpsTrajectory, max_dist: float, min_duration: float, rate_hz: float
) -> list[tuple[LocalTrajectory, LocalTrajectory]]:
    start = max(ta.t[0], tb.t[0])
    i = min(np.searchsorted(ta.t, start), len(ta) - 1)
    j = min(np.searchsorted(tb.t, start), len(tb) - 1)
    anchor = ((ta.lat[i] + tb.lat[j]) / 2, (ta.lon[i] + tb.lon[j]) / 2)
    try:
        a, b = geo.align_pair(geo.project_to_local(ta, anchor), geo.project_to_local(tb, anchor), rate_hz)
    except NoOverlapError:
        return []
    return _segment_encounters(a, b, max_dist, min_duration, reanchor=True)


def find_encounters(
    corpus: Sequence[GpsTrajectory],
    max_dist: float = DEFAULT_MAX_DIST,
    min_duration: float = DEFAULT_MIN_DURATION,
    rate_hz: float = geo.DEFAULT_RATE_HZ,
    max_gap: float = geo.DEFAULT_MAX_GAP_S,
    threads: int = 1,
    prefilter: bool = True,
) -> list[DrivingEncounter]:
    """Scan every vehicle pair for proximity episodes.

    Each vehicle's log is first split at gaps longer than ``max_gap``. For each
    pair of pieces from two different vehicles, both are aligned on a shared
    ``rate_hz`` grid and every maximal run of grid points with distance below
    ``max_dist`` lasting at least ``min_duration`` becomes an encounter,
    re-anchored at the midpoint of its first aligned samples.

    ``prefilter`` skips pairs whose distance-expanded bounding boxes cannot
    intersect; the result is identical to the exhaustive scan.
    """
    if max_dist <= 0 or min_duration <= 0:
        raise InvalidInputError("max_dist and min_duration must be positive")
    by_vehicle: dict[str, list[GpsTrajectory]] = {}
    for tr in corpus:
        by_vehicle.setdefault(str(tr.vehicle_id), []).extend(geo.split_on_gaps(tr, max_gap))

    tasks = []
    for va, vb in combinations(sorted(by_vehicle), 2):
        for pa in by_vehicle[va]:
            for pb in by_vehicle[vb]:
                if prefilter and not _may_meet(pa, pb, max_dist):
                    continue
                tasks.append((va, vb, pa, pb))

    def run(task):
        va, vb, pa, pb = task
        return [(va, vb, sa, sb) for sa, sb in _scan_pair(pa, pb, max_dist, min_duration, rate_hz)]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            found = [seg for segs in pool.map(run, tasks) for seg in segs]
    else:
        found = [seg for task in tasks for seg in run(task)]

    found.sort(key=lambda s: (s[0], s[1], s[2].t[0]))
    encounters = []
    counter: dict[tuple[str, str], int] = {}
    for va, vb, sa, sb in found:
        n = counter.get((va, vb), 0)
        counter[(va, vb)] = n + 1
        encounters.append(DrivingEncounter(f"{va}|{vb}|{n:03d}", sa, sb, (va, vb)))
    return encounters


def is_encounter(enc: DrivingEncounter, max_dist: float = DEFAULT_MAX_DIST, min_duration: float = DEFAULT_MIN_DURATION) -> bool:
    """The extraction predicate, re-evaluated on an existing encounter."""
    return bool(np.all(enc.distances() < max_dist)) and enc.duration >= min_duration - DURATION_TOL


# --- archive -------------------------------------------------------------------


def write_archive(directory: str | Path, encounters: Sequence[DrivingEncounter]) -> Path:
    """Write ``encounters.csv`` plus ``manifest.json`` into ``directory``."""
    directory = Path(directory)
    with atomic_open(directory / ARCHIVE_CSV, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ARCHIVE_HEADER)
        for enc in encounters:
            for tag, tr in (("a", enc.traj_a), ("b", enc.traj_b)):
                for step, (t, (x, y)) in enumerate(zip(tr.t, tr.xy)):
                    w.writerow([enc.id, tag, step, repr(float(t)), repr(float(x)), repr(float(y))])
    manifest = {
        "encounters": [
            {
                "id": enc.id,
                "duration": enc.duration,
                "source_ids": list(enc.source_ids),
                "anchor": list(enc.anchor),
                "length": len(enc),
            }
            for enc in encounters
        ]
    }
    with atomic_open(directory / ARCHIVE_MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return directory


def read_archive(directory: str | Path) -> list[DrivingEncounter]:
    directory = Path(directory)
    with open(directory / ARCHIVE_MANIFEST, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{directory / ARCHIVE_MANIFEST}: {exc}") from None

    rows: dict[str, dict[str, list]] = {}
    path = directory / ARCHIVE_CSV
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ARCHIVE_HEADER:
            raise FormatError(f"{path}:1: expected header {','.join(ARCHIVE_HEADER)}")
        for row in reader:
            if len(row) != 6 or row[1] not in ("a", "b"):
                raise FormatError(f"{path}:{reader.line_num}: malformed row")
            try:
                rec = (int(row[2]), float(row[3]), float(row[4]), float(row[5]))
            except ValueError as exc:
                raise FormatError(f"{path}:{reader.line_num}: {exc}") from None
            rows.setdefault(row[0], {"a": [], "b": []})[row[1]].append(rec)

    encounters = []
    for item in manifest["encounters"]:
        eid = item["id"]
        if eid not in rows:
            raise ConsistencyError(f"manifest lists {eid!r} but {ARCHIVE_CSV} has no rows for it")
        anchor = tuple(item["anchor"])
        trajs = []
        for tag in ("a", "b"):
            arr = np.array(sorted(rows[eid][tag]), dtype=float)
            if len(arr) == 0:
                raise ConsistencyError(f"encounter {eid!r} missing vehicle {tag}")
            trajs.append(LocalTrajectory(anchor, arr[:, 2:4], arr[:, 1]))
        encounters.append(DrivingEncounter(eid, trajs[0], trajs[1], tuple(item["source_ids"])))
    extra = set(rows) - {item["id"] for item in manifest["encounters"]}
    if extra:
        raise ConsistencyError(f"{ARCHIVE_CSV} has encounters not in manifest: {sorted(extra)[:3]}")
    return encounters


def archive_digest(directory: str | Path) -> str:
    directory = Path(directory)
    return file_digest(directory / ARCHIVE_CSV, directory / ARCHIVE_MANIFEST)
