"""GPS trajectories, local projection, time alignment and length unification.

Positions are handled in a local east/north frame (meters) obtained by an
equirectangular projection around an anchor. At encounter scale (a few km)
this is indistinguishable from geodesic distance for clustering purposes.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_open
from .errors import FormatError, InvalidInputError, NoOverlapError

EARTH_RADIUS_M = 6_371_000.0
DEG = math.pi / 180.0
DEFAULT_RATE_HZ = 10.0
DEFAULT_MAX_GAP_S = 1.0

TRAJECTORY_CSV_HEADER = ("vehicle_id", "timestamp", "latitude", "longitude")


@dataclass(frozen=True)
class GpsSample:
    timestamp: float
    latitude: float
    longitude: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.timestamp, self.latitude, self.longitude)):
            raise InvalidInputError(f"non-finite GPS sample: {self}")
        if not -90.0 <= self.latitude <= 90.0:
            raise InvalidInputError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise InvalidInputError(f"longitude out of range: {self.longitude}")


@dataclass(frozen=True, eq=False)
class GpsTrajectory:
    """Time-ordered samples of one vehicle, stored column-wise."""

    vehicle_id: str
    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        lat = np.asarray(self.lat, dtype=float)
        lon = np.asarray(self.lon, dtype=float)
        if not (t.shape == lat.shape == lon.shape) or t.ndim != 1:
            raise InvalidInputError("timestamp/latitude/longitude columns must be 1-D and equal length")
        if len(t) < 2:
            raise InvalidInputError(f"trajectory {self.vehicle_id!r} has fewer than 2 samples")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
            raise InvalidInputError(f"trajectory {self.vehicle_id!r} contains non-finite values")
        if np.any(np.abs(lat) > 90) or np.any(np.abs(lon) > 180):
            raise InvalidInputError(f"trajectory {self.vehicle_id!r} has coordinates out of range")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError(f"trajectory {self.vehicle_id!r} timestamps not strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @classmethod
    def from_samples(cls, vehicle_id: str, samples: Iterable[GpsSample]) -> GpsTrajectory:
        samples = list(samples)
        return cls(
            vehicle_id,
            np.array([s.timestamp for s in samples]),
            np.array([s.latitude for s in samples]),
            np.array([s.longitude for s in samples]),
        )

    @property
    def samples(self) -> list[GpsSample]:
        return [GpsSample(float(a), float(b), float(c)) for a, b, c in zip(self.t, self.lat, self.lon)]

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True, eq=False)
class LocalTrajectory:
    """Positions in meters east (x) / north (y) of ``anchor`` = (lat, lon)."""

    anchor: tuple[float, float]
    xy: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        t = np.asarray(self.t, dtype=float)
        if len(xy) != len(t):
            raise InvalidInputError("point and timestamp counts differ")
        if not np.all(np.isfinite(xy)) or not np.all(np.isfinite(t)):
            raise InvalidInputError("local trajectory contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("local trajectory timestamps not strictly increasing")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "anchor", (float(self.anchor[0]), float(self.anchor[1])))

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def slice(self, start: int, stop: int) -> LocalTrajectory:
        return LocalTrajectory(self.anchor, self.xy[start:stop], self.t[start:stop])


def _check_anchor(anchor):
    lat0, lon0 = float(anchor[0]), float(anchor[1])
    if not (math.isfinite(lat0) and math.isfinite(lon0)) or not -90.0 < lat0 < 90.0:
        raise InvalidInputError(f"invalid projection anchor {anchor!r}")
    return lat0, lon0


def latlon_to_local(lat, lon, anchor) -> np.ndarray:
    """Equirectangular projection of degree arrays into an (n, 2) meter array."""
    lat0, lon0 = _check_anchor(anchor)
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise InvalidInputError("non-finite coordinates")
    x = (lon - lon0) * math.cos(lat0 * DEG) * EARTH_RADIUS_M * DEG
    y = (lat - lat0) * EARTH_RADIUS_M * DEG
    return np.column_stack([x, y])


def local_to_latlon(xy, anchor) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`latlon_to_local`; returns ``(lat, lon)`` arrays."""
    lat0, lon0 = _check_anchor(anchor)
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    lat = lat0 + xy[:, 1] / (EARTH_RADIUS_M * DEG)
    lon = lon0 + xy[:, 0] / (math.cos(lat0 * DEG) * EARTH_RADIUS_M * DEG)
    return lat, lon


def project_to_local(traj: GpsTrajectory, anchor: tuple[float, float]) -> LocalTrajectory:
    return LocalTrajectory(anchor, latlon_to_local(traj.lat, traj.lon, anchor), traj.t.copy())


def reanchor(traj: LocalTrajectory, anchor: tuple[float, float]) -> LocalTrajectory:
    """Express the same positions relative to a different anchor."""
    if tuple(anchor) == traj.anchor:
        return traj
    lat, lon = local_to_latlon(traj.xy, traj.anchor)
    return LocalTrajectory(anchor, latlon_to_local(lat, lon, anchor), traj.t)


def haversine_m(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = (np.asarray(v, dtype=float) * DEG for v in (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


def time_grid(start: float, end: float, rate_hz: float = DEFAULT_RATE_HZ) -> np.ndarray:
    """Grid ``start + i/rate`` covering ``[start, end]``.

    A tolerance of 1e-6 steps absorbs float error so that an input already on
    the grid keeps its final sample.
    """
    step = 1.0 / rate_hz
    if end < start:
        return np.empty(0)
    n = int(math.floor((end - start) / step + 1e-6)) + 1
    return start + step * np.arange(n)


def interpolate_xy(traj: LocalTrajectory, times: np.ndarray) -> np.ndarray:
    return np.column_stack([np.interp(times, traj.t, traj.xy[:, 0]), np.interp(times, traj.t, traj.xy[:, 1])])


def align_pair(
    a: LocalTrajectory, b: LocalTrajectory, rate_hz: float = DEFAULT_RATE_HZ
) -> tuple[LocalTrajectory, LocalTrajectory]:
    """Resample two trajectories onto the common grid spanning their overlap.

    The grid starts at the later of the two start times and steps at
    ``rate_hz``. ``b`` is re-expressed in ``a``'s anchor frame when the two
    anchors differ.
    """
    if b.anchor != a.anchor:
        b = reanchor(b, a.anchor)
    start = max(a.t[0], b.t[0])
    end = min(a.t[-1], b.t[-1])
    grid = time_grid(start, end, rate_hz)
    if len(grid) < 2:
        raise NoOverlapError(f"overlap [{start}, {end}] holds fewer than 2 grid points")
    return (
        LocalTrajectory(a.anchor, interpolate_xy(a, grid), grid),
        LocalTrajectory(a.anchor, interpolate_xy(b, grid), grid.copy()),
    )


def resample_uniform(traj: LocalTrajectory, target_len: int) -> LocalTrajectory:
    """Linear re-sampling to ``target_len`` points equally spaced in time.

    Both endpoints are kept exactly.
    """
    if int(target_len) != target_len or target_len < 2:
        raise InvalidInputError(f"target_len must be an integer >= 2, got {target_len!r}")
    if len(traj) < 2:
        raise InvalidInputError("cannot resample a trajectory with fewer than 2 points")
    times = np.linspace(traj.t[0], traj.t[-1], int(target_len))
    xy = interpolate_xy(traj, times)
    xy[0] = traj.xy[0]
    xy[-1] = traj.xy[-1]
    return LocalTrajectory(traj.anchor, xy, times)


def split_on_gaps(traj: GpsTrajectory, max_gap: float = DEFAULT_MAX_GAP_S) -> list[GpsTrajectory]:
    """Break a trajectory wherever consecutive samples are more than ``max_gap`` apart.

    Pieces with a single sample are dropped.
    """
    cuts = np.flatnonzero(np.diff(traj.t) > max_gap) + 1
    bounds = [0, *cuts.tolist(), len(traj)]
    pieces = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo >= 2:
            pieces.append(GpsTrajectory(traj.vehicle_id, traj.t[lo:hi], traj.lat[lo:hi], traj.lon[lo:hi]))
    return pieces


def read_trajectory_csv(path: str | Path) -> list[GpsTrajectory]:
    """Load ``vehicle_id,timestamp,latitude,longitude`` rows into trajectories.

    Rows may come in any order; each vehicle's samples are sorted by time.
    Malformed rows raise :class:`FormatError` naming the line number.
    """
    rows: dict[str, list[tuple[float, float, float]]] = defaultdict(list)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError(f"{path}: missing header")
        if tuple(h.strip() for h in header) != TRAJECTORY_CSV_HEADER:
            raise FormatError(f"{path}:1: expected header {','.join(TRAJECTORY_CSV_HEADER)}, got {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            try:
                sample = GpsSample(float(row[1]), float(row[2]), float(row[3]))
            except ValueError as exc:
                raise FormatError(f"{path}:{line}: {exc}") from None
            rows[row[0]].append((sample.timestamp, sample.latitude, sample.longitude))

    trajectories = []
    for vid in sorted(rows):
        arr = np.array(sorted(rows[vid]), dtype=float)
        if len(arr) > 1 and np.any(np.diff(arr[:, 0]) == 0):
            raise FormatError(f"{path}: vehicle {vid!r} has duplicate timestamps")
        if len(arr) < 2:
            continue
        trajectories.append(GpsTrajectory(vid, arr[:, 0], arr[:, 1], arr[:, 2]))
    return trajectories


def write_trajectory_csv(path: str | Path, trajectories: Sequence[GpsTrajectory]) -> None:
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_CSV_HEADER)
        for tr in trajectories:
            for t, la, lo in zip(tr.t, tr.lat, tr.lon):
                w.writerow([tr.vehicle_id, repr(float(t)), repr(float(la)), repr(float(lo))])
