"""Seeded generator of labeled two-vehicle encounters with constant-speed kinematics.

Scene geometry per kind (vehicle a drives along +x before the heading rotation;
``tm`` is mid-window):

========================  ===============================================================
car_following             b on a's line, ``gap`` m behind, both at ``speed_a``
opposite_direction        b on a parallel line ``gap`` m to the side (at most 30 m),
                          driving the other way at ``speed_b``; they pass at ``tm``
crossing                  b on the perpendicular line through the point a reaches at
                          ``tm``; b arrives there ``gap`` m behind schedule
merging                   b starts ``gap`` m to the side and 10 m behind, closes the
                          lateral offset with a cosine ramp by ``tm``, then runs
                          parallel; both at ``speed_a``
overtaking                b in the lane ``gap`` m to the side, faster (``speed_b`` >
                          ``speed_a``), drawing level with a at ``tm``
========================  ===============================================================
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geo
from ._io import atomic_open
from .errors import FormatError, InfeasibleSpecError, InvalidInputError
from .extraction import DEFAULT_MAX_DIST, DrivingEncounter
from .geo import GpsTrajectory, LocalTrajectory

KINDS = ("car_following", "opposite_direction", "crossing", "merging", "overtaking")
MAX_PASSING_OFFSET = 30.0
MERGE_TRAIL = 10.0
DEFAULT_ANCHOR = (42.28, -83.74)
DEFAULT_START_TIME = 1_335_000_000.0
SLOT_SECONDS = 100.0
LABELS_HEADER = ("encounter_id", "kind")


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    duration: float
    speed_a: float
    speed_b: float
    noise_sigma: float = 1.5
    seed: int = 0
    gap: float = 20.0
    heading: float = 0.0
    anchor: tuple[float, float] = DEFAULT_ANCHOR
    start_time: float = DEFAULT_START_TIME

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown scenario kind {self.kind!r}")
        if self.duration < 10.0:
            raise InvalidInputError(f"duration must be >= 10 s, got {self.duration}")
        if self.speed_a <= 0 or self.speed_b <= 0:
            raise InvalidInputError("speeds must be positive")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be non-negative")


# Base parameters chosen so the full jitter range stays inside the 100 m envelope.
DEFAULT_SPECS = {
    "car_following": ScenarioSpec("car_following", 15.0, 12.0, 12.0, gap=20.0),
    "opposite_direction": ScenarioSpec("opposite_direction", 10.0, 6.0, 6.0, gap=4.0),
    "crossing": ScenarioSpec("crossing", 10.0, 8.0, 8.0, gap=10.0),
    "merging": ScenarioSpec("merging", 12.0, 10.0, 10.0, gap=20.0),
    "overtaking": ScenarioSpec("overtaking", 12.0, 6.0, 13.0, gap=3.5),
}


@dataclass(frozen=True)
class Jitter:
    """Relative half-widths for speeds and gaps, absolute half-width in degrees for heading."""

    speed: float = 0.30
    gap: float = 0.50
    heading_deg: float = 10.0
    anchor_deg: float = 0.01


def scene_positions(spec: ScenarioSpec, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free positions of both vehicles in the unrotated scene frame."""
    va, vb, g = spec.speed_a, spec.speed_b, spec.gap
    tm = spec.duration / 2
    s = t - tm
    zeros = np.zeros_like(t)
    if spec.kind == "car_following":
        a = np.column_stack([va * s, zeros])
        b = np.column_stack([va * s - g, zeros])
    elif spec.kind == "opposite_direction":
        if g > MAX_PASSING_OFFSET:
            raise InfeasibleSpecError(f"opposite_direction offset {g} m exceeds {MAX_PASSING_OFFSET} m")
        a = np.column_stack([va * s, zeros])
        b = np.column_stack([-vb * s, np.full_like(t, g)])
    elif spec.kind == "crossing":
        a = np.column_stack([va * s, zeros])
        b = np.column_stack([zeros, vb * s - g])
    elif spec.kind == "merging":
        ramp = np.where(t < tm, 0.5 * (1 + np.cos(np.pi * np.clip(t / tm, 0, 1))), 0.0)
        a = np.column_stack([va * s, zeros])
        b = np.column_stack([va * s - MERGE_TRAIL, g * ramp])
    else:  # overtaking
        if vb <= va:
            raise InfeasibleSpecError("overtaking needs speed_b > speed_a")
        a = np.column_stack([va * s, zeros])
        b = np.column_stack([vb * s, np.full_like(t, g)])
    return a, b


def gen_encounter(
    spec: ScenarioSpec, encounter_id: str | None = None, max_dist: float = DEFAULT_MAX_DIST, enforce_envelope: bool = True
) -> tuple[DrivingEncounter, str]:
    """One 10 Hz encounter and its ground-truth label.

    The local frame is centred on the midpoint of the two first samples.
    Raises :class:`InfeasibleSpecError` when any inter-vehicle distance
    reaches ``max_dist`` (unless ``enforce_envelope`` is off).
    """
    rate = geo.DEFAULT_RATE_HZ
    n = int(round(spec.duration * rate)) + 1
    t_rel = np.arange(n) / rate
    a, b = scene_positions(spec, t_rel)
    theta = math.radians(spec.heading)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    a, b = a @ rot.T, b @ rot.T
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        a = a + rng.normal(0.0, spec.noise_sigma, size=a.shape)
        b = b + rng.normal(0.0, spec.noise_sigma, size=b.shape)
    origin = (a[0] + b[0]) / 2
    a, b = a - origin, b - origin
    if enforce_envelope:
        dmax = float(np.max(np.linalg.norm(a - b, axis=1)))
        if dmax >= max_dist:
            raise InfeasibleSpecError(f"{spec.kind}: vehicles reach {dmax:.1f} m apart (limit {max_dist} m)")
    eid = encounter_id or f"{spec.kind}-{spec.seed}"
    t = spec.start_time + (1.0 / rate) * np.arange(n)
    enc = DrivingEncounter(
        eid,
        LocalTrajectory(spec.anchor, a, t),
        LocalTrajectory(spec.anchor, b, t.copy()),
        (f"{eid}.a", f"{eid}.b"),
    )
    return enc, spec.kind


def jitter_spec(base: ScenarioSpec, rng: np.random.Generator, jitter: Jitter) -> ScenarioSpec:
    def rel(v, half):
        return v * (1 + rng.uniform(-half, half))

    speed_a = rel(base.speed_a, jitter.speed)
    speed_b = rel(base.speed_b, jitter.speed)
    gap = rel(base.gap, jitter.gap)
    heading = base.heading + rng.uniform(-jitter.heading_deg, jitter.heading_deg)
    anchor = (
        base.anchor[0] + rng.uniform(-jitter.anchor_deg, jitter.anchor_deg),
        base.anchor[1] + rng.uniform(-jitter.anchor_deg, jitter.anchor_deg),
    )
    noise_seed = int(rng.integers(2**63))
    return dataclasses.replace(
        base, speed_a=speed_a, speed_b=speed_b, gap=gap, heading=heading, anchor=anchor, seed=noise_seed
    )


def gen_corpus(
    per_kind: int,
    seed: int = 0,
    base_specs: dict[str, ScenarioSpec] | None = None,
    jitter: Jitter = Jitter(),
    noise_sigma: float | None = None,
    start_time: float = DEFAULT_START_TIME,
) -> tuple[list[DrivingEncounter], dict[str, str]]:
    """``per_kind`` jittered encounters of every kind, plus an id -> kind label map.

    Encounters occupy disjoint ``SLOT_SECONDS`` time slots so that a later
    pairwise re-scan of the emitted GPS logs finds each one exactly once.
    """
    if per_kind < 1:
        raise InvalidInputError("per_kind must be >= 1")
    base_specs = {**DEFAULT_SPECS, **(base_specs or {})}
    encounters, labels = [], {}
    slot = 0
    for kind_idx, kind in enumerate(KINDS):
        base = base_specs[kind]
        if noise_sigma is not None:
            base = dataclasses.replace(base, noise_sigma=noise_sigma)
        for i in range(per_kind):
            rng = np.random.default_rng([seed, kind_idx, i])
            spec = dataclasses.replace(jitter_spec(base, rng, jitter), start_time=start_time + SLOT_SECONDS * slot)
            slot += 1
            enc, label = gen_encounter(spec, encounter_id=f"{kind}-{i:04d}")
            encounters.append(enc)
            labels[enc.id] = label
    return encounters, labels


def to_gps(encounters: Sequence[DrivingEncounter]) -> list[GpsTrajectory]:
    """Raw per-vehicle GPS logs for the encounters (vehicle ids from ``source_ids``)."""
    out = []
    for enc in encounters:
        for vid, tr in zip(enc.source_ids, (enc.traj_a, enc.traj_b)):
            lat, lon = geo.local_to_latlon(tr.xy, tr.anchor)
            out.append(GpsTrajectory(vid, tr.t, lat, lon))
    return out


def write_labels_csv(path: str | Path, labels: dict[str, str]) -> Path:
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for eid, kind in labels.items():
            w.writerow([eid, kind])
    return Path(path)


def read_labels_csv(path: str | Path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != LABELS_HEADER:
            raise FormatError(f"{path}: expected header {','.join(LABELS_HEADER)}")
        return {row[0]: row[1] for row in reader if row}


def match_labels(encounters: Sequence[DrivingEncounter], labels: dict[str, str]) -> dict[str, str]:
    """Labels for encounters, matched by id or, after re-extraction, by source vehicle ids.

    Generated vehicles are named ``<id>.a`` / ``<id>.b``, so a re-scanned
    encounter between them inherits the label of ``<id>``.
    """
    out = {}
    for enc in encounters:
        if enc.id in labels:
            out[enc.id] = labels[enc.id]
            continue
        a, b = enc.source_ids
        stem = a[:-2]
        if a.endswith(".a") and b == stem + ".b" and stem in labels:
            out[enc.id] = labels[stem]
    return out
