"""Static exports of clustered encounters: GeoJSON per cluster, an SVG panel grid, flat CSV."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import geo
from ._io import atomic_open
from .errors import ConsistencyError, InvalidInputError
from .extraction import DrivingEncounter

FORMATS = ("geojson", "svg", "csv")
VEHICLE_COLORS = {"a": "#1f5fbf", "b": "#c8312b"}


def _group(encounters: Sequence[DrivingEncounter], assignments: Mapping[str, int]) -> dict[int, list[DrivingEncounter]]:
    ids = {e.id for e in encounters}
    missing = sorted(set(assignments) - ids)
    unassigned = sorted(ids - set(assignments))
    if missing or unassigned:
        raise ConsistencyError(
            f"assignments/archive mismatch: {len(missing)} unknown ids {missing[:3]}, "
            f"{len(unassigned)} unassigned encounters {unassigned[:3]}"
        )
    groups: dict[int, list[DrivingEncounter]] = {}
    for enc in encounters:
        groups.setdefault(int(assignments[enc.id]), []).append(enc)
    return dict(sorted(groups.items()))


def cluster_feature_collection(cluster: int, encounters: Sequence[DrivingEncounter]) -> dict:
    features = []
    for enc in encounters:
        for tag, src, tr in (("a", enc.source_ids[0], enc.traj_a), ("b", enc.source_ids[1], enc.traj_b)):
            lat, lon = geo.local_to_latlon(tr.xy, tr.anchor)
            features.append(
                {
                    "type": "Feature",
                    "geometry": {
                        "type": "LineString",
                        "coordinates": [[float(x), float(y)] for x, y in zip(lon, lat)],
                    },
                    "properties": {
                        "encounter_id": enc.id,
                        "cluster": cluster,
                        "vehicle": tag,
                        "source_id": src,
                        "start_time": float(tr.t[0]),
                        "end_time": float(tr.t[-1]),
                    },
                }
            )
    return {"type": "FeatureCollection", "features": features}


def export_geojson(out_dir, encounters, assignments) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for cluster, group in _group(encounters, assignments).items():
        path = out_dir / f"cluster_{cluster:02d}.geojson"
        with atomic_open(path, "w", encoding="utf-8") as fh:
            json.dump(cluster_feature_collection(cluster, group), fh)
            fh.write("\n")
        paths.append(path)
    return paths


def render_svg(groups: Mapping[int, Sequence[DrivingEncounter]], panel: int = 240, margin: int = 16) -> str:
    """Grid of per-cluster panels; dots mark starts, crosses mark ends.

    Every encounter is drawn in its own local frame, so the panels show
    relative geometry rather than map position.
    """
    n = len(groups)
    cols = max(1, math.ceil(math.sqrt(n)))
    rows = max(1, math.ceil(n / cols))
    title_h = 18
    width, height = cols * panel, rows * (panel + title_h)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for idx, (cluster, encs) in enumerate(groups.items()):
        ox = (idx % cols) * panel
        oy = (idx // cols) * (panel + title_h)
        extent = max((float(np.abs(np.vstack([e.traj_a.xy, e.traj_b.xy])).max()) for e in encs), default=1.0) or 1.0
        scale = (panel / 2 - margin) / extent
        cx, cy = ox + panel / 2, oy + title_h + panel / 2
        out.append(f'<g id="cluster-{cluster}">')
        out.append(f'<rect x="{ox + 1}" y="{oy + title_h}" width="{panel - 2}" height="{panel - 2}" fill="none" stroke="#999"/>')
        out.append(f'<text x="{ox + 6}" y="{oy + 13}" font-family="sans-serif" font-size="12">cluster #{cluster} (n={len(encs)})</text>')
        for enc in encs:
            for tag, tr in (("a", enc.traj_a), ("b", enc.traj_b)):
                px = cx + tr.xy[:, 0] * scale
                py = cy - tr.xy[:, 1] * scale
                pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py))
                color = VEHICLE_COLORS[tag]
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="0.8" stroke-opacity="0.6"/>')
                out.append(f'<circle cx="{px[0]:.2f}" cy="{py[0]:.2f}" r="2" fill="{color}"/>')
                ex, ey = px[-1], py[-1]
                out.append(
                    f'<path d="M{ex - 2.5:.2f},{ey - 2.5:.2f}L{ex + 2.5:.2f},{ey + 2.5:.2f}'
                    f'M{ex - 2.5:.2f},{ey + 2.5:.2f}L{ex + 2.5:.2f},{ey - 2.5:.2f}" stroke="{color}" stroke-width="1"/>'
                )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_svg(out_dir, encounters, assignments) -> list[Path]:
    path = Path(out_dir) / "clusters.svg"
    with atomic_open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(_group(encounters, assignments)))
    return [path]


def export_csv(out_dir, encounters, assignments) -> list[Path]:
    path = Path(out_dir) / "clusters.csv"
    groups = _group(encounters, assignments)
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["encounter_id", "cluster", "vehicle", "step", "t", "x", "y", "latitude", "longitude"])
        for cluster, encs in groups.items():
            for enc in encs:
                for tag, tr in (("a", enc.traj_a), ("b", enc.traj_b)):
                    lat, lon = geo.local_to_latlon(tr.xy, tr.anchor)
                    for step in range(len(tr)):
                        w.writerow([enc.id, cluster, tag, step, *(repr(float(v)) for v in (tr.t[step], *tr.xy[step], lat[step], lon[step]))])
    return [path]


def export(fmt: str, out_dir, encounters, assignments) -> list[Path]:
    writers = {"geojson": export_geojson, "svg": export_svg, "csv": export_csv}
    if fmt not in writers:
        raise InvalidInputError(f"unknown export format {fmt!r}; choose from {FORMATS}")
    return writers[fmt](out_dir, encounters, assignments)
