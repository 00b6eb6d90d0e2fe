"""Distance-based encounter representations and the five representation pipelines.

``DTW`` here is the full cross-distance matrix between every position of
vehicle a and every position of vehicle b (no warping-path recursion);
``NED`` is the per-step inter-vehicle distance scaled by its maximum. The
``*_AE`` kinds push a base representation through a trained autoencoder and
keep the latent code.
"""

from __future__ import annotations

import enum
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .errors import ConfigurationError, FormatError, InvalidInputError
from .extraction import UnifiedEncounter


class Kind(str, enum.Enum):
    DTW = "DTW"
    NED = "NED"
    AE = "AE"
    DTW_AE = "DTW_AE"
    NED_AE = "NED_AE"

    @property
    def uses_autoencoder(self) -> bool:
        return self in (Kind.AE, Kind.DTW_AE, Kind.NED_AE)

    @property
    def tag(self) -> int:
        return list(Kind).index(self) + 1

    @classmethod
    def from_tag(cls, tag: int) -> Kind:
        try:
            return list(cls)[tag - 1]
        except IndexError:
            raise FormatError(f"unknown kind tag {tag}") from None


@dataclass(frozen=True, eq=False)
class FeatureRep:
    encounter_id: str
    kind: Kind
    data: np.ndarray


def dtw_matrix(enc: UnifiedEncounter) -> np.ndarray:
    """``F[m, n] = |p_a[m] - p_b[n]|`` for every pair of steps, shape (kbar, kbar)."""
    diff = enc.points_a[:, None, :] - enc.points_b[None, :, :]
    return np.sqrt(np.einsum("mnd,mnd->mn", diff, diff))


def ned_vector(enc: UnifiedEncounter) -> np.ndarray:
    f = np.linalg.norm(enc.points_a - enc.points_b, axis=1)
    peak = f.max()
    if peak > 0:
        return f / peak
    return np.zeros_like(f)


def raw_pair_vector(enc: UnifiedEncounter) -> np.ndarray:
    """Rows ``[x_a, y_a, x_b, y_b]`` per step, flattened and scaled into [-1, 1].

    Coordinates are already relative to the encounter anchor; the scale is the
    largest absolute coordinate of the encounter.
    """
    rows = np.hstack([enc.points_a, enc.points_b])
    scale = np.abs(rows).max()
    if scale > 0:
        rows = rows / scale
    return rows.ravel()


def base_vector(enc: UnifiedEncounter, kind: Kind) -> np.ndarray:
    """The flat vector a kind starts from, before any autoencoder."""
    kind = Kind(kind)
    if kind in (Kind.DTW, Kind.DTW_AE):
        return dtw_matrix(enc).ravel()
    if kind in (Kind.NED, Kind.NED_AE):
        return ned_vector(enc)
    return raw_pair_vector(enc)


def feature_dim(kind: Kind, kbar: int, latent: int = 10) -> int:
    kind = Kind(kind)
    if kind.uses_autoencoder:
        return latent
    return kbar * kbar if kind is Kind.DTW else kbar


def input_dim(kind: Kind, kbar: int) -> int:
    """Autoencoder input width for a kind."""
    kind = Kind(kind)
    if kind is Kind.DTW_AE:
        return kbar * kbar
    if kind is Kind.NED_AE:
        return kbar
    if kind is Kind.AE:
        return 4 * kbar
    raise ConfigurationError(f"{kind.value} does not use an autoencoder")


def featurize(
    encs: Sequence[UnifiedEncounter], kind: Kind | str, ae_model=None, threads: int = 1
) -> list[FeatureRep]:
    """Map each encounter to its representation; order matches ``encs``."""
    kind = Kind(kind)
    if kind.uses_autoencoder and ae_model is None:
        raise ConfigurationError(f"kind {kind.value} needs a trained autoencoder")
    if not encs:
        return []
    kbars = {e.kbar for e in encs}
    if len(kbars) != 1:
        raise InvalidInputError(f"encounters have mixed lengths {sorted(kbars)}")
    if kind.uses_autoencoder and ae_model.input_dim != input_dim(kind, kbars.pop()):
        raise InvalidInputError(
            f"autoencoder expects {ae_model.input_dim} inputs, {kind.value} produces {input_dim(kind, encs[0].kbar)}"
        )

    def one(enc):
        return base_vector(enc, kind)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(one, encs))
    else:
        vectors = [one(e) for e in encs]

    if kind.uses_autoencoder:
        from .autoencoder import ae_encode

        latent = ae_encode(ae_model, np.vstack(vectors))
        vectors = list(latent)
    return [FeatureRep(e.id, kind, np.asarray(v, dtype=float)) for e, v in zip(encs, vectors)]


# --- cache file ----------------------------------------------------------------

MAGIC = b"ENCF1"
_HEADER = struct.Struct("<5sQQQ")


def write_feature_cache(path: str | Path, reps: Sequence[FeatureRep], kind: Kind | str | None = None) -> Path:
    """Binary matrix (header + little-endian float64 rows) plus ``<path>.json`` id sidecar."""
    path = Path(path)
    kind = Kind(kind if kind is not None else reps[0].kind)
    dims = {len(r.data) for r in reps}
    if len(dims) > 1:
        raise InvalidInputError(f"mixed feature dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with atomic_open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, kind.tag, len(reps), dim))
        for r in reps:
            fh.write(np.asarray(r.data, dtype="<f8").tobytes())
    sidecar = {"kind": kind.value, "encounter_ids": {str(i): r.encounter_id for i, r in enumerate(reps)}}
    with atomic_open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    return path


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_feature_cache(path: str | Path) -> tuple[Kind, list[str], np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, tag, count, dim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    kind = Kind.from_tag(tag)
    expected = _HEADER.size + 8 * count * dim
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, header implies {expected - _HEADER.size}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float).reshape(count, dim)
    with open(sidecar_path(path), encoding="utf-8") as fh:
        sidecar = json.load(fh)
    ids_map = sidecar["encounter_ids"]
    if len(ids_map) != count:
        raise FormatError(f"{path}: sidecar lists {len(ids_map)} ids for {count} rows")
    ids = [ids_map[str(i)] for i in range(count)]
    return kind, ids, data
