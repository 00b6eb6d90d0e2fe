"""Pipeline configuration: YAML file values, overridden by command-line flags.

Recognised keys (all optional)::

    seed: 0                 # base seed (synth, AE init/training, single cluster runs)
    threads: 1
    out: out                # output root directory
    extract:
      max_dist: 100.0       # meters
      min_duration: 10.0    # seconds
      rate_hz: 10.0         # alignment grid
      max_gap: 1.0          # split logs at gaps longer than this (s)
    unify:                  # unified length per pipeline kind
      DTW: 100
      NED: 100
      AE: 200
      DTW_AE: 100
      NED_AE: 100
    cluster:
      k: 10
      k_min: 2
      k_max: 12
      seeds: null           # null -> seed, seed+1, ..., seed+n_seeds-1
      n_seeds: 10
      max_iter: 300
      tol: 1.0e-6
      plateau: 0.01
    ae:
      epochs: 200
      learning_rate: 0.001
      batch_size: 32
      hidden: 64
      latent: 10
    synth:
      per_kind: 40
      noise_sigma: 1.5
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "out": "out",
    "extract": {"max_dist": 100.0, "min_duration": 10.0, "rate_hz": 10.0, "max_gap": 1.0},
    "unify": {"DTW": 100, "NED": 100, "AE": 200, "DTW_AE": 100, "NED_AE": 100},
    "cluster": {"k": 10, "k_min": 2, "k_max": 12, "seeds": None, "n_seeds": 10, "max_iter": 300, "tol": 1e-6, "plateau": 0.01},
    "ae": {"epochs": 200, "learning_rate": 1e-3, "batch_size": 32, "hidden": 64, "latent": 10},
    "synth": {"per_kind": 40, "noise_sigma": 1.5},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> PipelineConfig:
        values = copy.deepcopy(DEFAULTS)
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                try:
                    loaded = yaml.safe_load(fh) or {}
                except yaml.YAMLError as exc:
                    raise ConfigurationError(f"{path}: {exc}") from None
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"{path}: top level must be a mapping")
            values = _merge(values, loaded)
        if overrides:
            values = _merge(values, overrides)
        cfg = cls(values)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def out(self) -> Path:
        return Path(self.values["out"])

    @property
    def threads(self) -> int:
        return int(self.values["threads"])

    def kbar(self, kind: str) -> int:
        return int(self.values["unify"][kind])

    def seeds(self) -> list[int]:
        c = self.values["cluster"]
        if c["seeds"] is not None:
            return [int(s) for s in c["seeds"]]
        return [self.seed + i for i in range(int(c["n_seeds"]))]

    def validate(self) -> None:
        v = self.values
        if not 0 <= int(v["seed"]) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if int(v["threads"]) < 1:
            raise ConfigurationError("threads must be >= 1")
        for key, val in v["extract"].items():
            if float(val) <= 0:
                raise ConfigurationError(f"extract.{key} must be positive")
        for key, val in v["unify"].items():
            if int(val) < 2:
                raise ConfigurationError(f"unify.{key} must be >= 2")
        c = v["cluster"]
        if not 2 <= int(c["k_min"]) <= int(c["k_max"]) or int(c["k"]) < 1:
            raise ConfigurationError("cluster k range must satisfy 2 <= k_min <= k_max and k >= 1")
        a = v["ae"]
        if int(a["epochs"]) < 1 or float(a["learning_rate"]) < 0 or int(a["batch_size"]) < 1:
            raise ConfigurationError("ae.epochs and ae.batch_size must be positive, ae.learning_rate non-negative")
