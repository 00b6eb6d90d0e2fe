"""Dense symmetric autoencoder trained with mini-batch SGD, in plain numpy.

Layer ``i`` maps ``x_{i+1} = act_i(W_i^T x_i + b_i)`` with ``W_i`` of shape
``(d_i, d_{i+1})``. The middle layer's activation is the latent code.
Reconstruction loss per sample is the squared error ``(x - x~)^T (x - x~)``;
training minimizes its batch mean.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_open
from .errors import ConfigurationError, FormatError, InvalidInputError, TrainingDivergedError

ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "linear": (lambda z: z, lambda y: np.ones_like(y)),
}


@dataclass(eq=False)
class AutoencoderModel:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    seed: int = 0
    epoch: int = 0

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def latent_dim(self) -> int:
        return self.layer_dims[len(self.layer_dims) // 2]

    @property
    def latent_layer(self) -> int:
        """Number of weight layers between the input and the latent code."""
        return len(self.layer_dims) // 2

    def copy(self) -> AutoencoderModel:
        return AutoencoderModel(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            self.seed,
            self.epoch,
        )

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate < 0 or self.seed < 0:
            raise ConfigurationError(f"invalid training configuration {self}")


@dataclass
class Gradient:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    loss: float = field(default=0.0)


def default_layer_dims(input_dim: int, hidden: int = 64, latent: int = 10) -> list[int]:
    return [input_dim, hidden, latent, hidden, input_dim]


def default_activations(n_layers: int) -> list[str]:
    return ["tanh"] * (n_layers - 1) + ["linear"]


def _check_dims(layer_dims):
    dims = [int(d) for d in layer_dims]
    if len(dims) < 3 or len(dims) % 2 == 0:
        raise ConfigurationError(f"layer_dims needs an odd length >= 3 with a single middle layer, got {dims}")
    if any(d < 1 for d in dims) or dims != dims[::-1]:
        raise ConfigurationError(f"layer_dims must be positive and symmetric, got {dims}")
    return dims


def ae_init(layer_dims: Sequence[int], seed: int = 0, activations: Sequence[str] | None = None) -> AutoencoderModel:
    """Weights i.i.d. Uniform(-1, 1), biases zero."""
    dims = _check_dims(layer_dims)
    n_layers = len(dims) - 1
    activations = list(activations) if activations is not None else default_activations(n_layers)
    if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
        raise ConfigurationError(f"need {n_layers} activations from {sorted(ACTIVATIONS)}, got {activations}")
    rng = np.random.default_rng(seed)
    weights = [rng.uniform(-1.0, 1.0, size=(dims[i], dims[i + 1])) for i in range(n_layers)]
    biases = [np.zeros(dims[i + 1]) for i in range(n_layers)]
    return AutoencoderModel(dims, weights, biases, activations, seed=seed)


def _as_batch(model: AutoencoderModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    batch = np.atleast_2d(x)
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise InvalidInputError(f"expected input of width {model.input_dim}, got shape {x.shape}")
    return batch


def _layers(model: AutoencoderModel, batch: np.ndarray) -> list[np.ndarray]:
    outs = [batch]
    for w, b, act in zip(model.weights, model.biases, model.activations):
        outs.append(ACTIVATIONS[act][0](outs[-1] @ w + b))
    return outs


def ae_forward(model: AutoencoderModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(h, x_reconstructed)``; accepts a single vector or a batch of rows."""
    single = np.ndim(x) == 1
    outs = _layers(model, _as_batch(model, x))
    h, rec = outs[model.latent_layer], outs[-1]
    return (h[0], rec[0]) if single else (h, rec)


def ae_encode(model: AutoencoderModel, x) -> np.ndarray:
    return ae_forward(model, x)[0]


def ae_loss(x, x_rec) -> float:
    x = np.asarray(x, dtype=float)
    x_rec = np.asarray(x_rec, dtype=float)
    if x.shape != x_rec.shape:
        raise InvalidInputError(f"shape mismatch {x.shape} vs {x_rec.shape}")
    d = (x - x_rec).ravel()
    return float(d @ d)


def batch_loss(model: AutoencoderModel, batch) -> float:
    """Mean per-sample reconstruction loss over the rows of ``batch``."""
    batch = _as_batch(model, batch)
    rec = _layers(model, batch)[-1]
    return float(np.sum((batch - rec) ** 2) / len(batch))


def ae_gradient(model: AutoencoderModel, batch) -> Gradient:
    """Backpropagated gradient of the mean batch loss w.r.t. every weight and bias."""
    batch = _as_batch(model, batch)
    if len(batch) == 0:
        raise InvalidInputError("empty batch")
    outs = _layers(model, batch)
    n = len(batch)
    resid = outs[-1] - batch
    loss = float(np.sum(resid * resid) / n)
    delta = 2.0 * resid / n
    gw: list[np.ndarray] = [None] * len(model.weights)
    gb: list[np.ndarray] = [None] * len(model.weights)
    for i in reversed(range(len(model.weights))):
        delta = delta * ACTIVATIONS[model.activations[i]][1](outs[i + 1])
        gw[i] = outs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = delta @ model.weights[i].T
    return Gradient(gw, gb, loss)


def ae_train(
    model: AutoencoderModel, dataset, cfg: TrainConfig, log=None
) -> tuple[AutoencoderModel, list[float]]:
    """Plain mini-batch SGD with seeded per-epoch shuffling.

    Returns a trained copy and the per-epoch mean loss (averaged over the
    batches seen during the epoch, before each update).
    """
    data = _as_batch(model, dataset)
    if len(data) == 0:
        raise InvalidInputError("empty dataset")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                g = ae_gradient(model, data[idx])
            if not math.isfinite(g.loss):
                raise TrainingDivergedError(epoch, g.loss)
            total += g.loss * len(idx)
            for w, dw in zip(model.weights, g.weights):
                w -= cfg.learning_rate * dw
            for b, db in zip(model.biases, g.biases):
                b -= cfg.learning_rate * db
        mean = total / len(data)
        if not math.isfinite(mean) or not all(np.all(np.isfinite(p)) for p in model.params()):
            raise TrainingDivergedError(epoch, mean)
        history.append(mean)
        model.epoch += 1
        if log is not None:
            log(epoch, mean)
    return model, history


# --- checkpoint ------------------------------------------------------------------

_LEN = struct.Struct("<Q")


def save_model(path: str | Path, model: AutoencoderModel) -> Path:
    """JSON header (length-prefixed) followed by float64 LE weights then biases, per layer."""
    header = {
        "format": "encluster-ae-1",
        "layer_dims": model.layer_dims,
        "activations": model.activations,
        "seed": int(model.seed),
        "epoch": int(model.epoch),
        "dtype": "<f8",
        "order": "w0,b0,w1,b1,...; weights row-major (in, out)",
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with atomic_open(path, "wb") as fh:
        fh.write(_LEN.pack(len(blob)))
        fh.write(blob)
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return Path(path)


def load_model(path: str | Path) -> AutoencoderModel:
    raw = Path(path).read_bytes()
    try:
        (n,) = _LEN.unpack_from(raw)
        header = json.loads(raw[_LEN.size : _LEN.size + n])
        dims = _check_dims(header["layer_dims"])
    except (struct.error, ValueError, KeyError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint header ({exc})") from None
    if (len(raw) - _LEN.size - n) % 8:
        raise FormatError(f"{path}: payload is not a whole number of float64 values")
    payload = np.frombuffer(raw, dtype="<f8", offset=_LEN.size + n).astype(float)
    sizes = [(dims[i] * dims[i + 1], dims[i + 1]) for i in range(len(dims) - 1)]
    if len(payload) != sum(a + b for a, b in sizes):
        raise FormatError(f"{path}: payload size does not match layer_dims {dims}")
    weights, biases, pos = [], [], 0
    for i, (nw, nb) in enumerate(sizes):
        weights.append(payload[pos : pos + nw].reshape(dims[i], dims[i + 1]).copy())
        pos += nw
        biases.append(payload[pos : pos + nb].copy())
        pos += nb
    return AutoencoderModel(dims, weights, biases, list(header["activations"]), header["seed"], header["epoch"])
