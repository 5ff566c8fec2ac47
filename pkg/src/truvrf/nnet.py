"""Small deterministic fully connected networks on a flat parameter vector.

Parameters live in one float64 vector laid out layer by layer as
``W_0 (row-major, in x out), b_0, W_1, b_1, ...``.  Every function here
returns new :class:`Model` values; nothing mutates its inputs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInput

ACTIVATIONS = ("relu",)
INIT_SCHEMES = ("scaled_uniform",)

MODEL_MAGIC = b"TRUVRF-MODEL"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_layers: tuple[int, ...]
    num_classes: int
    activation: str = "relu"
    init_scheme: str = "scaled_uniform"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1:
            raise InvalidInput(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            raise InvalidInput(f"num_classes must be >= 2, got {self.num_classes}")
        if any(h < 1 for h in self.hidden_layers):
            raise InvalidInput(f"hidden widths must be >= 1, got {self.hidden_layers}")
        if self.activation not in ACTIVATIONS:
            raise InvalidInput(f"unsupported activation {self.activation!r}")
        if self.init_scheme not in INIT_SCHEMES:
            raise InvalidInput(f"unsupported init scheme {self.init_scheme!r}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.num_classes)

    @property
    def parameter_count(self) -> int:
        sizes = self.layer_sizes
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": list(self.hidden_layers),
            "num_classes": self.num_classes,
            "activation": self.activation,
            "init_scheme": self.init_scheme,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_layers=tuple(d.get("hidden_layers", ())),
            num_classes=int(d["num_classes"]),
            activation=d.get("activation", "relu"),
            init_scheme=d.get("init_scheme", "scaled_uniform"),
        )


def parameter_count(spec: ModelSpec) -> int:
    return spec.parameter_count


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    shuffle_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidInput(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise InvalidInput(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidInput(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "shuffle_seed": self.shuffle_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            learning_rate=float(d["learning_rate"]),
            epochs=int(d["epochs"]),
            batch_size=int(d["batch_size"]),
            shuffle_seed=int(d.get("shuffle_seed", 0)),
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Model:
    """An immutable snapshot: spec, flat parameters and training provenance."""

    spec: ModelSpec
    params: np.ndarray
    seed: int = 0
    steps: int = 0

    def __post_init__(self):
        params = _frozen(self.params).ravel()
        if params.shape[0] != self.spec.parameter_count:
            raise InvalidInput(
                f"expected {self.spec.parameter_count} parameters, got {params.shape[0]}"
            )
        if not np.all(np.isfinite(params)):
            raise InvalidInput("model parameters must be finite")
        object.__setattr__(self, "params", params)

    def same_params(self, other: "Model") -> bool:
        """Bit-exact comparison of the parameter vectors."""
        return self.spec == other.spec and self.params.tobytes() == other.params.tobytes()

    def with_params(self, params: np.ndarray, extra_steps: int = 0) -> "Model":
        return Model(self.spec, params, seed=self.seed, steps=self.steps + extra_steps)


def _unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    sizes = spec.layer_sizes
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = params[offset : offset + n_in * n_out].reshape(n_in, n_out)
        offset += n_in * n_out
        b = params[offset : offset + n_out]
        offset += n_out
        layers.append((w, b))
    return layers


def init_model(spec: ModelSpec, seed: int) -> Model:
    """Draw weights and biases from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    chunks = []
    sizes = spec.layer_sizes
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = 1.0 / math.sqrt(n_in)
        chunks.append(rng.uniform(-limit, limit, size=n_in * n_out))
        chunks.append(rng.uniform(-limit, limit, size=n_out))
    return Model(spec, np.concatenate(chunks), seed=seed, steps=0)


def _check_batch(spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        raise InvalidInput("batch must be nonempty")
    if X.shape[1] != spec.input_dim:
        raise InvalidInput(f"feature dim {X.shape[1]} does not match input_dim {spec.input_dim}")
    if y.shape != (X.shape[0],):
        raise InvalidInput("labels must be a vector with one entry per sample")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise InvalidInput("label out of range for this model")
    return X, y


def logits(model: Model, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.spec.input_dim:
        raise InvalidInput(
            f"feature dim {X.shape[1]} does not match input_dim {model.spec.input_dim}"
        )
    h = X
    layers = _unpack(model.spec, model.params)
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
    w, b = layers[-1]
    return h @ w + b


def predict(model: Model, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(logits(model, X), axis=1)


def _loss_and_grad_flat(
    spec: ModelSpec, params: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    layers = _unpack(spec, params)
    acts = [X]
    h = X
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    w_out, b_out = layers[-1]
    z = h @ w_out + b_out

    n = X.shape[0]
    z_max = z.max(axis=1, keepdims=True)
    shifted = z - z_max
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_norm
    loss = float(-log_p[np.arange(n), y].mean())

    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: list[np.ndarray] = []
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a = acts[i]
        grads.append(delta.sum(axis=0))
        grads.append((a.T @ delta).ravel())
        if i > 0:
            delta = (delta @ w.T) * (a > 0.0)
    grads.reverse()
    return loss, np.concatenate(grads)


def loss_and_grad(model: Model, X: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over a batch and its exact gradient.

    Returns
    -------
    loss : float
    grad : ndarray
        Same length and layout as ``model.params``.
    """
    X, y = _check_batch(model.spec, X, y)
    return _loss_and_grad_flat(model.spec, model.params, X, y)


def sgd_step(model: Model, grad: np.ndarray, lr: float) -> Model:
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != model.params.shape:
        raise InvalidInput("gradient length does not match the parameter vector")
    return model.with_params(model.params - lr * grad, extra_steps=1)


def epoch_permutation(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng([shuffle_seed & 0xFFFFFFFF, epoch]).permutation(n)


def train(model: Model, X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> Model:
    """Mini-batch SGD for ``cfg.epochs`` passes over ``(X, y)``.

    Each epoch visits the samples in an order drawn from
    ``(cfg.shuffle_seed, epoch)``, so identical inputs give bit-identical output.
    """
    X, y = _check_batch(model.spec, X, y)
    if cfg.epochs == 0:
        return model
    n = X.shape[0]
    params = np.array(model.params, copy=True)
    steps = 0
    for epoch in range(cfg.epochs):
        order = epoch_permutation(n, cfg.shuffle_seed, epoch)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, g = _loss_and_grad_flat(model.spec, params, X[idx], y[idx])
            params -= cfg.learning_rate * g
            steps += 1
    return model.with_params(params, extra_steps=steps)


def evaluate(model: Model, X: np.ndarray, y: np.ndarray) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        raise InvalidInput("cannot evaluate on an empty dataset")
    return float(np.mean(predict(model, X) == y))


# -- serialization ---------------------------------------------------------

_HEADER = struct.Struct("<12sIIIIBBqQQ")


def model_to_bytes(model: Model) -> bytes:
    spec = model.spec
    head = _HEADER.pack(
        MODEL_MAGIC,
        MODEL_FORMAT_VERSION,
        spec.input_dim,
        spec.num_classes,
        len(spec.hidden_layers),
        ACTIVATIONS.index(spec.activation),
        INIT_SCHEMES.index(spec.init_scheme),
        model.seed,
        model.steps,
        spec.parameter_count,
    )
    widths = struct.pack(f"<{len(spec.hidden_layers)}I", *spec.hidden_layers)
    return head + widths + model.params.astype("<f8").tobytes()


def model_from_bytes(buf: bytes) -> tuple[Model, int]:
    """Decode one model; returns it with the number of bytes consumed."""
    if len(buf) < _HEADER.size:
        raise FormatError("truncated model header")
    magic, version, input_dim, num_classes, n_hidden, act, init, seed, steps, count = (
        _HEADER.unpack_from(buf, 0)
    )
    if magic != MODEL_MAGIC:
        raise FormatError("not a TRUVRF-MODEL file")
    if version != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    pos = _HEADER.size
    if len(buf) < pos + 4 * n_hidden:
        raise FormatError("truncated hidden-layer table")
    hidden = struct.unpack_from(f"<{n_hidden}I", buf, pos)
    pos += 4 * n_hidden
    try:
        spec = ModelSpec(input_dim, hidden, num_classes, ACTIVATIONS[act], INIT_SCHEMES[init])
    except (IndexError, InvalidInput) as exc:
        raise FormatError(f"invalid model spec in header: {exc}") from exc
    if count != spec.parameter_count:
        raise FormatError("parameter count in header disagrees with the spec")
    end = pos + 8 * count
    if len(buf) < end:
        raise FormatError("truncated parameter vector")
    params = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64)
    return Model(spec, params, seed=seed, steps=steps), end


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> Model:
    buf = Path(path).read_bytes()
    model, used = model_from_bytes(buf)
    if used != len(buf):
        raise FormatError("trailing bytes after parameter vector")
    return model

