"""Fully-connected softmax classifier trained by per-example backpropagation.

Three presets stand in for the frameworks being compared:

============  ===================================  ==========  =======  ======
preset        hidden layers                        activation  L2       lr
============  ===================================  ==========  =======  ======
mlp           [n_in]                               sigmoid     0        0.01
ffnn          [n_in, ceil(n_in / 2)]               sigmoid     0        0.01
dnn           [64, 32, 16]                         relu        1e-4     0.005
============  ===================================  ==========  =======  ======

The loss is mean softmax cross-entropy plus ``(l2/2) * sum(W**2)`` over
weight matrices (biases are not penalized).  One training iteration is one
single-example gradient step; examples are visited in seeded, shuffled
epochs.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CorruptModel,
    DimensionMismatch,
    InvalidConfig,
    NonFiniteGradient,
    SchemaMismatch,
    VersionMismatch,
)
from .features import FeatureDataset
from .sensors import N_CLASSES, AdlLabel

MODEL_FORMAT = "adlfusion-model"
MODEL_VERSION = 1
STANDARD_BUDGETS = (1_000_000, 2_000_000, 4_000_000)


class Preset(Enum):
    MLP_BACKPROP = "mlp"
    FEEDFORWARD_BACKPROP = "ffnn"
    DEEP_LEARNING = "dnn"

    @property
    def title(self) -> str:
        return _PRESET_TITLES[self]

    @classmethod
    def parse(cls, text: str) -> "Preset":
        key = text.strip().lower()
        for p in cls:
            if key in (p.value, p.name.lower()):
                return p
        raise ValueError(f"unknown preset {text!r}; expected one of mlp, ffnn, dnn")


_PRESET_TITLES = {
    Preset.MLP_BACKPROP: "MLP BACKPROP",
    Preset.FEEDFORWARD_BACKPROP: "FEEDFORWARD BACKPROP",
    Preset.DEEP_LEARNING: "DEEP LEARNING",
}


class Activation(Enum):
    SIGMOID = "sigmoid"
    RELU = "relu"


@dataclass(frozen=True)
class NetworkConfig:
    preset: Preset
    input_dim: int
    hidden_layers: tuple[int, ...]
    hidden_activation: Activation
    l2_lambda: float
    learning_rate: float
    seed: int = 0
    max_iterations: int = STANDARD_BUDGETS[0]
    output_dim: int = N_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_layers):
            raise InvalidConfig("layer sizes must be >= 1")
        if self.output_dim != N_CLASSES:
            raise InvalidConfig(f"output_dim must be {N_CLASSES}")
        if not (math.isfinite(self.l2_lambda) and self.l2_lambda >= 0):
            raise InvalidConfig("l2_lambda must be finite and >= 0")
        if self.preset is Preset.DEEP_LEARNING:
            if self.l2_lambda <= 0:
                raise InvalidConfig("the dnn preset requires l2_lambda > 0")
        elif self.l2_lambda != 0:
            raise InvalidConfig(f"the {self.preset.value} preset requires l2_lambda == 0")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidConfig("learning_rate must be > 0")
        if not (0 <= self.seed < 2**64):
            raise InvalidConfig("seed must be a non-negative 64-bit integer")
        if self.max_iterations < 0:
            raise InvalidConfig("max_iterations must be >= 0")

    @classmethod
    def for_preset(cls, preset: Preset | str, input_dim: int, seed: int = 0, **overrides) -> "NetworkConfig":
        preset = Preset.parse(preset) if isinstance(preset, str) else preset
        if preset is Preset.MLP_BACKPROP:
            base = dict(hidden_layers=(input_dim,), hidden_activation=Activation.SIGMOID,
                        l2_lambda=0.0, learning_rate=0.01)
        elif preset is Preset.FEEDFORWARD_BACKPROP:
            base = dict(hidden_layers=(input_dim, -(-input_dim // 2)), hidden_activation=Activation.SIGMOID,
                        l2_lambda=0.0, learning_rate=0.01)
        else:
            base = dict(hidden_layers=(64, 32, 16), hidden_activation=Activation.RELU,
                        l2_lambda=1e-4, learning_rate=0.005)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(preset=preset, input_dim=input_dim, seed=seed, **base)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_layers, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset.value,
            "input_dim": self.input_dim,
            "hidden_layers": list(self.hidden_layers),
            "hidden_activation": self.hidden_activation.value,
            "output_dim": self.output_dim,
            "l2_lambda": self.l2_lambda,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            preset=Preset(d["preset"]),
            input_dim=int(d["input_dim"]),
            hidden_layers=tuple(d["hidden_layers"]),
            hidden_activation=Activation(d["hidden_activation"]),
            l2_lambda=float(d["l2_lambda"]),
            learning_rate=float(d["learning_rate"]),
            seed=int(d["seed"]),
            max_iterations=int(d["max_iterations"]),
            output_dim=int(d["output_dim"]),
        )


@dataclass(frozen=True, eq=False)
class Network:
    """Weights are stored (out, in); ``weights[i] @ a + biases[i]`` feeds layer i+1."""

    config: NetworkConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    trained_iterations: int = 0

    def __post_init__(self):
        ws = tuple(_readonly(w) for w in self.weights)
        bs = tuple(_readonly(b) for b in self.biases)
        sizes = self.config.layer_sizes
        if len(ws) != len(sizes) - 1 or len(bs) != len(ws):
            raise InvalidConfig("layer count does not match config")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.shape != (sizes[i + 1], sizes[i]) or b.shape != (sizes[i + 1],):
                raise InvalidConfig(f"layer {i} has shapes {w.shape}, {b.shape}")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.config == other.config
            and self.trained_iterations == other.trained_iterations
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    __hash__ = None

    def weight_norm_sq(self) -> float:
        return float(sum(np.sum(w * w) for w in self.weights))


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass
class TrainingHistory:
    iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    final_loss: float = math.nan
    wall_time_s: float = field(default=0.0, compare=False)


# ---------------------------------------------------------------------------
# Core math
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def _forward(weights, biases, relu: bool, X: np.ndarray):
    """Return (activations, output logits); activations[0] is X itself."""
    acts = [X]
    a = X
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        if i == last:
            return acts, z
        a = np.maximum(z, 0.0) if relu else _sigmoid(z)
        acts.append(a)
    raise AssertionError("unreachable")


def _gradients(weights, biases, relu: bool, lam: float, X: np.ndarray, y: np.ndarray):
    """Gradients of the full (penalized) loss for a batch, plus the loss."""
    acts, logits = _forward(weights, biases, relu, X)
    logp = _log_softmax(logits)
    n = len(y)
    rows = np.arange(n)
    ce = -float(logp[rows, y].sum()) / n
    delta = np.exp(logp)
    delta[rows, y] -= 1.0
    delta /= n
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        a = acts[i]
        gw[i] = delta.T @ a + lam * weights[i]
        gb[i] = delta.sum(axis=0)
        if i:
            back = delta @ weights[i]
            delta = back * (a > 0) if relu else back * a * (1.0 - a)
    penalty = 0.5 * lam * sum(float(np.sum(w * w)) for w in weights) if lam else 0.0
    return gw, gb, ce + penalty


def _batch(net: Network, X, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[-1] != net.config.input_dim:
        raise DimensionMismatch(f"expected {net.config.input_dim} inputs, got {X.shape[-1]}")
    if y is None:
        return X
    if isinstance(y, AdlLabel):
        y = [y.code]
    y = np.asarray([c.code if isinstance(c, AdlLabel) else c for c in np.atleast_1d(y)], dtype=np.int64)
    if len(y) != len(X):
        raise DimensionMismatch(f"{len(X)} inputs but {len(y)} labels")
    if len(y) == 0:
        raise DimensionMismatch("batch is empty")
    return X, y


def _relu(net: Network) -> bool:
    return net.config.hidden_activation is Activation.RELU


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------

def init_network(cfg: NetworkConfig) -> Network:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng([cfg.seed, 0])
    sizes = cfg.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(cfg, tuple(weights), tuple(biases))


def forward(net: Network, x) -> tuple[list[np.ndarray], np.ndarray]:
    """Hidden activations of every layer and the softmax output.

    Accepts a single vector or a (batch, input_dim) array.
    """
    x = np.asarray(x, dtype=np.float64)
    X = _batch(net, x)
    if not np.all(np.isfinite(X)):
        raise DimensionMismatch("input contains non-finite values")
    acts, logits = _forward(net.weights, net.biases, _relu(net), X)
    probs = np.exp(_log_softmax(logits))
    hidden = acts[1:]
    if x.ndim == 1:
        return [h[0] for h in hidden], probs[0]
    return hidden, probs


def loss(net: Network, X, y) -> float:
    X, y = _batch(net, X, y)
    _, logits = _forward(net.weights, net.biases, _relu(net), X)
    logp = _log_softmax(logits)
    ce = -float(logp[np.arange(len(y)), y].sum()) / len(y)
    lam = net.config.l2_lambda
    return ce + (0.5 * lam * net.weight_norm_sq() if lam else 0.0)


def gradients(net: Network, X, y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradients of :func:`loss` w.r.t. weights and biases."""
    X, y = _batch(net, X, y)
    gw, gb, _ = _gradients(net.weights, net.biases, _relu(net), net.config.l2_lambda, X, y)
    return gw, gb


def _all_finite(arrays) -> bool:
    return math.isfinite(sum(float(a.sum()) for a in arrays))


def backprop_step(net: Network, X, y, learning_rate: float | None = None) -> tuple[Network, float]:
    """One gradient-descent update on a batch; returns the new net and the pre-step batch loss."""
    X, y = _batch(net, X, y)
    lr = net.config.learning_rate if learning_rate is None else learning_rate
    with np.errstate(over="ignore", invalid="ignore"):
        gw, gb, batch_loss = _gradients(net.weights, net.biases, _relu(net), net.config.l2_lambda, X, y)
    if not (math.isfinite(batch_loss) and _all_finite(gw) and _all_finite(gb)):
        raise NonFiniteGradient(network=net)
    weights = tuple(w - lr * g for w, g in zip(net.weights, gw))
    biases = tuple(b - lr * g for b, g in zip(net.biases, gb))
    return replace(net, weights=weights, biases=biases), batch_loss


def train(net: Network, train_set: FeatureDataset, budget: int | None = None) -> tuple[Network, TrainingHistory]:
    """Run ``budget`` single-example updates (default: ``config.max_iterations``).

    Training loss over the whole set is sampled every ``budget // 100``
    iterations.  Raises :class:`NonFiniteGradient` carrying the partial
    history when an update blows up.
    """
    cfg = net.config
    budget = cfg.max_iterations if budget is None else int(budget)
    if budget < 0:
        raise InvalidConfig("budget must be >= 0")
    if train_set.X.shape[1] != cfg.input_dim:
        raise SchemaMismatch(f"dataset has {train_set.X.shape[1]} columns, network expects {cfg.input_dim}")
    if budget and len(train_set) == 0:
        raise SchemaMismatch("cannot train on an empty dataset")

    start = time.perf_counter()
    history = TrainingHistory()
    if budget == 0:
        history.final_loss = loss(net, train_set.X, train_set.y) if len(train_set) else math.nan
        history.wall_time_s = time.perf_counter() - start
        return net, history

    X, y = train_set.X, train_set.y
    n = len(y)
    relu = _relu(net)
    lam, lr = cfg.l2_lambda, cfg.learning_rate
    ws = [w.copy() for w in net.weights]
    bs = [b.copy() for b in net.biases]
    rng = np.random.default_rng([cfg.seed, 1])
    every = max(1, budget // 100)
    order = rng.permutation(n)
    pos = 0

    def snapshot(done: int) -> Network:
        return Network(cfg, tuple(ws), tuple(bs), net.trained_iterations + done)

    for it in range(1, budget + 1):
        if pos == n:
            order = rng.permutation(n)
            pos = 0
        k = order[pos]
        pos += 1
        with np.errstate(over="ignore", invalid="ignore"):
            gw, gb, step_loss = _gradients(ws, bs, relu, lam, X[k : k + 1], y[k : k + 1])
        if not (math.isfinite(step_loss) and _all_finite(gw) and _all_finite(gb)):
            history.wall_time_s = time.perf_counter() - start
            raise NonFiniteGradient(
                f"non-finite gradient at iteration {it}",
                iteration=it,
                history=history,
                network=snapshot(it - 1),
            )
        for i in range(len(ws)):
            ws[i] -= lr * gw[i]
            bs[i] -= lr * gb[i]
        if it % every == 0 or it == budget:
            trained = snapshot(it)
            with np.errstate(over="ignore", invalid="ignore"):
                current = loss(trained, X, y)
            if not math.isfinite(current):
                history.wall_time_s = time.perf_counter() - start
                raise NonFiniteGradient(
                    f"training loss became non-finite at iteration {it}",
                    iteration=it, history=history, network=trained,
                )
            history.iterations.append(it)
            history.losses.append(current)

    history.final_loss = history.losses[-1]
    history.wall_time_s = time.perf_counter() - start
    return snapshot(budget), history


def predict(net: Network, features) -> tuple[AdlLabel, np.ndarray]:
    """Argmax label (ties go to the lowest class code) and the class probabilities."""
    _, probs = forward(net, np.asarray(features, dtype=np.float64).reshape(-1))
    return AdlLabel(int(np.argmax(probs))), probs


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def model_to_dict(net: Network) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": net.config.to_dict(),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "trained_iterations": net.trained_iterations,
    }


def model_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise CorruptModel("not an adlfusion model document")
    version = doc.get("version")
    if not isinstance(version, int):
        raise CorruptModel("missing format version")
    if version > MODEL_VERSION:
        raise VersionMismatch(f"model format version {version} is newer than supported {MODEL_VERSION}")
    if version < 1:
        raise VersionMismatch(f"unsupported model format version {version}")
    try:
        cfg = NetworkConfig.from_dict(doc["config"])
        return Network(
            cfg,
            tuple(np.array(w, dtype=np.float64) for w in doc["weights"]),
            tuple(np.array(b, dtype=np.float64) for b in doc["biases"]),
            int(doc["trained_iterations"]),
        )
    except (KeyError, TypeError, ValueError, InvalidConfig) as exc:
        raise CorruptModel(f"invalid model document: {exc}") from None


def dumps_model(net: Network, extra: dict | None = None) -> str:
    doc = model_to_dict(net)
    if extra:
        doc.update(extra)
    return json.dumps(doc)


def loads_model(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)


def save_model(net: Network, path: str | Path, extra: dict | None = None) -> None:
    Path(path).write_text(dumps_model(net, extra), encoding="utf-8")


def load_model(path: str | Path) -> Network:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def predict_labels(net: Network, X: np.ndarray | Sequence) -> np.ndarray:
    """Row-by-row :func:`predict` over a matrix, returning label codes."""
    return np.array([predict(net, row)[0].code for row in np.asarray(X, dtype=np.float64)], dtype=np.int64)
