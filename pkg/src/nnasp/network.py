"""Feed-forward networks: init, forward pass, squared-error training, activation capture, JSON I/O.

Weights follow the usual convention ``W[i, j]`` = weight from node ``j`` of the
previous layer into node ``i`` of this layer, so a layer computes
``f(W @ a_prev + b)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import Dataset

ACTIVATIONS = ("tanh", "relu", "elu", "sigmoid", "identity")


class NetworkError(ValueError):
    """Invalid architecture, arity mismatch or malformed model file."""


class DivergenceError(ArithmeticError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "elu":
        return np.where(z > 0, z, np.expm1(np.minimum(z, 0.0)))
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "identity":
        return z
    raise NetworkError(f"unknown activation {kind!r}; valid names: {', '.join(ACTIVATIONS)}")


def activate_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Derivative f'(z), given pre-activation ``z`` and ``a = f(z)``."""
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "elu":
        return np.where(z > 0, 1.0, a + 1.0)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "identity":
        return np.ones_like(z)
    raise NetworkError(f"unknown activation {kind!r}; valid names: {', '.join(ACTIVATIONS)}")


@dataclass(frozen=True)
class LayerSpec:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        W = np.array(self.weights, dtype=float)
        b = np.array(self.biases, dtype=float)
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise NetworkError(f"inconsistent layer shapes: weights {W.shape}, biases {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NetworkError("layer parameters must be finite")
        if self.activation not in ACTIVATIONS:
            raise NetworkError(f"unknown activation {self.activation!r}; valid names: {', '.join(ACTIVATIONS)}")
        W.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)

    @property
    def width(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, LayerSpec):
            return NotImplemented
        return (self.activation == other.activation and np.array_equal(self.weights, other.weights)
                and np.array_equal(self.biases, other.biases))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Mlp:
    input_dim: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if self.input_dim < 1:
            raise NetworkError("input_dim must be positive")
        if len(layers) < 2:
            raise NetworkError("an Mlp needs at least one hidden layer and an output layer")
        prev = self.input_dim
        for i, layer in enumerate(layers):
            if layer.weights.shape[1] != prev:
                raise NetworkError(f"layer {i + 1} expects {layer.weights.shape[1]} inputs, previous width is {prev}")
            prev = layer.width

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return self.input_dim == other.input_dim and self.layers == other.layers

    @property
    def hidden_layers(self) -> tuple[LayerSpec, ...]:
        return self.layers[:-1]

    @property
    def hidden_count(self) -> int:
        return len(self.layers) - 1

    @property
    def output_dim(self) -> int:
        return self.layers[-1].width


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.epochs < 0:
            raise NetworkError("epochs must be non-negative")
        if self.batch_size < 1:
            raise NetworkError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise NetworkError("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise NetworkError(f"unknown optimizer {self.optimizer!r}; valid names: sgd, adam")


@dataclass(frozen=True)
class ActivationTrace:
    """Hidden-layer activations on a dataset; ``layers[i - 1]`` is hidden layer ``i``, shape (N, width)."""

    layers: tuple[np.ndarray, ...]

    def __post_init__(self):
        rows = {a.shape[0] for a in self.layers}
        if len(rows) > 1:
            raise NetworkError("all trace layers must have the same number of rows")

    def layer(self, level: int) -> np.ndarray:
        """Activations of hidden layer ``level`` (1-based)."""
        if not 1 <= level <= len(self.layers):
            raise NetworkError(f"hidden layer {level} outside 1..{len(self.layers)}")
        return self.layers[level - 1]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __len__(self) -> int:
        return self.layers[0].shape[0] if self.layers else 0


@dataclass
class TrainResult:
    model: Mlp
    loss_history: list[float] = field(default_factory=list)


def init(arch: Sequence[tuple[int, str]] | Sequence[int], input_dim: int, seed: int = 0,
         activation: str = "tanh") -> Mlp:
    """Build an Mlp with seeded uniform(-1, 1)/sqrt(fan_in) weights and zero biases.

    ``arch`` lists every layer (hidden layers then the output layer) either as
    ``(width, activation)`` pairs or as bare widths, which take ``activation``.
    """
    if not arch:
        raise NetworkError("empty architecture")
    rng = np.random.default_rng(seed)
    layers = []
    fan_in = input_dim
    for entry in arch:
        width, kind = (entry, activation) if isinstance(entry, (int, np.integer)) else entry
        if width < 1:
            raise NetworkError(f"layer widths must be positive, got {width}")
        W = rng.uniform(-1.0, 1.0, size=(width, fan_in)) / math.sqrt(fan_in)
        layers.append(LayerSpec(W, np.zeros(width), kind))
        fan_in = width
    return Mlp(input_dim, tuple(layers))


def _check_arity(model: Mlp, X: np.ndarray) -> None:
    if X.shape[-1] != model.input_dim:
        raise NetworkError(f"model expects {model.input_dim} features, got {X.shape[-1]}")


def _affine(A: np.ndarray, W: np.ndarray, b: np.ndarray, chunk: int = 256) -> np.ndarray:
    # Row-wise multiply-and-sum instead of a BLAS matmul: each row's result is
    # then independent of how many rows share the call, so a batch and a
    # single instance give bit-identical activations.
    out = np.empty((A.shape[0], W.shape[0]))
    for start in range(0, A.shape[0], chunk):
        block = A[start:start + chunk]
        out[start:start + chunk] = (block[:, None, :] * W[None, :, :]).sum(axis=-1) + b
    return out


def forward_batch(model: Mlp, X) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Return (pre-activations, activations) for every layer, each of shape (N, width)."""
    A = np.atleast_2d(np.asarray(X, dtype=float))
    _check_arity(model, A)
    zs, acts = [], []
    for layer in model.layers:
        Z = _affine(A, layer.weights, layer.biases)
        A = activate(layer.activation, Z)
        zs.append(Z)
        acts.append(A)
    return zs, acts


def forward(model: Mlp, features) -> tuple[list[np.ndarray], np.ndarray]:
    """Single-instance forward pass: per-layer activation vectors (hidden and output) and the output vector."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 1:
        raise NetworkError("forward() takes one feature vector; use forward_batch for matrices")
    _, acts = forward_batch(model, x[None, :])
    acts = [a[0] for a in acts]
    return acts, acts[-1]


def _targets(model: Mlp, y: np.ndarray) -> np.ndarray:
    """Regression targets for class labels under the model's output head."""
    out = model.layers[-1]
    if out.width == 1:
        t = y.astype(float)
        if out.activation == "tanh":
            t = 2.0 * t - 1.0
        return t[:, None]
    T = np.zeros((len(y), out.width))
    T[np.arange(len(y)), y] = 1.0
    if out.activation == "tanh":
        T = 2.0 * T - 1.0
    return T


def _backprop(params, kinds, X, T):
    A = X
    zs, acts = [], []
    for (W, b), kind in zip(params, kinds):
        Z = A @ W.T + b
        A = activate(kind, Z)
        zs.append(Z)
        acts.append(A)
    err = acts[-1] - T
    with np.errstate(over="ignore", invalid="ignore"):
        loss = 0.5 * float(np.sum(err * err))
    grads = [None] * len(params)
    delta = err * activate_grad(kinds[-1], zs[-1], acts[-1])
    for li in range(len(params) - 1, -1, -1):
        prev = acts[li - 1] if li > 0 else X
        grads[li] = (delta.T @ prev, delta.sum(axis=0))
        if li > 0:
            delta = (delta @ params[li][0]) * activate_grad(kinds[li - 1], zs[li - 1], acts[li - 1])
    return loss, grads


def loss_and_gradients(model: Mlp, X, T) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """E = 1/2 * sum (t - y_hat)^2 over the batch, and (dE/dW, dE/db) per layer by backprop."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_arity(model, X)
    T = np.asarray(T, dtype=float).reshape(len(X), -1)
    params = [(layer.weights, layer.biases) for layer in model.layers]
    return _backprop(params, [layer.activation for layer in model.layers], X, T)


def with_parameters(model: Mlp, params: Sequence[tuple[np.ndarray, np.ndarray]]) -> Mlp:
    layers = tuple(replace(layer, weights=W, biases=b) for layer, (W, b) in zip(model.layers, params))
    return Mlp(model.input_dim, layers)


def train(model: Mlp, dataset: Dataset, config: TrainConfig) -> TrainResult:
    """Mini-batch gradient descent on the squared-error loss.

    The shuffle order comes from ``config.seed`` alone, so a run is
    bit-reproducible on one platform.  ``loss_history[e]`` is the summed batch
    loss of epoch ``e``.
    """
    if len(dataset) == 0:
        raise NetworkError("cannot train on an empty dataset")
    if config.batch_size > len(dataset):
        raise NetworkError(f"batch_size {config.batch_size} exceeds training set size {len(dataset)}")
    X = dataset.X
    _check_arity(model, X)
    if config.epochs == 0:
        return TrainResult(model, [])
    T = _targets(model, dataset.y)
    kinds = [layer.activation for layer in model.layers]
    params = [(layer.weights.copy(), layer.biases.copy()) for layer in model.layers]

    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    adam = config.optimizer == "adam"
    if adam:
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        step = 0

    history = []
    n = len(X)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            loss, grads = _backprop(params, kinds, X[batch], T[batch])
            epoch_loss += loss
            if adam:
                step += 1
                c1 = 1.0 - beta1 ** step
                c2 = 1.0 - beta2 ** step
            for li, (gW, gb) in enumerate(grads):
                W, b = params[li]
                if adam:
                    for p, g, mm, vv in ((W, gW, m[li][0], v[li][0]), (b, gb, m[li][1], v[li][1])):
                        mm *= beta1
                        mm += (1.0 - beta1) * g
                        vv *= beta2
                        vv += (1.0 - beta2) * g * g
                        p -= lr * (mm / c1) / (np.sqrt(vv / c2) + eps)
                else:
                    W -= lr * gW
                    b -= lr * gb
        if not math.isfinite(epoch_loss) or not all(np.all(np.isfinite(W)) for W, _ in params):
            raise DivergenceError(epoch)
        history.append(epoch_loss)
    return TrainResult(with_parameters(model, params), history)


def output_to_class(model: Mlp, output: np.ndarray) -> np.ndarray:
    """Map output vectors (N, out_dim) to class ids.

    One output node: class 1 iff output >= 0.5 (sigmoid/identity/relu heads) or
    >= 0.0 (tanh head).  Several nodes: argmax, ties to the smaller id.
    """
    output = np.atleast_2d(output)
    head = model.layers[-1]
    if head.width == 1:
        cut = 0.0 if head.activation == "tanh" else 0.5
        return (output[:, 0] >= cut).astype(int)
    return np.argmax(output, axis=1)


def predict(model: Mlp, features) -> int:
    _, out = forward(model, features)
    return int(output_to_class(model, out[None, :])[0])


def predict_batch(model: Mlp, X) -> np.ndarray:
    _, acts = forward_batch(model, X)
    return output_to_class(model, acts[-1])


def accuracy(model: Mlp, dataset: Dataset) -> float:
    """Percentage of instances classified correctly."""
    if len(dataset) == 0:
        raise NetworkError("accuracy of an empty dataset is undefined")
    return 100.0 * float(np.mean(predict_batch(model, dataset.X) == dataset.y))


def capture_activations(model: Mlp, dataset: Dataset | np.ndarray) -> ActivationTrace:
    X = dataset.X if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=float)
    if len(X) == 0:
        return ActivationTrace(tuple(np.zeros((0, layer.width)) for layer in model.hidden_layers))
    _, acts = forward_batch(model, X)
    hidden = []
    for a in acts[:-1]:
        a = a.copy()
        a.flags.writeable = False
        hidden.append(a)
    return ActivationTrace(tuple(hidden))


def model_to_dict(model: Mlp) -> dict:
    return {
        "input_dim": model.input_dim,
        "layers": [
            {"weights": layer.weights.tolist(), "biases": layer.biases.tolist(), "activation": layer.activation}
            for layer in model.layers
        ],
    }


def model_from_dict(doc: dict) -> Mlp:
    try:
        input_dim = int(doc["input_dim"])
        layers = []
        for i, entry in enumerate(doc["layers"]):
            kind = entry["activation"]
            if kind not in ACTIVATIONS:
                raise NetworkError(f"layer {i}: unknown activation {kind!r}; valid names: {', '.join(ACTIVATIONS)}")
            W = np.array(entry["weights"], dtype=float)
            if W.ndim != 2:
                raise NetworkError(f"layer {i}: weights must be a 2-D array")
            layers.append(LayerSpec(W, np.array(entry["biases"], dtype=float), kind))
        return Mlp(input_dim, tuple(layers))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, NetworkError):
            raise
        raise NetworkError(f"malformed model document: {exc}") from exc


def save_model(model: Mlp, path) -> None:
    # json writes floats with repr(), the shortest exact round-trip form (at most 17 significant digits)
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> Mlp:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetworkError(f"{path}: model document must be a JSON object")
    return model_from_dict(doc)
