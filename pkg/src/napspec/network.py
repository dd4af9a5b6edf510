"""Feed-forward ReLU networks: loading, evaluation and gradients of the margin."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


class ModelError(ValueError):
    pass


class NeuronId(NamedTuple):
    """A hidden neuron. ``layer`` is 1-based (1..L-1), ``index`` 0-based."""

    layer: int
    index: int


@dataclass(frozen=True, eq=False)
class ActivationTrace:
    pre: tuple[np.ndarray, ...]
    post: tuple[np.ndarray, ...]
    output: np.ndarray

    def hidden_post(self) -> np.ndarray:
        """Post-activations of all hidden neurons in global order."""
        return np.concatenate(self.post)

    def hidden_pre(self) -> np.ndarray:
        return np.concatenate(self.pre)


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __init__(self, weights: Sequence, biases: Sequence, input_dim: int | None = None):
        if len(weights) != len(biases):
            raise ModelError("weights and biases have different layer counts")
        if len(weights) < 2:
            raise ModelError(f"need at least 2 layers (one hidden + output), got {len(weights)}")
        ws, bs = [], []
        prev = input_dim
        for l, (w, b) in enumerate(zip(weights, biases), start=1):
            try:
                w = _readonly(w)
                b = _readonly(b)
            except (TypeError, ValueError) as e:
                raise ModelError(f"layer {l}: {e}") from None
            if w.ndim != 2 or b.ndim != 1:
                raise ModelError(f"layer {l}: weights must be a matrix and bias a vector")
            if w.shape[0] != b.shape[0]:
                raise ModelError(f"layer {l}: {w.shape[0]} weight rows but {b.shape[0]} biases")
            if prev is not None and w.shape[1] != prev:
                raise ModelError(f"layer {l}: expected {prev} columns, got {w.shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelError(f"layer {l}: non-finite entry")
            ws.append(w)
            bs.append(b)
            prev = w.shape[0]
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def signature(self) -> tuple[int, ...]:
        """Hidden layer sizes."""
        return tuple(w.shape[0] for w in self.weights[:-1])

    @property
    def num_hidden(self) -> int:
        return sum(self.signature)

    def neurons(self) -> list[NeuronId]:
        return neuron_ids(self.signature)

    def forward(self, x) -> ActivationTrace:
        return forward(self, x)

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {"weights": w.tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }


def neuron_ids(signature: Sequence[int]) -> list[NeuronId]:
    return [NeuronId(l, i) for l, d in enumerate(signature, start=1) for i in range(d)]


def neuron_ordinal(signature: Sequence[int], n: NeuronId) -> int:
    layer, index = n
    if not 1 <= layer <= len(signature) or not 0 <= index < signature[layer - 1]:
        raise ValueError(f"invalid neuron {tuple(n)} for signature {tuple(signature)}")
    return sum(signature[: layer - 1]) + index


def load_model(path) -> Network:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(doc, dict) or "layers" not in doc or "input_dim" not in doc:
        raise ModelError(f"{path}: expected an object with 'input_dim' and 'layers'")
    try:
        weights = [layer["weights"] for layer in doc["layers"]]
        biases = [layer["bias"] for layer in doc["layers"]]
    except (KeyError, TypeError):
        raise ModelError(f"{path}: every layer needs 'weights' and 'bias'") from None
    return Network(weights, biases, input_dim=int(doc["input_dim"]))


def save_model(net: Network, path) -> None:
    Path(path).write_text(json.dumps(net.to_json(), indent=2) + "\n")


def _check_input(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    return x


def forward(net: Network, x) -> ActivationTrace:
    h = _check_input(net, x)
    pre, post = [], []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = w @ h + b
        h = np.maximum(z, 0.0)
        pre.append(z)
        post.append(h)
    out = net.weights[-1] @ h + net.biases[-1]
    return ActivationTrace(tuple(pre), tuple(post), out)


def forward_batch(net: Network, X) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate many inputs at once.

    Returns ``(hidden_post, output)`` with shapes ``(n, |N|)`` and ``(n, output_dim)``.
    """
    h = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if h.shape[1] != net.input_dim:
        raise ValueError(f"inputs have {h.shape[1]} columns, expected {net.input_dim}")
    posts = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
        posts.append(h)
    out = h @ net.weights[-1].T + net.biases[-1]
    return np.concatenate(posts, axis=1), out


def _check_class(net: Network, c: int) -> None:
    if c < 0 or (net.output_dim > 1 and c >= net.output_dim):
        raise ValueError(f"invalid class {c} for a network with {net.output_dim} outputs")


def rival(output: np.ndarray, c: int) -> int:
    """Index of the strongest competing class (lowest index on ties)."""
    others = np.delete(output, c)
    k = int(np.argmax(others))
    return k if k < c else k + 1


def margin_from_output(output: np.ndarray, c: int) -> float:
    if output.shape[0] == 1:
        return float(output[0])
    return float(output[c] - np.max(np.delete(output, c)))


def margins_batch(output: np.ndarray, c: int) -> np.ndarray:
    if output.shape[1] == 1:
        return output[:, 0].copy()
    others = np.delete(output, c, axis=1)
    return output[:, c] - others.max(axis=1)


def margin(net: Network, x, c: int) -> float:
    """F_c(x) - max_{k != c} F_k(x); for a scalar-output net simply F(x)."""
    _check_class(net, c)
    return margin_from_output(forward(net, x).output, c)


def _output_seed(net: Network, output: np.ndarray, c: int) -> np.ndarray:
    g = np.zeros(net.output_dim)
    if net.output_dim == 1:
        g[0] = 1.0
    else:
        g[c] = 1.0
        g[rival(output, c)] -= 1.0
    return g


def _backprop(net: Network, trace: ActivationTrace, c: int, stop_layer: int = 0) -> np.ndarray:
    # gradient of the margin w.r.t. post-activation of layer `stop_layer` (0 = input)
    g = net.weights[-1].T @ _output_seed(net, trace.output, c)
    for l in range(net.num_layers - 1, stop_layer, -1):
        g = g * (trace.pre[l - 1] > 0)  # subgradient 0 at z == 0
        g = net.weights[l - 1].T @ g
    return g


def grad_margin_wrt_input(net: Network, x, c: int) -> np.ndarray:
    _check_class(net, c)
    return _backprop(net, forward(net, x), c, stop_layer=0)


def grad_margin_wrt_hidden(net: Network, x, c: int, n: NeuronId) -> float:
    """Partial derivative of the margin w.r.t. the post-activation of ``n``."""
    _check_class(net, c)
    layer, index = n
    if not 1 <= layer < net.num_layers or not 0 <= index < net.signature[layer - 1]:
        raise ValueError(f"invalid neuron {tuple(n)}")
    return float(_backprop(net, forward(net, x), c, stop_layer=layer)[index])


def grad_margin_wrt_hidden_all(net: Network, x, c: int) -> np.ndarray:
    """Margin gradient w.r.t. every hidden post-activation, in global order."""
    _check_class(net, c)
    trace = forward(net, x)
    return np.concatenate(
        [_backprop(net, trace, c, stop_layer=l) for l in range(1, net.num_layers)]
    )


@dataclass(frozen=True, eq=False)
class InputDomain:
    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lower, upper = _readonly(lower), _readonly(upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("domain bounds must be vectors of equal length")
        if np.any(lower > upper):
            raise ValueError("domain lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim: int) -> "InputDomain":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def to_json(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    labels: np.ndarray

    def __init__(self, X, labels, domain: InputDomain | None = None):
        X = _readonly(np.atleast_2d(X))
        labels = np.asarray(labels, dtype=np.int64)
        labels.setflags(write=False)
        if labels.shape != (X.shape[0],):
            raise ValueError("one label per row required")
        if domain is not None and not all(domain.contains(x) for x in X):
            raise ValueError("dataset rows fall outside the input domain")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.X.shape[0]

    def of_class(self, c: int) -> np.ndarray:
        return self.X[self.labels == c]


def load_dataset(path, domain: InputDomain | None = None) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ModelError(f"{path}: empty dataset file")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header != [f"x{i}" for i in range(d)] + ["label"]:
        raise ModelError(f"{path}: header must be x0,...,x{{d-1}},label")
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise ModelError(f"{path}:{lineno}: expected {d + 1} fields")
        try:
            X.append([float(v) for v in row[:d]])
            y.append(int(row[d]))
        except ValueError:
            raise ModelError(f"{path}:{lineno}: unparsable value") from None
    return Dataset(np.array(X).reshape(-1, d), y, domain)


def save_dataset(data: Dataset, path) -> None:
    d = data.X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(d)] + ["label"])
        for x, y in zip(data.X, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
