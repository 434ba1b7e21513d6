"""Masked feed-forward classifier: forward pass, SGD training, evaluation.

Hidden layers are ReLU units without biases; the readout is a dense linear
map followed by softmax. Only synapses whose mask bit is set take part, and
their gradients are the only ones ever applied, so training never changes a
mask or a masked-out weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .architecture import NetworkArchitecture, Verdict, validate
from .data import Dataset
from .errors import WidthMismatchError

EVAL_CHUNK = 10_000


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass(frozen=True)
class TrainResult:
    network: NetworkArchitecture
    loss: float
    skipped: bool = False  # degenerate input, returned untouched


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    per_class_accuracy: tuple[float, ...]


@dataclass
class _Dense:
    """Effective matrices of a network, restricted to live clusters.

    ``sources[l]`` maps rows of ``weights[l]`` back to mask positions.
    """

    sources: list[np.ndarray]
    weights: list[np.ndarray]  # (n_sources, n_clusters)
    masks: list[np.ndarray]
    readout: np.ndarray

    @classmethod
    def from_network(cls, net: NetworkArchitecture) -> "_Dense":
        sources, weights, masks = [], [], []
        previous = np.arange(net.input_width)
        for layer in net.hidden_layers:
            fan_in = len(previous)
            if layer:
                w = np.stack([c.incoming_weights for c in layer])[:, previous].T
                m = np.stack([c.incoming_mask for c in layer])[:, previous].T
            else:
                w = np.zeros((fan_in, 0))
                m = np.zeros((fan_in, 0), dtype=bool)
            sources.append(previous)
            weights.append(np.where(m, w, 0.0))
            masks.append(m)
            previous = np.array([c.tag.ancestor_index for c in layer], dtype=np.int64)
        return cls(sources, weights, masks, np.array(net.output_weights))

    def to_network(self, net: NetworkArchitecture) -> NetworkArchitecture:
        layers = []
        for clusters, src, w in zip(net.hidden_layers, self.sources, self.weights):
            updated = []
            for k, cluster in enumerate(clusters):
                incoming = np.array(cluster.incoming_weights)
                incoming[src] = np.where(cluster.incoming_mask[src], w[:, k], 0.0)
                updated.append(type(cluster)(cluster.tag, cluster.incoming_mask, incoming))
            layers.append(tuple(updated))
        return net.replace(hidden_layers=tuple(layers), output_weights=self.readout)

    def activations(self, x):
        acts = [x]
        for w in self.weights:
            acts.append(np.maximum(acts[-1] @ w, 0.0))
        return acts

    def probabilities(self, x):
        logits = self.activations(x)[-1] @ self.readout
        return softmax(logits)

    def gradients(self, x, labels):
        """Mean cross-entropy and its gradients (masked) for one batch."""
        acts = self.activations(x)
        probs = softmax(acts[-1] @ self.readout)
        n = len(labels)
        loss = _cross_entropy(probs, labels)
        delta = probs
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        g_readout = acts[-1].T @ delta
        back = delta @ self.readout.T
        g_weights = [None] * len(self.weights)
        for layer in reversed(range(len(self.weights))):
            back = back * (acts[layer + 1] > 0.0)
            g_weights[layer] = (acts[layer].T @ back) * self.masks[layer]
            if layer:
                back = back @ self.weights[layer].T
        return loss, g_weights, g_readout


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _cross_entropy(probs, labels):
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def _check_width(net: NetworkArchitecture, width: int):
    if width != net.input_width:
        raise WidthMismatchError(f"data has {width} columns, network expects {net.input_width}")


def forward(net: NetworkArchitecture, batch) -> np.ndarray:
    """Class probabilities for each row of ``batch``."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise WidthMismatchError(f"batch must be 2-D, got shape {x.shape}")
    _check_width(net, x.shape[1])
    return _Dense.from_network(net).probabilities(x)


def loss_and_gradients(net: NetworkArchitecture, images, labels):
    """Mean cross-entropy and gradients laid out like the network.

    Returns ``(loss, hidden, readout)`` where ``hidden[l][k]`` is the gradient
    for cluster ``k`` of layer ``l`` over its full mask length.
    """
    x = np.asarray(images, dtype=np.float64)
    _check_width(net, x.shape[1])
    dense = _Dense.from_network(net)
    loss, g_weights, g_readout = dense.gradients(x, np.asarray(labels))
    hidden = []
    for layer, src, g in zip(net.hidden_layers, dense.sources, g_weights):
        full = np.zeros((len(layer), net.layer_widths[len(hidden)]))
        full[:, src] = g.T
        hidden.append(full)
    return loss, hidden, g_readout


def dataset_loss(net: NetworkArchitecture, data: Dataset) -> float:
    _check_width(net, data.images.shape[1])
    dense = _Dense.from_network(net)
    return _chunked_loss(dense, data)


def _chunked_loss(dense: _Dense, data: Dataset) -> float:
    total = 0.0
    for start in range(0, len(data), EVAL_CHUNK):
        stop = start + EVAL_CHUNK
        probs = dense.probabilities(data.images[start:stop])
        total += _cross_entropy(probs, data.labels[start:stop]) * len(probs)
    return total / max(len(data), 1)


def train(net: NetworkArchitecture, data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Plain mini-batch SGD on cross-entropy; returns a new network."""
    _check_width(net, data.images.shape[1])
    dense = _Dense.from_network(net)
    if validate(net) is Verdict.DEGENERATE:
        return TrainResult(net, _chunked_loss(dense, data), skipped=True)

    rng = np.random.default_rng(cfg.seed)
    n = len(data)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            _, g_weights, g_readout = dense.gradients(data.images[batch], data.labels[batch])
            for w, g in zip(dense.weights, g_weights):
                w -= cfg.learning_rate * g
            dense.readout -= cfg.learning_rate * g_readout

    trained = dense.to_network(net) if cfg.epochs else net
    return TrainResult(trained, _chunked_loss(dense, data))


def evaluate(net: NetworkArchitecture, data: Dataset) -> EvalResult:
    _check_width(net, data.images.shape[1])
    dense = _Dense.from_network(net)
    predicted = np.concatenate([
        dense.probabilities(data.images[s:s + EVAL_CHUNK]).argmax(axis=1)
        for s in range(0, len(data), EVAL_CHUNK)
    ]) if len(data) else np.zeros(0, dtype=np.int64)
    correct = predicted == data.labels
    n_classes = net.output_width
    per_class = []
    for c in range(n_classes):
        in_class = data.labels == c
        per_class.append(float(correct[in_class].mean()) if in_class.any() else 0.0)
    accuracy = float(correct.mean()) if len(data) else 0.0
    return EvalResult(accuracy, tuple(per_class))
