"""Sparse, gene-tagged feed-forward architectures.

A network is a stack of hidden layers made of *clusters*. A cluster is one
hidden unit plus its incoming synapses: a boolean existence mask and a weight
vector indexed by the ancestor positions of the preceding layer (or by input
pixels for the first hidden layer). Every cluster carries a :class:`GeneTag`
naming the position it occupied in the generation-0 ancestor, which is what
lets mating and overlap measurement line clusters up across networks.

The readout matrix is dense and is never evolved; it has one row per live
cluster of the last hidden layer.
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidTopologyError, MalformedInputError, VersionMismatchError

FORMAT_VERSION = 1
BYTES_PER_WEIGHT = 4


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, order=True)
class GeneTag:
    layer: int
    ancestor_index: int

    def as_list(self) -> list[int]:
        return [self.layer, self.ancestor_index]


@dataclass(frozen=True, eq=False)
class Cluster:
    tag: GeneTag
    incoming_mask: np.ndarray
    incoming_weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "incoming_mask", _frozen(self.incoming_mask, bool))
        object.__setattr__(self, "incoming_weights", _frozen(self.incoming_weights, np.float64))

    @property
    def live_count(self) -> int:
        return int(np.count_nonzero(self.incoming_mask))

    def __eq__(self, other):
        if not isinstance(other, Cluster):
            return NotImplemented
        return (
            self.tag == other.tag
            and self.incoming_mask.shape == other.incoming_mask.shape
            and np.array_equal(self.incoming_mask, other.incoming_mask)
            and self.incoming_weights.tobytes() == other.incoming_weights.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NetworkArchitecture:
    layer_widths: tuple[int, ...]
    hidden_layers: tuple[tuple[Cluster, ...], ...]
    output_weights: np.ndarray
    generation: int = 0
    network_id: str = ""
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        object.__setattr__(
            self, "hidden_layers", tuple(tuple(layer) for layer in self.hidden_layers)
        )
        object.__setattr__(self, "output_weights", _frozen(self.output_weights, np.float64))

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.hidden_layers)

    def tags(self) -> frozenset[GeneTag]:
        return frozenset(c.tag for layer in self.hidden_layers for c in layer)

    def layer_tags(self, layer: int) -> frozenset[GeneTag]:
        return frozenset(c.tag for c in self.hidden_layers[layer])

    def cluster_count(self) -> int:
        return sum(len(layer) for layer in self.hidden_layers)

    def replace(self, **changes) -> "NetworkArchitecture":
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, NetworkArchitecture):
            return NotImplemented
        return (
            self.layer_widths == other.layer_widths
            and self.hidden_layers == other.hidden_layers
            and self.output_weights.shape == other.output_weights.shape
            and self.output_weights.tobytes() == other.output_weights.tobytes()
            and self.generation == other.generation
            and self.network_id == other.network_id
            and self.rng_seed == other.rng_seed
        )

    __hash__ = None


@dataclass(frozen=True)
class StorageReport:
    live_synapses: int
    bytes: int
    live_clusters: int


class Verdict(enum.Enum):
    OK = "ok"
    DEGENERATE = "degenerate"
    CORRUPT = "corrupt"


def ancestor_architecture(
    layer_widths: Sequence[int], seed: int, network_id: str | None = None
) -> NetworkArchitecture:
    """Build the dense generation-0 network for ``layer_widths``.

    Weights are drawn from N(0, 1/fan_in) and every cluster gets the tag
    (layer, position). The same widths and seed always give identical weights.
    """
    widths = [int(w) for w in layer_widths]
    if len(widths) < 3:
        raise InvalidTopologyError(
            f"need input, at least one hidden and output width; got {widths}"
        )
    if any(w <= 0 for w in widths):
        raise InvalidTopologyError(f"all widths must be positive; got {widths}")

    rng = np.random.default_rng(seed)
    layers = []
    for layer, (fan_in, width) in enumerate(zip(widths[:-2], widths[1:-1])):
        weights = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(width, fan_in))
        mask = np.ones(fan_in, dtype=bool)
        layers.append(
            tuple(Cluster(GeneTag(layer, k), mask, weights[k]) for k in range(width))
        )
    output = rng.normal(0.0, 1.0 / np.sqrt(widths[-2]), size=(widths[-2], widths[-1]))
    return NetworkArchitecture(
        layer_widths=tuple(widths),
        hidden_layers=tuple(layers),
        output_weights=output,
        generation=0,
        network_id=network_id if network_id is not None else f"ancestor-{seed}",
        rng_seed=int(seed),
    )


def storage_size(net: NetworkArchitecture) -> StorageReport:
    """Count live synapses (mask bits set, plus the dense readout) and bytes."""
    live = sum(c.live_count for layer in net.hidden_layers for c in layer)
    live += int(net.output_weights.size)
    return StorageReport(
        live_synapses=live,
        bytes=BYTES_PER_WEIGHT * live,
        live_clusters=net.cluster_count(),
    )


def _corruption(net: NetworkArchitecture) -> str | None:
    """Return a description of the first broken invariant, or None."""
    widths = net.layer_widths
    if len(widths) < 3 or any(w <= 0 for w in widths):
        return f"bad layer widths {widths}"
    if len(net.hidden_layers) != len(widths) - 2:
        return f"{len(net.hidden_layers)} hidden layers for widths {widths}"
    for layer, clusters in enumerate(net.hidden_layers):
        fan_in = widths[layer]
        seen = set()
        for cluster in clusters:
            tag = cluster.tag
            if tag.layer != layer:
                return f"cluster tagged {tag} sits in layer {layer}"
            if not 0 <= tag.ancestor_index < widths[layer + 1]:
                return f"tag {tag} outside ancestor width {widths[layer + 1]}"
            if tag in seen:
                return f"duplicate tag {tag}"
            seen.add(tag)
            mask, weights = cluster.incoming_mask, cluster.incoming_weights
            if mask.shape != (fan_in,) or weights.shape != (fan_in,):
                return f"cluster {tag} has fan-in {mask.shape}/{weights.shape}, want {fan_in}"
            if np.any(weights[~mask] != 0.0):
                return f"cluster {tag} has weight under a cleared mask bit"
            if not mask.any():
                return f"cluster {tag} has no live synapses"
    n_last = len(net.hidden_layers[-1])
    if net.output_weights.shape != (n_last, widths[-1]):
        return (
            f"output weights {net.output_weights.shape}, want ({n_last}, {widths[-1]})"
        )
    return None


def validate(net: NetworkArchitecture) -> Verdict:
    if _corruption(net) is not None:
        return Verdict.CORRUPT
    if any(len(layer) == 0 for layer in net.hidden_layers):
        return Verdict.DEGENERATE
    if storage_size(net).live_synapses == 0:
        return Verdict.DEGENERATE
    return Verdict.OK


def explain_corruption(net: NetworkArchitecture) -> str | None:
    return _corruption(net)


# -- serialization ----------------------------------------------------------


def _encode_mask(mask: np.ndarray) -> str:
    return base64.b64encode(np.packbits(mask, bitorder="little").tobytes()).decode("ascii")


def _encode_floats(values: Iterable[float]) -> list[str]:
    return [repr(float(v)) for v in values]


def to_document(net: NetworkArchitecture) -> dict:
    return {
        "version": FORMAT_VERSION,
        "network_id": net.network_id,
        "generation": net.generation,
        "rng_seed": net.rng_seed,
        "layer_widths": list(net.layer_widths),
        "layers": [
            {
                "clusters": [
                    {
                        "tag": c.tag.as_list(),
                        "mask": _encode_mask(c.incoming_mask),
                        "weights": _encode_floats(c.incoming_weights),
                    }
                    for c in layer
                ]
            }
            for layer in net.hidden_layers
        ],
        "output_weights": [_encode_floats(row) for row in net.output_weights],
    }


def serialize(net: NetworkArchitecture) -> bytes:
    if validate(net) is Verdict.CORRUPT:
        raise InvalidTopologyError(f"refusing to serialize corrupt network: {_corruption(net)}")
    return json.dumps(to_document(net), separators=(",", ":")).encode("utf-8")


class _Decoder:
    """Schema-checking walk over a parsed document.

    JSON syntax errors carry exact offsets; schema errors are located at the
    first occurrence of the offending key in the raw input.
    """

    def __init__(self, raw: bytes):
        self.raw = raw

    def fail(self, message, key=None):
        offset = 0
        if key is not None:
            found = self.raw.find(json.dumps(key).encode("utf-8"))
            offset = max(found, 0)
        raise MalformedInputError(message, offset)

    def get(self, obj, key, kind):
        if not isinstance(obj, dict) or key not in obj:
            self.fail(f"missing field '{key}'", key)
        value = obj[key]
        if kind is int and isinstance(value, bool):
            self.fail(f"field '{key}' must be an integer", key)
        if not isinstance(value, kind):
            self.fail(f"field '{key}' has type {type(value).__name__}", key)
        return value

    def floats(self, values, key):
        if not isinstance(values, list):
            self.fail(f"field '{key}' must be a list", key)
        try:
            return np.array([float(v) if isinstance(v, str) else _reject(v) for v in values],
                            dtype=np.float64)
        except (TypeError, ValueError):
            self.fail(f"field '{key}' holds a non-decimal entry", key)

    def mask(self, text, length):
        try:
            packed = base64.b64decode(text.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError):
            self.fail("mask is not valid base64", "mask")
        bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), bitorder="little")
        if bits.size < length or bits.size - length >= 8:
            self.fail(f"mask holds {bits.size} bits for fan-in {length}", "mask")
        return bits[:length].astype(bool)


def _reject(value):
    raise TypeError(f"expected decimal string, got {type(value).__name__}")


def from_document(doc: dict, raw: bytes = b"") -> NetworkArchitecture:
    d = _Decoder(raw)
    if not isinstance(doc, dict):
        d.fail("top level must be an object")
    version = d.get(doc, "version", int)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"architecture format version {version}, this reader handles {FORMAT_VERSION}"
        )
    widths = [int(w) for w in d.get(doc, "layer_widths", list)]
    layers_doc = d.get(doc, "layers", list)
    if len(widths) < 3 or len(layers_doc) != len(widths) - 2:
        d.fail(f"{len(layers_doc)} layers for widths {widths}", "layers")
    layers = []
    for index, layer_doc in enumerate(layers_doc):
        clusters = []
        for cdoc in d.get(layer_doc, "clusters", list):
            tag = d.get(cdoc, "tag", list)
            if len(tag) != 2 or not all(isinstance(t, int) for t in tag):
                d.fail("tag must be [layer, index]", "tag")
            weights = d.floats(d.get(cdoc, "weights", list), "weights")
            if weights.size != widths[index]:
                d.fail(f"cluster {tag} has {weights.size} weights", "weights")
            mask = d.mask(d.get(cdoc, "mask", str), widths[index])
            clusters.append(Cluster(GeneTag(tag[0], tag[1]), mask, weights))
        layers.append(tuple(clusters))
    rows = d.get(doc, "output_weights", list)
    output = np.zeros((len(rows), widths[-1]))
    for i, row in enumerate(rows):
        values = d.floats(row, "output_weights")
        if values.size != widths[-1]:
            d.fail(f"output row {i} has {values.size} entries", "output_weights")
        output[i] = values
    return NetworkArchitecture(
        layer_widths=tuple(widths),
        hidden_layers=tuple(layers),
        output_weights=output,
        generation=d.get(doc, "generation", int),
        network_id=d.get(doc, "network_id", str),
        rng_seed=d.get(doc, "rng_seed", int),
    )


def deserialize(raw: bytes) -> NetworkArchitecture:
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedInputError("input is not UTF-8", exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise MalformedInputError(f"invalid JSON: {exc.msg}", offset) from None
    try:
        return from_document(doc, raw)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, (MalformedInputError, VersionMismatchError)):
            raise
        raise MalformedInputError(str(exc), 0) from None


def save_architecture(net: NetworkArchitecture, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load_architecture(path) -> NetworkArchitecture:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
