"""Multi-parent evolutionary synthesis of sparse tagged networks.

An offspring is sampled in two stages. First each aligned group of parent
clusters gets a combined strength and survives with a probability that
grows with that strength. Then every surviving cluster receives mated
incoming weights, and each candidate synapse survives with a probability
that grows with its combined magnitude. The environmental factors set the
expected surviving fraction at both stages.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .architecture import Cluster, GeneTag, NetworkArchitecture
from .errors import LineageMismatchError, NoSignalError


class Alignment(enum.Enum):
    GENE_TAGGED = "gene_tagged"
    POSITIONAL = "positional"

    @classmethod
    def parse(cls, value: "str | Alignment") -> "Alignment":
        if isinstance(value, cls):
            return value
        aliases = {"tagged": cls.GENE_TAGGED, "gene_tagged": cls.GENE_TAGGED,
                   "positional": cls.POSITIONAL, "untagged": cls.POSITIONAL}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown alignment {value!r}") from None


class AlphaMode(enum.Enum):
    GEOMETRIC_MEAN = "geometric_mean"
    LITERAL_PRODUCT = "literal_product"


@dataclass(frozen=True)
class EnvironmentalFactors:
    """Expected survival percentages for clusters and synapses."""

    r_cluster: float = 50.0
    r_synapse: float = 50.0

    def __post_init__(self):
        for name in ("r_cluster", "r_synapse"):
            value = getattr(self, name)
            if not 0.0 < value <= 100.0:
                raise ValueError(f"{name} must lie in (0, 100], got {value}")


@dataclass(frozen=True)
class AlphaScheme:
    mode: AlphaMode = AlphaMode.GEOMETRIC_MEAN
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", AlphaMode(self.mode))
        if self.coefficients is not None:
            coeffs = tuple(float(c) for c in self.coefficients)
            if any(not c > 0.0 for c in coeffs):
                raise ValueError(f"alpha coefficients must be positive: {coeffs}")
            object.__setattr__(self, "coefficients", coeffs)

    def coefficient(self, parent_index: int) -> float:
        if self.coefficients is None:
            return 1.0
        return self.coefficients[parent_index]


@dataclass(frozen=True)
class MatingPolicy:
    alignment: Alignment = Alignment.GENE_TAGGED
    m: int = 5
    alpha: AlphaScheme = AlphaScheme()

    def __post_init__(self):
        object.__setattr__(self, "alignment", Alignment.parse(self.alignment))
        if self.m < 1:
            raise ValueError(f"parent count m must be >= 1, got {self.m}")
        if self.alpha.coefficients is not None and len(self.alpha.coefficients) != self.m:
            raise ValueError(
                f"{len(self.alpha.coefficients)} alpha coefficients for m={self.m} parents"
            )


class Member(NamedTuple):
    parent: int
    position: int  # index of the cluster inside its parent's layer
    cluster: Cluster


@dataclass(frozen=True)
class AlignmentGroup:
    """Clusters from different parents that mate with each other.

    ``key`` is the shared gene tag in tagged mode and the sorted position in
    positional mode.
    """

    layer: int
    key: GeneTag | int
    members: tuple[Member, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("an alignment group needs at least one member")


def _check_lineage(parents: Sequence[NetworkArchitecture]) -> None:
    if not parents:
        raise ValueError("at least one parent is required")
    widths = parents[0].layer_widths
    for k, parent in enumerate(parents[1:], start=1):
        if parent.layer_widths != widths:
            raise LineageMismatchError(
                f"parent {k} has widths {parent.layer_widths}, parent 0 has {widths}"
            )


def align_clusters(
    parents: Sequence[NetworkArchitecture], policy: MatingPolicy
) -> list[list[AlignmentGroup]]:
    """Group parent clusters that will be mated, one list per hidden layer."""
    _check_lineage(parents)
    aligned = []
    for layer in range(parents[0].depth):
        if policy.alignment is Alignment.GENE_TAGGED:
            by_tag: dict[GeneTag, list[Member]] = {}
            for k, parent in enumerate(parents):
                for pos, cluster in enumerate(parent.hidden_layers[layer]):
                    by_tag.setdefault(cluster.tag, []).append(Member(k, pos, cluster))
            groups = [AlignmentGroup(layer, tag, tuple(by_tag[tag])) for tag in sorted(by_tag)]
        else:
            ordered = [
                sorted(
                    ((pos, c) for pos, c in enumerate(parent.hidden_layers[layer])),
                    key=lambda item: item[1].tag,
                )
                for parent in parents
            ]
            count = max(len(o) for o in ordered)
            groups = [
                AlignmentGroup(
                    layer,
                    i,
                    tuple(Member(k, *o[i]) for k, o in enumerate(ordered) if len(o) > i),
                )
                for i in range(count)
            ]
        aligned.append(groups)
    return aligned


def cluster_strength(cluster: Cluster) -> float:
    """Mean absolute value of the cluster's live incoming weights."""
    live = cluster.incoming_weights[cluster.incoming_mask]
    return float(np.abs(live).mean()) if live.size else 0.0


def _geometric_mean(values: np.ndarray) -> float:
    if np.any(values == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(values))))


def mate_cluster_strengths(group: AlignmentGroup, alpha: AlphaScheme) -> float:
    scaled = np.array(
        [alpha.coefficient(m.parent) * cluster_strength(m.cluster) for m in group.members]
    )
    if alpha.mode is AlphaMode.GEOMETRIC_MEAN:
        return _geometric_mean(scaled)
    return float(np.prod(scaled))


def mate_synapse_weights(group: AlignmentGroup, alpha: AlphaScheme) -> np.ndarray:
    """Combine the members' incoming weights position by position.

    Only members whose mask bit is set at a position contribute there;
    positions without contributors get 0.
    """
    masks = np.stack([m.cluster.incoming_mask for m in group.members])
    coeffs = np.array([alpha.coefficient(m.parent) for m in group.members])[:, None]
    weights = np.stack([m.cluster.incoming_weights for m in group.members]) * coeffs
    contributors = masks.sum(axis=0)
    present = contributors > 0

    if alpha.mode is AlphaMode.LITERAL_PRODUCT:
        return np.where(present, np.prod(np.where(masks, weights, 1.0), axis=0), 0.0)

    magnitude = np.abs(weights)
    has_zero = np.any(masks & (magnitude == 0.0), axis=0)
    with np.errstate(divide="ignore"):
        logs = np.where(masks & (magnitude > 0.0), np.log(np.where(magnitude > 0, magnitude, 1.0)), 0.0)
    mean_log = logs.sum(axis=0) / np.maximum(contributors, 1)
    combined = np.where(present & ~has_zero, np.exp(mean_log), 0.0)

    signs = np.sign(weights) * masks
    balance = signs.sum(axis=0)
    # masked rows are ordered by parent index, so argmax finds the lowest contributor
    first = np.argmax(masks, axis=0)
    tie_sign = signs[first, np.arange(masks.shape[1])]
    sign = np.where(balance > 0, 1.0, np.where(balance < 0, -1.0, tie_sign))
    sign = np.where(sign == 0.0, 1.0, sign)
    return np.where(present, sign * combined, 0.0)


def survival_probabilities(strengths, r: float) -> np.ndarray:
    """Per-item survival probabilities ``min(1, (r/100) * s / mean(s))``."""
    s = np.asarray(strengths, dtype=np.float64)
    if s.size == 0:
        raise ValueError("strengths must be nonempty")
    if np.any(s < 0.0) or not np.all(np.isfinite(s)):
        raise ValueError("strengths must be finite and nonnegative")
    mean = s.mean()
    if mean == 0.0:
        raise NoSignalError("all strengths are zero")
    return np.minimum(1.0, (r / 100.0) * s / mean)


def _offspring_tag(group: AlignmentGroup, used: set, pool: list[GeneTag]) -> GeneTag:
    """Tag for a surviving positional group.

    Prefers the lowest-index contributing parent; falls back to the next
    member, then to the first unused tag any parent holds in this layer, so
    tags stay unique within the layer.
    """
    for member in group.members:
        if member.cluster.tag not in used:
            return member.cluster.tag
    for tag in pool:
        if tag not in used:
            return tag
    raise AssertionError("more surviving groups than parent tags")


def synthesize_offspring(
    parents: Sequence[NetworkArchitecture],
    policy: MatingPolicy,
    env: EnvironmentalFactors,
    generation: int,
    seed: int,
    network_id: str | None = None,
) -> NetworkArchitecture:
    """Sample one offspring from ``parents``.

    The result may be degenerate (an empty hidden layer); that is a normal
    outcome, not an error. Check it with :func:`architecture.validate`.
    """
    _check_lineage(parents)
    if len(parents) != policy.m:
        raise ValueError(f"policy expects m={policy.m} parents, got {len(parents)}")

    rng = np.random.default_rng(seed)
    aligned = align_clusters(parents, policy)
    widths = parents[0].layer_widths
    layers: list[list[tuple[Cluster, AlignmentGroup]]] = []

    for layer, groups in enumerate(aligned):
        survivors: list[tuple[Cluster, AlignmentGroup]] = []
        strengths = np.array([mate_cluster_strengths(g, policy.alpha) for g in groups])
        if groups and strengths.sum() > 0.0:
            p = survival_probabilities(strengths, env.r_cluster)
            alive = rng.random(len(groups)) < p
        else:
            alive = np.zeros(len(groups), dtype=bool)

        if layer == 0:
            source_alive = np.ones(widths[0], dtype=bool)
        else:
            source_alive = np.zeros(widths[layer], dtype=bool)
            for cluster, _ in layers[-1]:
                source_alive[cluster.tag.ancestor_index] = True

        used: set[GeneTag] = set()
        pool = sorted({m.cluster.tag for g in groups for m in g.members})
        for group in (g for g, keep in zip(groups, alive) if keep):
            combined = mate_synapse_weights(group, policy.alpha)
            candidates = np.logical_or.reduce([m.cluster.incoming_mask for m in group.members])
            candidates &= source_alive
            idx = np.flatnonzero(candidates)
            magnitude = np.abs(combined[idx])
            if idx.size == 0 or magnitude.sum() == 0.0:
                continue
            keep = rng.random(idx.size) < survival_probabilities(magnitude, env.r_synapse)
            if not keep.any():
                continue
            mask = np.zeros(widths[layer], dtype=bool)
            mask[idx[keep]] = True
            if policy.alignment is Alignment.GENE_TAGGED:
                tag = group.key
            else:
                tag = _offspring_tag(group, used, pool)
            used.add(tag)
            survivors.append((Cluster(tag, mask, np.where(mask, combined, 0.0)), group))
        survivors.sort(key=lambda item: item[0].tag)
        layers.append(survivors)

    last = layers[-1]
    output = np.zeros((len(last), widths[-1]))
    for row, (_, group) in enumerate(last):
        output[row] = np.mean(
            [parents[m.parent].output_weights[m.position] for m in group.members], axis=0
        )

    return NetworkArchitecture(
        layer_widths=widths,
        hidden_layers=tuple(tuple(c for c, _ in layer) for layer in layers),
        output_weights=output,
        generation=generation,
        network_id=network_id if network_id is not None else f"g{generation}-{seed}",
        rng_seed=int(seed),
    )
