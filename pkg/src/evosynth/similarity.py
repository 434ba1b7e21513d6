"""Architectural similarity as percentage overlap of gene-tagged clusters."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .architecture import NetworkArchitecture
from .errors import (
    InsufficientPopulationError,
    LineageMismatchError,
    UndefinedOverlapError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OverlapReport:
    network_ids: tuple[str, ...]
    matrix: np.ndarray
    generation_average: float
    excluded: tuple[str, ...] = ()

    def to_csv(self) -> str:
        """Header of ids, one matrix row per network, then the average line."""
        buf = io.StringIO()
        buf.write(",".join(self.network_ids) + "\n")
        for row in self.matrix:
            buf.write(",".join(f"{v:.6f}" for v in row) + "\n")
        buf.write(f"generation_average,{self.generation_average:.6f}\n")
        return buf.getvalue()


def percent_overlap(a: NetworkArchitecture, b: NetworkArchitecture) -> float:
    """Fraction of ``a``'s clusters whose tag also exists in ``b``.

    Tags are matched layer by layer and pooled. Not symmetric.
    """
    if a.layer_widths != b.layer_widths:
        raise LineageMismatchError(
            f"cannot compare widths {a.layer_widths} and {b.layer_widths}"
        )
    total = a.cluster_count()
    if total == 0:
        raise UndefinedOverlapError(f"network {a.network_id!r} has no clusters")
    shared = sum(
        len(a.layer_tags(layer) & b.layer_tags(layer)) for layer in range(a.depth)
    )
    return shared / total


def overlap_matrix(population: Sequence[NetworkArchitecture]) -> OverlapReport:
    """Ordered-pair overlap matrix and its off-diagonal mean.

    Networks without any cluster are dropped (with a warning) since overlap
    is undefined for them; at least two must remain.
    """
    if len(population) < 2:
        raise InsufficientPopulationError(
            f"need at least 2 networks, got {len(population)}"
        )
    kept = [net for net in population if net.cluster_count() > 0]
    excluded = tuple(net.network_id for net in population if net.cluster_count() == 0)
    if excluded:
        logger.warning("excluding %d cluster-free networks from overlap: %s",
                       len(excluded), ", ".join(excluded))
    if len(kept) < 2:
        raise InsufficientPopulationError(
            f"only {len(kept)} network(s) with clusters out of {len(population)}"
        )

    n = len(kept)
    matrix = np.ones((n, n))
    for i, a in enumerate(kept):
        for j, b in enumerate(kept):
            if i != j:
                matrix[i, j] = percent_overlap(a, b)
    off_diagonal = matrix[~np.eye(n, dtype=bool)]
    return OverlapReport(
        network_ids=tuple(net.network_id for net in kept),
        matrix=matrix,
        generation_average=float(off_diagonal.mean()),
        excluded=excluded,
    )


def diversity_trajectory(generations: Sequence[Sequence[NetworkArchitecture]]) -> list[float]:
    averages = []
    for index, population in enumerate(generations):
        try:
            averages.append(overlap_matrix(population).generation_average)
        except (InsufficientPopulationError, UndefinedOverlapError, LineageMismatchError) as exc:
            raise type(exc)(f"generation {index}: {exc}") from exc
    return averages
