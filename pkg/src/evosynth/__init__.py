"""Multi-parent evolutionary synthesis of sparse networks and cluster-overlap similarity."""

from .architecture import (
    Cluster,
    GeneTag,
    NetworkArchitecture,
    StorageReport,
    Verdict,
    ancestor_architecture,
    deserialize,
    serialize,
    storage_size,
    validate,
)
from .similarity import OverlapReport, diversity_trajectory, overlap_matrix, percent_overlap
from .synthesis import (
    Alignment,
    AlphaMode,
    AlphaScheme,
    EnvironmentalFactors,
    MatingPolicy,
    synthesize_offspring,
)

__version__ = "0.1.0"
