"""Design-based estimation of direct and indirect effects under K-nearest-neighbor interference."""

from .design import Design, JointTables, all_marginals, joint_probability, marginal_probability
from .estimators import (
    EffectEstimate,
    ExperimentData,
    PositivityError,
    Weights,
    estimate_a1,
    estimate_a2,
    estimate_all,
    ht_mean,
)
from .model import (
    DistanceMatrix,
    Exposure,
    KNeighborhoods,
    build_k_neighborhoods,
    canonical_exposure,
    classify_exposure,
    exposure_counts,
)

__version__ = "0.1.0"

__all__ = [
    "Design",
    "DistanceMatrix",
    "EffectEstimate",
    "ExperimentData",
    "Exposure",
    "JointTables",
    "KNeighborhoods",
    "PositivityError",
    "Weights",
    "all_marginals",
    "build_k_neighborhoods",
    "canonical_exposure",
    "classify_exposure",
    "estimate_a1",
    "estimate_a2",
    "estimate_all",
    "exposure_counts",
    "ht_mean",
    "joint_probability",
    "marginal_probability",
]
