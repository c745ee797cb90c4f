"""Multi-stage smoothing estimators for time-varying networks."""

__version__ = "0.1.0"

from .core import (ProbMatrixSequence, SmoothConfig, SnapshotSequence, TimeGrid, TvSmoothError,
                   load_prob_sequence, load_snapshots, save_prob_sequence, save_snapshots)
from .lpoly import design_matrix, equiv_weights, smooth_sequence
from .nbhd import build_neighborhoods, neighborhood_smooth, pairwise_distance
from .pipeline import EstimateRequest, estimate, estimate_three_stage, estimate_two_stage, estimate_variant
from .tuning import CvGrid, cross_validate
from .metrics import rel_errors
from .simgen import GeneratorSpec, build_truth, run_benchmark, sample
from .analysis import (cluster_trajectories, polarization_score, trajectory_dissimilarity,
                       ward_cluster)

__all__ = [
    "ProbMatrixSequence", "SmoothConfig", "SnapshotSequence", "TimeGrid", "TvSmoothError",
    "load_prob_sequence", "load_snapshots", "save_prob_sequence", "save_snapshots",
    "design_matrix", "equiv_weights", "smooth_sequence",
    "build_neighborhoods", "neighborhood_smooth", "pairwise_distance",
    "EstimateRequest", "estimate", "estimate_three_stage", "estimate_two_stage", "estimate_variant",
    "CvGrid", "cross_validate", "rel_errors",
    "GeneratorSpec", "build_truth", "run_benchmark", "sample",
    "cluster_trajectories", "polarization_score", "trajectory_dissimilarity", "ward_cluster",
]
