"""Approximate nearest-neighbor search where each query picks its own L_p metric."""

from .hnsw import HnswIndex, HnswParams, ScoredId, build, count_distance_evals, knn_search
from .io import Dataset, gen_synthetic, load_bvecs, load_fvecs, load_ivecs, subsample
from .metrics import MetricParam, Tier, lp_distance, lp_distance_pth_power, time_distance_kernel
from .oracle import GroundTruth, GroundTruthCache, brute_force_knn, recall
from .universal import (
    QueryStats,
    QueryTuple,
    UhnswConfig,
    idealized_recall,
    query,
    select_base_index,
    verify_candidates,
)

__all__ = [
    "Dataset",
    "GroundTruth",
    "GroundTruthCache",
    "HnswIndex",
    "HnswParams",
    "MetricParam",
    "QueryStats",
    "QueryTuple",
    "ScoredId",
    "Tier",
    "UhnswConfig",
    "brute_force_knn",
    "build",
    "count_distance_evals",
    "gen_synthetic",
    "idealized_recall",
    "knn_search",
    "load_bvecs",
    "load_fvecs",
    "load_ivecs",
    "lp_distance",
    "lp_distance_pth_power",
    "query",
    "recall",
    "select_base_index",
    "subsample",
    "time_distance_kernel",
    "verify_candidates",
]
