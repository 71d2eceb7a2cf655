"""Experiment orchestration: benchmark, importance, ablation, transferability, sensitivity."""

from popbench.analysis.ablation import AblationCell, ablation_layout, run_ablation
from popbench.analysis.benchmark import run_benchmark
from popbench.analysis.importance import ImportanceTable, permutation_importance, rank_features
from popbench.analysis.sensitivity import aggregate_dataset, run_sensitivity
from popbench.analysis.transfer import (
    OlsFit,
    RegionDescriptors,
    TransferRecord,
    compute_region_descriptors,
    ols_table,
    ols_univariate,
    run_transferability,
)

__all__ = [
    "AblationCell", "ImportanceTable", "OlsFit", "RegionDescriptors", "TransferRecord",
    "ablation_layout", "aggregate_dataset", "compute_region_descriptors", "ols_table", "ols_univariate",
    "permutation_importance", "rank_features", "run_ablation", "run_benchmark", "run_sensitivity",
    "run_transferability",
]
