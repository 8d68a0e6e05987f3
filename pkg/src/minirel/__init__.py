"""Minimum-representation fair clustering (MiniReL)."""

from .core import (ClusteringError, ClusteringProblem, ClusteringSolution, Dataset, FairnessSpec,
                   GroupStructure, InvalidArgumentError, clustering_cost, compute_beta,
                   fairness_metrics, lambda_count, representation_matrix)
from .driver import RunTrace, Strategy, fixed_point_check, minirel_run, unfair_baseline
from .flow import counting_bound, min_cost_flow, round_assignment, theoretical_bound
from .lloyd import lloyd_run
from .lp import LinearProgram, MixedBinaryProgram, solve_lp, solve_mbp
from .models import InfeasibleError, PrefixInfeasibleError, Variant, build_model, solve_exact
from .prefix import myopic_costs, solve_prefix

__version__ = "0.1.0"

__all__ = [
    "ClusteringError", "ClusteringProblem", "ClusteringSolution", "Dataset", "FairnessSpec",
    "GroupStructure", "InvalidArgumentError", "clustering_cost", "compute_beta", "fairness_metrics",
    "lambda_count", "representation_matrix", "RunTrace", "Strategy", "fixed_point_check",
    "minirel_run", "unfair_baseline", "counting_bound", "min_cost_flow", "round_assignment",
    "theoretical_bound", "lloyd_run", "LinearProgram", "MixedBinaryProgram", "solve_lp", "solve_mbp",
    "InfeasibleError", "PrefixInfeasibleError", "Variant", "build_model", "solve_exact",
    "myopic_costs", "solve_prefix",
]
