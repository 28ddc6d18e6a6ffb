"""Stator design optimisation: weighted constraints, NSGA-II, Pareto and TBV selection."""

from .nsga2 import NSGA2, benchmark_problem, crowding_distance, hypervolume_2d, nondominated_sort
from .problem import (DEFAULT_OPERATING_POINTS, VARIANTS, Constraint, ConstraintSpec, DesignVariables,
                      EvaluatedCandidate, EvaluationSettings, Kind, OperatingPoint, VariableBounds,
                      candidate_from_values, evaluate_candidate, material_cost, variant_design)
from .run import (OptimizationConfig, OptimizationResult, load_optimization_config,
                  optimization_config_from_dict, run_optimization, write_optimization_outputs)
from .selection import (Economics, load_economics, pareto_front, pareto_mask, select_best,
                        tbv_score, tbv_terms)

__all__ = [
    "NSGA2", "benchmark_problem", "crowding_distance", "hypervolume_2d", "nondominated_sort",
    "DEFAULT_OPERATING_POINTS", "VARIANTS", "Constraint", "ConstraintSpec", "DesignVariables",
    "EvaluatedCandidate", "EvaluationSettings", "Kind", "OperatingPoint", "VariableBounds",
    "candidate_from_values", "evaluate_candidate", "material_cost", "variant_design",
    "OptimizationConfig", "OptimizationResult", "load_optimization_config",
    "optimization_config_from_dict", "run_optimization", "write_optimization_outputs",
    "Economics", "load_economics", "pareto_front", "pareto_mask", "select_best", "tbv_score", "tbv_terms",
]
