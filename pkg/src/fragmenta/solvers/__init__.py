"""Reassembly strategies, selectable by stable name."""
from fragmenta.compatibility import Metric
from fragmenta.solvers.forest import ClusterForest
from fragmenta.solvers.greedy_tree import solve_greedy_tree
from fragmenta.solvers.lp import (
    DegenerateInstance, LpSolution, MatchConstraint, build_lp_constraints, match_weight,
    snap_to_grid, solve_lp, solve_lp_axis, solve_positions,
)
from fragmenta.solvers.placer import solve_placer

SOLVERS = {
    "gallagher": solve_greedy_tree,
    "paikin-tal": solve_placer,
    "yu-lp": solve_lp,
}

# compatibility metric each solver is paired with by default
DEFAULT_METRIC = {
    "gallagher": Metric.MGC,
    "paikin-tal": Metric.L1_PRED,
    "yu-lp": Metric.MGC,
}


def get_solver(name: str):
    try:
        return SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None


__all__ = [
    "ClusterForest", "DEFAULT_METRIC", "DegenerateInstance", "LpSolution", "MatchConstraint",
    "SOLVERS", "build_lp_constraints", "get_solver", "match_weight", "snap_to_grid",
    "solve_greedy_tree", "solve_lp", "solve_lp_axis", "solve_placer", "solve_positions",
]
