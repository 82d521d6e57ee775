"""Sampling model-predictive planner with three separation constraint families."""

from .problem import (CONSTRAINT_TOL, DIST_EPS, VARIANTS, MpcProblem,
                      MpcSolution, MpcWeights, SolverParams, SolverStats,
                      check_constraints, md_floor, stage_cost, terminal_cost)
from .solver import solve

__all__ = [
    "CONSTRAINT_TOL", "DIST_EPS", "VARIANTS", "MpcProblem", "MpcSolution",
    "MpcWeights", "SolverParams", "SolverStats", "check_constraints",
    "md_floor", "stage_cost", "terminal_cost", "solve",
]
