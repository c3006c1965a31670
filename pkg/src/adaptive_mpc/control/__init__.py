"""Trajectory optimization and the execution-time feedback law."""

from .costs import (
    EXPLORE,
    TASK,
    CostDerivatives,
    CostSpec,
    cost_derivatives,
    diagonal_cost,
    explore_cost,
    objective,
    task_cost,
)
from .estimator import ILQRController
from .ilqr import IlqrOptions, IlqrSolution, feedback_action, ilqr_solve, lqr_seed

__all__ = [
    "EXPLORE",
    "TASK",
    "CostDerivatives",
    "CostSpec",
    "cost_derivatives",
    "diagonal_cost",
    "explore_cost",
    "objective",
    "task_cost",
    "ILQRController",
    "IlqrOptions",
    "IlqrSolution",
    "feedback_action",
    "ilqr_solve",
    "lqr_seed",
]
