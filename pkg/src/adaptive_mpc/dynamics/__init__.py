"""Differentiable forward dynamics for 1-DOF-joint kinematic trees."""

from .api import (
    BodyJacobians,
    DynamicsTerms,
    StepDerivatives,
    body_jacobians,
    body_jacobians_batch,
    com_positions,
    compute_terms,
    forward_dynamics,
    resolve_theta,
    rollout,
    step,
    step_derivatives,
    step_derivatives_batch,
    step_state,
)
from .finite_diff import fd_step_derivatives
from .gradcheck import GradcheckReport, gradcheck
from .kernels import kernels_for
from .model import (
    PRISMATIC,
    REVOLUTE,
    GeneralizedState,
    JointSpec,
    LinkSpec,
    ModelSpec,
    ParamLayout,
    Trajectory,
    make_model,
    rpy_to_matrix,
)

__all__ = [
    "BodyJacobians",
    "DynamicsTerms",
    "GeneralizedState",
    "GradcheckReport",
    "JointSpec",
    "LinkSpec",
    "ModelSpec",
    "PRISMATIC",
    "ParamLayout",
    "REVOLUTE",
    "StepDerivatives",
    "Trajectory",
    "body_jacobians",
    "body_jacobians_batch",
    "com_positions",
    "compute_terms",
    "fd_step_derivatives",
    "forward_dynamics",
    "gradcheck",
    "kernels_for",
    "make_model",
    "resolve_theta",
    "rollout",
    "rpy_to_matrix",
    "step",
    "step_derivatives",
    "step_derivatives_batch",
    "step_state",
]
