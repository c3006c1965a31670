"""Online system identification and model-predictive control over a
differentiable articulated rigid-body simulator.

Importing the package switches JAX to double precision; every kernel here
relies on float64 for its derivative checks.
"""

import jax

jax.config.update("jax_enable_x64", True)

from .exceptions import (  # noqa: E402
    InvalidInputError,
    ModelInvalidError,
    OutOfPlanError,
    RolloutDivergenceError,
    ScenarioError,
)

__version__ = "0.1.0"

__all__ = [
    "InvalidInputError",
    "ModelInvalidError",
    "OutOfPlanError",
    "RolloutDivergenceError",
    "ScenarioError",
]
