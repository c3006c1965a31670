"""Online identification of unknown physical parameters."""

from .confidence import (
    ConfidenceScore,
    ObservationBatch,
    confidence_com,
    confidence_damping,
    confidence_inertia,
    confidence_mass,
    confidence_score,
    confidence_stiffness,
)
from .estimate import (
    METHODS,
    EstimateAccumulator,
    Mode,
    UpdateEvent,
    make_updater,
    update_estimate,
    update_naive,
    update_smooth,
    update_weighted,
)
from .estimator import OnlineSysID
from .fit import FitOptions, FitResult, fit_parameters
from .params import (
    JointDamping,
    JointStiffness,
    LinkComAxis,
    LinkInertiaAxis,
    LinkMass,
    SystemParams,
    make_params,
    params_from_model,
)

__all__ = [
    "ConfidenceScore",
    "ObservationBatch",
    "confidence_com",
    "confidence_damping",
    "confidence_inertia",
    "confidence_mass",
    "confidence_score",
    "confidence_stiffness",
    "METHODS",
    "EstimateAccumulator",
    "Mode",
    "UpdateEvent",
    "make_updater",
    "update_estimate",
    "update_naive",
    "update_smooth",
    "update_weighted",
    "OnlineSysID",
    "FitOptions",
    "FitResult",
    "fit_parameters",
    "JointDamping",
    "JointStiffness",
    "LinkComAxis",
    "LinkInertiaAxis",
    "LinkMass",
    "SystemParams",
    "make_params",
    "params_from_model",
]
