"""salforge: saliency-guided regional photo edits with a realism guardrail.

The library learns to attenuate distractors or amplify subjects inside a
user-provided mask by predicting parameters for four classic photographic
operators, keeping the result plausible according to a learned realism
critic. Ships with training, a CLI (``forge``) and an HTTP service.
"""
from .errors import (
    CheckpointError,
    ConfigurationError,
    ForgeError,
    InputError,
    InvalidParameterError,
    InvalidPlanError,
    ModeError,
    PlanExecutionError,
    SessionConflictError,
    ShapeError,
    StateError,
    TrainingError,
)
from .types import (
    CANONICAL_OPERATORS,
    EditParams,
    EditPermutation,
    EditPlan,
    EditStep,
    ImageGrid,
    RegionMask,
    TrainingSample,
    all_full_permutations,
)

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_OPERATORS",
    "CheckpointError",
    "ConfigurationError",
    "EditParams",
    "EditPermutation",
    "EditPlan",
    "EditStep",
    "ForgeError",
    "ImageGrid",
    "InputError",
    "InvalidParameterError",
    "InvalidPlanError",
    "ModeError",
    "PlanExecutionError",
    "RegionMask",
    "SessionConflictError",
    "ShapeError",
    "StateError",
    "TrainingError",
    "TrainingSample",
    "all_full_permutations",
    "__version__",
]
