"""Exception taxonomy shared across the package."""


class ForgeError(Exception):
    """Base class for all salforge errors."""


class ShapeError(ForgeError):
    """Array shapes do not match what an operation requires."""


class InvalidParameterError(ForgeError):
    """An edit parameter violates its validity range."""


class InvalidPlanError(ForgeError):
    """A permutation or edit plan is malformed."""


class ConfigurationError(ForgeError):
    """A config object or file is inconsistent or incomplete."""


class InputError(ForgeError):
    """Corpus, dataset, or image input is unusable."""


class StateError(ForgeError):
    """Operation incompatible with the current model or store state."""


class ModeError(ForgeError):
    """Objective-mode misuse (e.g. adversarial update in fixed mode)."""


class CheckpointError(ForgeError):
    """Checkpoint file is missing, corrupt, or of the wrong kind."""


class TrainingError(ForgeError):
    """Training aborted (e.g. non-finite loss)."""


class SessionConflictError(ForgeError):
    """A second step was attempted on a session that is mid-step."""


class NotFoundError(ForgeError):
    """A stored record or artifact does not exist."""


class SessionNotFoundError(NotFoundError):
    """No session with the requested id."""


class JobNotFoundError(NotFoundError):
    """No job with the requested id."""


class PlanExecutionError(ForgeError):
    """A multi-region plan failed part way; carries the completed prefix."""

    def __init__(self, message: str, partial_plan=None, failed_index: int | None = None):
        super().__init__(message)
        self.partial_plan = partial_plan
        self.failed_index = failed_index
