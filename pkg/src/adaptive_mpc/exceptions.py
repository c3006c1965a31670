class InvalidInputError(ValueError):
    """Raised for malformed or non-finite inputs."""


class ModelInvalidError(RuntimeError):
    """Raised when the mass matrix fails to factor, i.e. the parameters are nonphysical."""


class RolloutDivergenceError(RuntimeError):
    """A rollout produced non-finite states.

    Attributes
    ----------
    index : int
        Index of the first step whose output was not finite.
    """

    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"rollout diverged at step {self.index}")


class OutOfPlanError(IndexError):
    """A feedback action was requested for a time outside the plan horizon."""


class ScenarioError(ValueError):
    """Schema violation in a model or scenario file.

    The message always names the offending field; ``line`` is filled when the
    parser can locate it.
    """

    def __init__(self, field, message, path=None, line=None):
        self.field = field
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(f"{where}field '{field}': {message}")
