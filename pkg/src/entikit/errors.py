"""Exception hierarchy shared by every entikit module."""


class EntikitError(Exception):
    """Base class for all library errors."""


class InvalidInputError(EntikitError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class InvalidBoxError(EntikitError, ValueError):
    """A parameter box with min > max or a default outside its range."""


class DegenerateRangeError(EntikitError, ValueError):
    """Entitativity extremes coincide, so no normalized scale exists."""


class ValidationError(EntikitError, ValueError):
    """A scenario, file or configuration failed validation.

    ``violations`` holds one human-readable message per problem found.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class TooShortError(EntikitError, ValueError):
    """A track or group overlap is too short for the requested operation."""


class EstimationError(EntikitError, RuntimeError):
    """State estimation diverged for a track."""

    def __init__(self, message, agent_id=None):
        self.agent_id = agent_id
        super().__init__(message)


class DegenerateDataError(EntikitError, ValueError):
    """Zero variance where a statistic needs spread."""


class SingularDesignError(EntikitError, ValueError):
    """Regression design matrix is rank deficient."""


class InsufficientDataError(EntikitError, ValueError):
    """Too few stimuli or rows for the requested fit."""

    def __init__(self, message, stage=None):
        self.stage = stage
        super().__init__(message if stage is None else f"[{stage}] {message}")
