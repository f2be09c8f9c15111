"""Exception types shared across the package."""


class Real2SimError(Exception):
    """Base class for all package errors."""


class ConfigError(Real2SimError, ValueError):
    pass


class InvalidTaskError(Real2SimError, ValueError):
    pass


class EpisodeFinishedError(Real2SimError, RuntimeError):
    pass


class ArityError(Real2SimError, ValueError):
    pass


class InvalidNoiseError(Real2SimError, ValueError):
    pass


class ShapeError(Real2SimError, ValueError):
    pass


class NumericFaultError(Real2SimError, ArithmeticError):
    """Raised when a loss or gradient turns non-finite.

    ``name`` holds the offending parameter (or loss) name.
    """

    def __init__(self, name: str, message: str = ""):
        self.name = name
        super().__init__(message or f"non-finite values in {name!r}")


class PipelineOrderError(Real2SimError, ValueError):
    pass


class IncompleteEvaluationError(Real2SimError, ValueError):
    pass


class MissingDependencyError(Real2SimError, RuntimeError):
    pass
