"""Exception types shared across the package."""


class FeedbackTNError(Exception):
    """Base class for all package errors."""


class ParameterError(FeedbackTNError, ValueError):
    """Invalid physical or numerical parameter."""


class AccuracyError(FeedbackTNError, RuntimeError):
    """A numerical accuracy guard was violated (trace drift, positivity, ...)."""


class ConvergenceError(FeedbackTNError, RuntimeError):
    """An iterative solve failed to converge."""


class ResourceGuardError(FeedbackTNError, RuntimeError):
    """A memory/size guard would be exceeded."""


class ConfigError(FeedbackTNError, ValueError):
    """Run configuration could not be parsed or validated."""
