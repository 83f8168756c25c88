"""Exception types raised across the package.

Each solver failure mode has its own class so the CLI can map it to a stable
exit code.
"""


class DivSolveError(Exception):
    """Base class for all package errors."""


class SizeLimitExceeded(DivSolveError):
    pass


class GradientFieldDetected(DivSolveError):
    def __init__(self, message, decision=None):
        super().__init__(message)
        self.decision = decision


class GradientFieldIncompatible(DivSolveError):
    def __init__(self, message, compatibility):
        super().__init__(message)
        self.compatibility = compatibility


class FailedTransversality(DivSolveError):
    pass


class IllConditioned(DivSolveError):
    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class NoRealSingularScaling(DivSolveError):
    pass


class BackendRejected(DivSolveError):
    pass


class ConfigError(DivSolveError):
    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class ExprSyntaxError(DivSolveError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprSyntaxError):
    pass


class EvaluationDomainError(DivSolveError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class HypothesisViolation(DivSolveError, ValueError):
    """An exponent precondition fails; the message quotes the hypothesis."""
