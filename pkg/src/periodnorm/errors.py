"""Exception hierarchy shared by all modules."""


class PeriodNormError(Exception):
    """Base class for every error raised by the package."""


# expression language

class ParseError(PeriodNormError):
    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(set(expected)))
        detail = f"{message} at byte {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownIdentifierError(ParseError):
    def __init__(self, name, offset, known=()):
        self.name = name
        super().__init__(f"unknown identifier {name!r}", offset, known)


class DifferentiationError(PeriodNormError):
    pass


class EvaluationDomainError(PeriodNormError, ArithmeticError):
    """Raised when a subexpression is evaluated outside its real domain."""

    def __init__(self, message, subtree=None):
        self.subtree = subtree
        if subtree is not None:
            message = f"{message} in subexpression '{subtree}'"
        super().__init__(message)


# pointwise calculus

class EquilibriumError(PeriodNormError, ArithmeticError):
    pass


class SingularGradientError(PeriodNormError, ArithmeticError):
    pass


class TangencyError(PeriodNormError, ArithmeticError):
    pass


class GuardViolation(PeriodNormError, ArithmeticError):
    def __init__(self, construction, message):
        self.construction = construction
        super().__init__(f"[{construction}] {message}")


class FieldError(PeriodNormError):
    """Invalid field definition (non-positive RIF sample, unknown builtin, ...)."""


# integration and cycles

class IntegrationError(PeriodNormError):
    pass


class StepUnderflowError(IntegrationError):
    pass


class NotPeriodicError(IntegrationError):
    pass


class AmbiguousReturnError(NotPeriodicError):
    def __init__(self, message, candidates):
        self.candidates = list(candidates)
        super().__init__(message)


class ClosureError(IntegrationError):
    pass


# period analysis / configuration

class ScanError(PeriodNormError):
    pass


class LevelError(PeriodNormError):
    """A requested energy level cannot be located on the anchor ray."""


class ConfigError(PeriodNormError):
    pass


class EmptySampleError(PeriodNormError):
    """Every sample of a verification region was rejected by a guard."""
