"""Exception hierarchy shared by all numerical modules."""


class OperSpectraError(Exception):
    """Base class for every error raised by this package."""


class NumericalFailure(OperSpectraError):
    """A computation could not meet its accuracy contract."""


class ConfigError(OperSpectraError):
    """Malformed or inconsistent input configuration."""


# path transport
class ClearanceViolation(NumericalFailure):
    pass


class StepUnderflow(NumericalFailure):
    pass


class DimensionMismatch(ConfigError):
    pass


class BasepointInsideCircle(ConfigError):
    pass


class PointOnPath(ConfigError):
    pass


# opers
class EvaluationAtPuncture(ConfigError):
    pass


class UnsealedConfig(ConfigError):
    pass


class DegenerateConfig(ConfigError):
    """Coincident punctures or an unusable constraint system."""


# monodromy
class ProductDefectExceeded(NumericalFailure):
    pass


class BadWord(ConfigError):
    pass


# real oper search
class NoConvergence(NumericalFailure):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SingularJacobian(NumericalFailure):
    pass


# invariant forms and sections
class IrreducibilityRequired(NumericalFailure):
    pass


class NotRealOper(NumericalFailure):
    pass


class StencilTooCoarse(ConfigError):
    pass


# abelian
class BranchPointCollision(ConfigError):
    pass


class QuadratureFailure(NumericalFailure):
    pass


class PathThroughBranchPoint(ConfigError):
    pass


class SheetMismatch(ConfigError):
    pass


class SingularPeriodSystem(NumericalFailure):
    pass


class StencilNearBranchPoint(ConfigError):
    pass
