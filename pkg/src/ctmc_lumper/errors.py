"""Exception hierarchy shared by all modules."""


class LumperError(Exception):
    """Base class for every error raised by ctmc_lumper."""


class ValidationError(LumperError, ValueError):
    pass


class NegativeOffDiagonal(ValidationError):
    def __init__(self, i, j, value):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"negative off-diagonal rate L[{i}, {j}] = {value!r}")


class RowSumViolation(ValidationError):
    def __init__(self, row, residual):
        self.row, self.residual = row, residual
        super().__init__(f"row {row} sums to {residual!r}, not 0")


class DimensionMismatch(ValidationError):
    pass


# coarse-graining maps use "space" wording; same failure mode
SpaceMismatch = DimensionMismatch


class InvalidProbability(ValidationError):
    pass


class NonPositiveMeasure(ValidationError):
    pass


class NonPositiveMarginal(NonPositiveMeasure):
    pass


class UnknownLabel(ValidationError, KeyError):
    pass


class InvalidSize(ValidationError):
    pass


class NumericalError(LumperError, ArithmeticError):
    """Something went wrong inside a numerical routine."""


class NotIrreducible(NumericalError):
    pass


class SolveFailure(NumericalError):
    pass


class EigenFailure(NumericalError):
    pass


class ExpmFailure(NumericalError):
    pass


class NotStationary(NumericalError):
    pass


class UndefinedConditional(NumericalError):
    def __init__(self, label, message=None):
        self.label = label
        super().__init__(message or f"conditional measure undefined at macro-state {label!r} (zero marginal)")


class DegenerateRatio(NumericalError):
    pass


class TrajectoryTooShort(NumericalError):
    pass


class InsufficientDecay(NumericalError):
    pass


class InsufficientPoints(NumericalError):
    pass


class NonPositiveValue(NumericalError):
    pass


class GridMismatch(DimensionMismatch):
    pass


LengthMismatch = GridMismatch


class NonPositiveAlpha(ValidationError):
    pass


class MissingFit(LumperError):
    pass


class ConfigError(LumperError):
    pass
