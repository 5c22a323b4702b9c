"""Exception hierarchy.

Every error carries a ``code`` naming the failure kind; the CLI and the
report writer surface that code rather than the Python class name.
"""


class CondiffError(Exception):
    code = "Error"

    def __init__(self, message="", **payload):
        super().__init__(message)
        self.payload = payload


# expr
class ExprSyntaxError(CondiffError):
    code = "SyntaxError"

    def __init__(self, message, position, expected=()):
        super().__init__(f"{message} at position {position}"
                         + (f"; expected {', '.join(expected)}" if expected else ""),
                         position=position, expected=tuple(expected))
        self.position = position
        self.expected = tuple(expected)


class UnknownIdentifier(CondiffError):
    code = "UnknownIdentifier"


class ArityError(CondiffError):
    code = "ArityError"


class DomainError(CondiffError, ArithmeticError):
    code = "DomainError"


class DimensionMismatch(CondiffError, ValueError):
    code = "DimensionMismatch"


# autodiff
class NonDifferentiable(DomainError):
    code = "NonDifferentiable"


# projection
class SingularConstraint(CondiffError):
    code = "SingularConstraint"


class ZeroSum(CondiffError):
    code = "ZeroSum"


class WeightSumViolation(CondiffError):
    code = "WeightSumViolation"


class ZeroGradientComponent(CondiffError):
    code = "ZeroGradientComponent"


class NotAffine(CondiffError):
    code = "NotAffine"


class NoHomogeneity(CondiffError):
    code = "NoHomogeneity"


class ScalingUndefined(CondiffError):
    code = "ScalingUndefined"


# chessian
class UnsupportedScheme(CondiffError):
    code = "UnsupportedScheme"


class UnsupportedProblem(CondiffError):
    code = "UnsupportedProblem"


class NotStationary(CondiffError):
    code = "NotStationary"


class ConstraintViolated(CondiffError):
    code = "ConstraintViolated"


class DimensionGuard(CondiffError):
    code = "DimensionGuard"


class InternalConsistencyError(CondiffError):
    code = "InternalConsistencyError"


# classify
class NotSymmetric(CondiffError):
    code = "NotSymmetric"


class AmbiguousExclusion(CondiffError):
    code = "AmbiguousExclusion"


class InconclusiveMinorTest(CondiffError):
    code = "InconclusiveMinorTest"


class ChartFailure(CondiffError):
    code = "ChartFailure"


# solver
class SingularKKTMatrix(CondiffError):
    code = "SingularKKTMatrix"


class MaxIterations(CondiffError):
    code = "MaxIterations"


class NoConvergedPoints(CondiffError):
    code = "NoConvergedPoints"


# probio
class SchemaError(CondiffError):
    code = "SchemaError"

    def __init__(self, message, path="/"):
        super().__init__(f"{path}: {message}", path=path)
        self.path = path


class HomogeneityMismatch(CondiffError):
    code = "HomogeneityMismatch"
