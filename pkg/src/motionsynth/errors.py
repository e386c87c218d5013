"""Exception types raised across the package."""


class MotionSynthError(Exception):
    """Base class for all package errors."""


class ZeroBone(MotionSynthError, ValueError):
    pass


class DegenerateBasis(MotionSynthError, ValueError):
    pass


class ProjectionDegenerate(MotionSynthError, ValueError):
    pass


class ShapeMismatch(MotionSynthError, ValueError):
    pass


class MissingGrad(MotionSynthError, RuntimeError):
    pass


class ParseError(MotionSynthError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class SkeletonMismatch(MotionSynthError, ValueError):
    pass


class FootJointsUndeclared(MotionSynthError, ValueError):
    pass


class EmptyDatabase(MotionSynthError, ValueError):
    pass


class NoMatch(MotionSynthError, LookupError):
    pass


class PlanInfeasible(MotionSynthError, RuntimeError):
    pass


class NonFiniteLoss(MotionSynthError, FloatingPointError):
    pass


class CheckpointMismatch(MotionSynthError, ValueError):
    pass


class EmptyEval(MotionSynthError, ValueError):
    pass
