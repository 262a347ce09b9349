"""Exception hierarchy shared by all solvers and controllers."""


class QuasiControlError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(QuasiControlError, ValueError):
    pass


class GeometryError(QuasiControlError, ValueError):
    pass


class ResolutionError(QuasiControlError, ValueError):
    pass


class DimensionError(QuasiControlError, ValueError):
    pass


class SolverDivergenceError(QuasiControlError, RuntimeError):
    """Newton failed to reach the residual tolerance on some time step."""

    def __init__(self, step, residual, message=None):
        self.step = step
        self.residual = residual
        super().__init__(message or f"Newton did not converge at step {step} (residual {residual:.3e})")


class SingularSystemError(QuasiControlError, RuntimeError):
    pass


class IllConditioningError(QuasiControlError, RuntimeError):
    """Conjugate gradient stagnated; ``trace`` holds the relative residual history."""

    def __init__(self, message, trace):
        self.trace = list(trace)
        super().__init__(message)


class LocalControlFailure(QuasiControlError, RuntimeError):
    """The relinearization fixed point or the nonlinear terminal check failed."""

    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(message)


class HypothesisViolation(QuasiControlError, ValueError):
    pass


class PlanningFailure(QuasiControlError, RuntimeError):
    pass


class StepFailure(QuasiControlError, RuntimeError):
    """A stair-case step produced a control deviation larger than the margin."""

    def __init__(self, message, step, deviation, eta, suggested_steps):
        self.step = step
        self.deviation = deviation
        self.eta = eta
        self.suggested_steps = suggested_steps
        super().__init__(message)


class TrackingFailure(QuasiControlError, RuntimeError):
    def __init__(self, message, history):
        self.history = list(history)
        super().__init__(message)


class ConstructionFailure(QuasiControlError, ValueError):
    pass


class ConfigError(QuasiControlError, ValueError):
    pass
