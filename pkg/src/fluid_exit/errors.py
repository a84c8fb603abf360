"""Exception hierarchy shared by every module of the package."""


class FluidExitError(Exception):
    """Base class for all package errors."""


class ModelError(FluidExitError, ValueError):
    """The model description violates a structural requirement."""


class ZeroVelocity(ModelError):
    def __init__(self, state):
        super().__init__(f"velocity of state {state!r} is zero")
        self.state = state


class EmptySidePartition(ModelError):
    def __init__(self, side):
        super().__init__(f"no state with {side} velocity")
        self.side = side


class NegativeOffDiagonal(ModelError):
    def __init__(self, i, j, segment):
        super().__init__(f"generator entry ({i!r}, {j!r}) is negative in segment {segment}")
        self.i, self.j, self.segment = i, j, segment


class PositiveRowSum(ModelError):
    def __init__(self, i, segment):
        super().__init__(f"row {i!r} sums to a positive number in segment {segment}")
        self.i, self.segment = i, segment


class BadBreakpoints(ModelError):
    pass


class NegativeTime(FluidExitError, ValueError):
    pass


class BadTimeOrder(FluidExitError, ValueError):
    pass


class ShapeMismatch(FluidExitError, ValueError):
    pass


class SingularMatrix(FluidExitError, ArithmeticError):
    pass


class Overflow(FluidExitError, ArithmeticError):
    pass


class NoConvergence(FluidExitError, ArithmeticError):
    def __init__(self, max_iter, last_residual):
        super().__init__(
            f"no convergence after {max_iter} iterations (last residual {last_residual:.3e})"
        )
        self.max_iter = max_iter
        self.last_residual = last_residual


class FactorizationFailed(FluidExitError, ArithmeticError):
    pass


class DivergenceDetected(FluidExitError, ArithmeticError):
    pass


class NonPositiveArgument(FluidExitError, ValueError):
    pass


class PreconditionViolated(FluidExitError, ValueError):
    pass


class SideMismatch(FluidExitError, ValueError):
    pass


class HorizonTooSmall(UserWarning):
    """Censoring at the simulation horizon may bias an estimate beyond tolerance."""
