"""Exception types shared across the package."""


class ForgeError(Exception):
    """Base class for all package errors."""


class DomainError(ForgeError, ValueError):
    """An argument lies outside the domain of the operation."""


class PrecisionError(ForgeError, ArithmeticError):
    """A numerical procedure failed to reach the requested accuracy.

    Attributes
    ----------
    estimates : tuple of float
        The last two estimates produced before giving up, if available.
    """

    def __init__(self, message, estimates=()):
        super().__init__(message)
        self.estimates = tuple(estimates)


class SearchError(ForgeError, RuntimeError):
    """A root or eigenvalue search found no bracketing sign change."""


class DivergenceError(ForgeError, RuntimeError):
    """A fixed-point iteration stopped contracting.

    Attributes
    ----------
    factor : float
        The measured contraction factor that triggered the abort.
    """

    def __init__(self, message, factor=float("nan")):
        super().__init__(message)
        self.factor = factor


class ConditioningError(ForgeError, ArithmeticError):
    """A linear system is too poorly conditioned for the requested solve."""


class PreconditionError(ForgeError, ValueError):
    """Input violates a documented precondition."""


class ConfigurationError(ForgeError, ValueError):
    """Objects built from different configurations were combined."""


class ScheduleError(ForgeError, ValueError):
    """A sampling schedule leaves a required region empty."""


class DegenerateInputError(ForgeError, ValueError):
    """Input carries no information for the requested fit (e.g. all zeros)."""


class InstabilityError(ForgeError, RuntimeError):
    """A shooting search could not suppress an unstable direction.

    Attributes
    ----------
    growth_rate : float
        Measured growth rate of the residual.
    """

    def __init__(self, message, growth_rate=float("nan")):
        super().__init__(message)
        self.growth_rate = growth_rate
