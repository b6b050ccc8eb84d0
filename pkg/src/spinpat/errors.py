"""Exception hierarchy shared by all modules."""


class SpinPatError(Exception):
    """Base class for package errors."""


class ValidationError(SpinPatError, ValueError):
    """Invalid input or configuration."""


class DomainError(SpinPatError, ValueError):
    """Argument outside the domain where a closed form is defined."""


class NumericalError(SpinPatError, ArithmeticError):
    """A numerical procedure failed (no convergence, singular system...)."""


class NoCrossingError(DomainError):
    pass


class UnreachableFieldError(DomainError):
    pass


class UnresolvableLineError(NumericalError):
    """A requested resonance could not be located in the search range."""


class SteadyStateMultiplicityError(NumericalError):
    def __init__(self, kernel_dim, message=None):
        self.kernel_dim = kernel_dim
        super().__init__(message or f"steady state not unique: kernel dimension {kernel_dim}")


class NoSteadyStateError(NumericalError):
    pass


class FitFailure(NumericalError):
    def __init__(self, message, residual_norm=float("nan")):
        self.residual_norm = residual_norm
        super().__init__(f"{message} (residual norm {residual_norm:.4g})")


class MissingReferenceError(NumericalError):
    def __init__(self, message, B=None):
        self.B = B
        super().__init__(message)
