"""Exception types shared across the package."""


class MemkernelError(Exception):
    """Base class for all errors raised by memkernel."""


class InvalidInputError(MemkernelError, ValueError):
    """Input violates a documented precondition (shape, dimension, sign...)."""


class NumericalError(MemkernelError, ArithmeticError):
    """A computation produced non-finite values or hit a singular system."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class AdmissibilityError(InvalidInputError):
    """A memory function is negative somewhere or integrates to more than one."""


class PoleError(NumericalError):
    """A Laplace-domain resolvent was requested too close to a pole."""
