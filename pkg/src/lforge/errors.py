"""Exception and warning types shared across the package."""


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotDaggerClosed(ValueError):
    """The span of the inputs is not closed under Hermitian conjugation."""


class StructureInconsistent(RuntimeError):
    """Recovered block data violate the *-algebra relations."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StructureInvalid(RuntimeError):
    """A computed structure fails its own invariants."""


class ResourceError(RuntimeError):
    """A dense computation was requested beyond the desk-scale guard."""


class ProbabilisticFailure(UserWarning):
    """Independent random probes disagreed on a discrete structure."""


class NumericalError(ArithmeticError):
    """A numerical step produced a degenerate result (for example a zero-mass probe block)."""
