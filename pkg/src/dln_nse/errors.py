"""Exception types raised across the package."""


class DLNError(Exception):
    """Base class for all package errors."""


class DomainError(DLNError, ValueError):
    """A parameter lies outside its admissible range."""


class DimensionMismatch(DLNError, ValueError):
    """Elements combined in one expression do not share a space."""


class GridMismatch(DimensionMismatch):
    """Spectral fields live on different torus grids."""


class InadmissibleTimestep(DLNError, ValueError):
    """The time step is not below the admissible limit.

    Attributes
    ----------
    dt : float
        Requested time step.
    limit : float
        The computed upper bound the step had to stay below.
    """

    def __init__(self, dt, limit, message=None):
        self.dt = float(dt)
        self.limit = float(limit)
        if message is None:
            message = (
                f"time step dt={self.dt:.6g} is not below the admissible "
                f"limit C_dt={self.limit:.6g}"
            )
        super().__init__(message)


class NegativeDiscriminant(DLNError, ArithmeticError):
    """A discriminant of the certificate pipeline went negative.

    ``which`` is ``"outer"`` or ``"inner"``.
    """

    def __init__(self, which, value):
        self.which = which
        self.value = float(value)
        super().__init__(
            f"{which} discriminant is negative ({self.value:.3e}); dt is too "
            "close to the admissibility boundary for the working precision"
        )


class WindowTooShort(DomainError):
    """The averaging window r does not exceed 5 C_dt."""


class IndexWindowError(DomainError):
    """Index windows passed to a Gronwall bound are inconsistent."""


class NonConvergence(DLNError, RuntimeError):
    """The implicit stage solver hit its iteration cap."""

    def __init__(self, iterations, residual, step_index=None):
        self.iterations = int(iterations)
        self.residual = float(residual)
        self.step_index = step_index
        where = "" if step_index is None else f" at step {step_index}"
        super().__init__(
            f"stage solver did not converge{where} after {self.iterations} "
            f"iterations (last relative residual {self.residual:.3e})"
        )


class BlowUp(DLNError, RuntimeError):
    """The kinetic energy exceeded the configured ceiling."""

    def __init__(self, energy, ceiling, step_index=None):
        self.energy = float(energy)
        self.ceiling = float(ceiling)
        self.step_index = step_index
        super().__init__(
            f"energy {self.energy:.3e} exceeded ceiling {self.ceiling:.3e}"
            + ("" if step_index is None else f" at step {step_index}")
        )
