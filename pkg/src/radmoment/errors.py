"""Exception types shared across the package."""


class RadmomentError(Exception):
    """Base class for all package errors."""


class DomainError(RadmomentError, ValueError):
    """An input parameter is outside its admissible domain."""


class AccuracyError(RadmomentError, RuntimeError):
    """Two independent evaluation routes disagree beyond tolerance."""


class RealizabilityError(RadmomentError, ValueError):
    """Moment vector does not come from a nonnegative intensity.

    ``index`` identifies the offending moment (or table depth), ``cell``
    the mesh cell when raised inside the solver.
    """

    def __init__(self, message, index=None, cell=None):
        super().__init__(message)
        self.index = index
        self.cell = cell


class RealizabilityWarning(UserWarning):
    """A state was clamped back onto the realizable boundary."""


class SingularMatrixError(RadmomentError, RuntimeError):
    """Quasi-linear time matrix is numerically singular."""


class BlowUpDetected(RadmomentError, RuntimeError):
    """A run produced non-finite or non-realizable fields.

    Reported as a first-class outcome: the MPN model is expected to fail
    this way on strongly anisotropic data.
    """

    def __init__(self, message, time=None, cell=None):
        super().__init__(message)
        self.time = time
        self.cell = cell


class NewtonDivergence(RadmomentError, RuntimeError):
    """The implicit temperature solve did not converge."""

    def __init__(self, message, cell=None, residual=None):
        super().__init__(message)
        self.cell = cell
        self.residual = residual


class MeshMismatch(RadmomentError, ValueError):
    """Two outputs being compared do not share a mesh."""


class ParseError(RadmomentError, ValueError):
    """Malformed configuration document."""

    def __init__(self, message, line=None, key=None):
        super().__init__(message)
        self.line = line
        self.key = key


class ValidationError(RadmomentError, ValueError):
    """A configuration value violates its constraint."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnknownProblem(RadmomentError, KeyError):
    """Requested benchmark problem does not exist."""


class SteadyStateNotReached(RadmomentError, RuntimeError):
    """Steady-state iteration hit its step cap before converging."""
