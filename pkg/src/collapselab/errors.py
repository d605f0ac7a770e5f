"""Exception taxonomy shared by all collapselab modules.

Two families matter for exit-code mapping in the command line front end:
``ValidationError`` (bad inputs or requests that exceed declared resource
bounds) and ``NumericalRegimeError`` (the computation left the regime in
which the discretization is trustworthy).
"""


class CollapseLabError(Exception):
    """Base class for all collapselab errors."""


class ValidationError(CollapseLabError):
    """Invalid parameters, inputs, or resource requests."""


class InvalidParameterError(ValidationError):
    """A physical parameter is out of range; names the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidStepError(ValidationError):
    """Nonpositive or nonfinite time step."""


class CapacityError(ValidationError):
    """Requested ensemble exceeds the configured step budget."""


class LowStatisticsError(ValidationError):
    """Not enough samples to report the requested estimate."""


class CoverageError(ValidationError):
    """Lattice does not cover the averaging region at the required density."""


class DegenerateKernelError(ValidationError):
    """Duplicate lattice nodes make the field kernel singular."""


class CollapsedWidthError(ValidationError):
    """Width parameter with nonpositive real part (unnormalizable state)."""


class PrecisionError(ValidationError):
    """Lattice resolution insufficient for the requested tolerance."""

    def __init__(self, message, required_resolution=None):
        self.required_resolution = required_resolution
        super().__init__(message)


class OverlapError(ValidationError):
    """Analytic branch requested for overlapping rigid balls."""


class KernelRegularizationError(CollapseLabError):
    """Regularized kernel matrix is not positive semidefinite."""

    def __init__(self, min_eigenvalue):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(
            "field kernel matrix is not positive semidefinite; most negative "
            f"eigenvalue {min_eigenvalue:.6e}"
        )


class NumericalRegimeError(CollapseLabError):
    """The run left the validity regime of the discretization."""


class DomainEscapeError(NumericalRegimeError):
    """Wave packet drifted too close to the grid boundary."""


class InstabilityError(NumericalRegimeError):
    """Norm drift in one step beyond anything the scheme can produce."""


class StepSizeError(NumericalRegimeError):
    """Step too large for the width dynamics; retry with smaller dt."""


class ResolutionError(NumericalRegimeError):
    """State structure fell below the grid resolution."""


class RegimeViolationWarning(UserWarning):
    """Post-hoc check found the run outside its declared regime."""
