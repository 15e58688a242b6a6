"""Exception hierarchy shared by all modules."""


class CollarCapError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CollarCapError, ValueError):
    """A point lies outside the domain of a map or chart."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class RangeError(CollarCapError, ValueError):
    """A coordinate is outside its declared band or validity radius."""


class SingularityError(CollarCapError, ValueError):
    """Polar angle requested at the center of a blow-up."""


class EscapeError(CollarCapError):
    """A trajectory left its declared band before the requested time."""

    def __init__(self, message, exit_time, exit_point):
        super().__init__(message)
        self.exit_time = exit_time
        self.exit_point = exit_point


class StructureError(CollarCapError):
    """Saddle or boundary structure of a strip does not match expectations."""


class ConstructionError(CollarCapError):
    """Cap construction failed its own consistency checks."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NotClosedError(CollarCapError):
    """An orbit did not return to its section within the time cap."""


class CoverageError(CollarCapError):
    """No chart of the atlas contains the point."""


class SeamError(CollarCapError):
    """Tangent evaluation kept hitting a chart seam after perturbation."""


class SpecError(CollarCapError, ValueError):
    """Inconsistent surface or run specification."""


class ClassificationError(CollarCapError):
    """Orbit does not circle a single elliptic center."""
