"""Exception types shared across the package."""


class CkformsError(Exception):
    """Base class for all package errors."""


class DomainError(CkformsError):
    """A point lies outside the chart domain of a manifold."""


class SingularityError(CkformsError):
    """Division by a value below the machine floor threshold."""

    def __init__(self, value):
        super().__init__(f"division by near-zero value {value!r}")
        self.value = value


class GeometryError(CkformsError):
    """Metric is degenerate or otherwise geometrically invalid."""


class DegreeError(CkformsError):
    """Form degree out of range for the requested operation."""


class ChartExitError(CkformsError):
    """A curve left the chart with no transition map available."""


class SampleError(CkformsError):
    """Bad or empty sample configuration."""
