"""Exception hierarchy shared by the library and the CLI."""


class ModsurfError(Exception):
    """Base class for all library errors."""


class GridError(ModsurfError, ValueError):
    """Bad grid construction parameters."""


class InvalidDimensionError(GridError):
    pass


class AlignmentError(GridError):
    """Cantor squares do not land on cell boundaries at the requested resolution."""


class GeometryError(ModsurfError, ValueError):
    """A requested region (ball, band, dyadic preimage) does not fit the grid."""


class ResolutionError(GeometryError):
    pass


class DegenerateBodyError(GeometryError):
    """Zero-area or otherwise invalid convex body."""


class SolverError(ModsurfError, RuntimeError):
    """Iterative solve failed to reach tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateGeometryError(SolverError):
    """Network is disconnected or short-circuited after node merging."""


class HarmonicityError(SolverError):
    """Discrete flux is not divergence free; the potential is not converged."""


class DegenerateBandError(GeometryError):
    """A level band contains no cells."""


class OrientationError(GeometryError):
    """Boundary image does not wind once around the target rectangle."""
