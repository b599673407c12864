"""Exception types shared across the library."""


class GravHartreeError(Exception):
    """Base class for all library errors."""


class SolverError(GravHartreeError):
    """Iterative solver failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CollisionError(GravHartreeError):
    """Bodies came closer than the collision threshold."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class InvalidConfigurationError(GravHartreeError):
    """Initial data or parameters violate a precondition."""


class UnsupportedOrderError(GravHartreeError):
    """Requested expansion order / harmonic degree is not implemented."""


class OrthogonalityError(GravHartreeError):
    """Solvability condition violated; carries the offending inner product."""

    def __init__(self, message, inner_product=None):
        super().__init__(message)
        self.inner_product = inner_product


class ContractionError(GravHartreeError):
    """Fixed-point map failed to contract (suggests a larger start time)."""


class HorizonError(GravHartreeError):
    """Tail quadrature to infinity could not be estimated reliably."""


class PlacementError(GravHartreeError):
    """A soliton sits too close to the computational box boundary."""


class BasinError(GravHartreeError):
    """Newton iteration left the convergence basin; carries final norms."""

    def __init__(self, message, condition_norms=None):
        super().__init__(message)
        self.condition_norms = condition_norms


class SeparationError(GravHartreeError):
    """Solitons too close for the requested operation."""


class StepError(GravHartreeError):
    """Finite-difference step failed its consistency (Richardson) check."""


class RangeError(GravHartreeError):
    """Data does not span the range required by a fit."""
