"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid user input (parameters, grids, configuration)."""


class DimensionCapError(ValidationError):
    """Requested exact solve exceeds the configured Hilbert-space cap."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """Iterative solver did not reach the requested tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateStationaryError(NumericalError):
    """More than one stationary state detected."""


class AmbiguousDominanceError(NumericalError):
    """Two distinct eigenvalues compete for the largest real part."""


class StencilError(NumericalError):
    """Finite-difference stencil failed its step-halving consistency check."""


class FlatSignalError(NumericalError):
    """Intensity derivative statistically indistinguishable from zero."""


class DarkStateError(NumericalError):
    """Dark-state construction failed verification."""
