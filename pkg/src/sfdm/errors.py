"""Exception hierarchy.

Every numerical failure raised by the library derives from :class:`SFDMError`
so the CLI can map it to a single exit code and report the class name.
"""


class SFDMError(Exception):
    """Base class for library errors."""


class PreconditionError(SFDMError, ValueError):
    """An operation was called with inputs violating its contract."""


class NoConvergence(SFDMError):
    """No Newton seed converged to an equilibrium."""

    def __init__(self, message, seeds_converged=0, w_plus=None):
        super().__init__(message)
        self.seeds_converged = seeds_converged
        self.w_plus = w_plus


class Marginal(SFDMError):
    """An eigenvalue has zero real part within tolerance (near a bifurcation)."""


class ComplexEigenvalues(SFDMError):
    """The Jacobian at the spontaneous state has complex eigenvalues."""


class DegenerateFrame(SFDMError):
    """The two eigenvalues at the spontaneous state coincide."""


class RootLost(SFDMError):
    """Slow-manifold continuation could not bracket a root of the fast field."""

    def __init__(self, message, y=None):
        super().__init__(message)
        self.y = y


class OutOfRange(SFDMError, ValueError):
    """A coordinate fell outside the sampled grid."""


class DegenerateNoise(SFDMError):
    """An operation needing positive noise received zero noise amplitude."""


class DegenerateInterval(SFDMError, ValueError):
    """Interval endpoints coincide."""


class NoWells(SFDMError):
    """The potential has no interior extrema, so no decision wells exist."""


class LinearSolveFailure(SFDMError):
    """A tridiagonal solve produced non-finite values."""
