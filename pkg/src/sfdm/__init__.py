"""Slow-fast reduction of a two-pool stochastic rate model of binary decisions.

The pipeline runs from the 2D rate equations down to a 1D effective potential,
its Fokker-Planck dynamics and the behavioral observables (performance and
reaction time). 2D Fokker-Planck solves and Monte Carlo ensembles serve as
independent cross-checks.
"""

from .errors import (
    ComplexEigenvalues,
    DegenerateFrame,
    DegenerateInterval,
    DegenerateNoise,
    LinearSolveFailure,
    Marginal,
    NoConvergence,
    NoWells,
    OutOfRange,
    PreconditionError,
    RootLost,
    SFDMError,
)
from .model import (
    ConnectivityMatrix,
    ModelParams,
    RateState,
    connectivity,
    drift,
    jacobian,
    sigmoid,
    sigmoid_prime,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexEigenvalues",
    "ConnectivityMatrix",
    "DegenerateFrame",
    "DegenerateInterval",
    "DegenerateNoise",
    "LinearSolveFailure",
    "Marginal",
    "ModelParams",
    "NoConvergence",
    "NoWells",
    "OutOfRange",
    "PreconditionError",
    "RateState",
    "RootLost",
    "SFDMError",
    "connectivity",
    "drift",
    "jacobian",
    "sigmoid",
    "sigmoid_prime",
]
