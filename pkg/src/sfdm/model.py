"""Two-pool rate model: parameters, sigmoid response, drift and Jacobian.

The deterministic part of the dynamics is

    dnu/dt = F(nu) = -nu + Phi(Lambda + W nu)

with ``Lambda = (lambda1, lambda1 - delta_lambda)`` and the connectivity
``W = [[w_plus, -w_inhib], [-w_inhib, w_plus]]``. All functions accept either
a :class:`RateState` or an array whose last axis has length 2, so they can be
evaluated on whole grids at once.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PreconditionError

#: exponent clamp for the logistic; exp(500) is finite in double precision
EXP_CLAMP = 500.0


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the rate model and its state-space box.

    ``w_inhib`` is the magnitude of the cross-inhibition: the off-diagonal
    connectivity entries are ``-w_inhib``. Passing a negative value turns the
    cross-coupling excitatory, which is only meant for sensitivity checks.
    """

    lambda1: float = 33.0
    delta_lambda: float = 1e-3
    w_plus: float = 2.5695
    w_inhib: float = 1.9
    beta: float = 3e-3
    nu_c: float = 15.0
    b: float = 0.25
    alpha: float = 11.1
    nu_max: float = 20.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise PreconditionError(f"{f.name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise PreconditionError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if self.nu_c <= 0:
            raise PreconditionError("nu_c must be positive")
        if self.b <= 0:
            raise PreconditionError("b must be positive")
        if self.beta < 0:
            raise PreconditionError("beta must be non-negative")
        if self.delta_lambda < 0:
            raise PreconditionError("delta_lambda must be non-negative")
        if self.nu_max <= self.nu_c:
            raise PreconditionError("nu_max must exceed nu_c so the attractors are interior")

    @property
    def lambda2(self) -> float:
        return self.lambda1 - self.delta_lambda

    @property
    def stimuli(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2])

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise PreconditionError(f"unknown ModelParams keys: {', '.join(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise PreconditionError("ModelParams JSON must be an object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ModelParams":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class RateState:
    """A point ``(nu1, nu2)`` of the non-negative rate quadrant."""

    nu1: float
    nu2: float

    def __post_init__(self):
        for name in ("nu1", "nu2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise PreconditionError(f"{name} must be finite")
            if value < 0:
                raise PreconditionError(f"{name} must be non-negative, got {value}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.nu1, self.nu2])

    @classmethod
    def from_array(cls, v) -> "RateState":
        return cls(float(v[0]), float(v[1]))


@dataclass(frozen=True)
class ConnectivityMatrix:
    w11: float
    w12: float
    w21: float
    w22: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.w11, self.w12], [self.w21, self.w22]])


def connectivity(params: ModelParams) -> ConnectivityMatrix:
    return ConnectivityMatrix(
        w11=params.w_plus, w12=-params.w_inhib, w21=-params.w_inhib, w22=params.w_plus
    )


def _as_rates(state) -> np.ndarray:
    if isinstance(state, RateState):
        return state.as_array()
    nu = np.asarray(state, dtype=float)
    if nu.shape[-1:] != (2,):
        raise PreconditionError(f"rate array must have trailing axis of length 2, got {nu.shape}")
    return nu


def sigmoid(z, params: ModelParams):
    """Logistic response ``nu_c / (1 + exp(-b z + alpha))``."""
    arg = np.clip(-params.b * np.asarray(z, dtype=float) + params.alpha, -EXP_CLAMP, EXP_CLAMP)
    return params.nu_c / (1.0 + np.exp(arg))


def sigmoid_prime(z, params: ModelParams):
    phi = sigmoid(z, params)
    return params.b * phi * (1.0 - phi / params.nu_c)


def synaptic_input(state, params: ModelParams) -> np.ndarray:
    """Total input ``z_i = lambda_i + w_i1 nu1 + w_i2 nu2`` to each pool."""
    nu = _as_rates(state)
    W = connectivity(params).as_array()
    # explicit products rather than a matmul, so results do not depend on batch
    # shape; self term first in each pool keeps the unbiased model exactly swap-symmetric
    n1, n2 = nu[..., 0], nu[..., 1]
    lam = params.stimuli
    z1 = lam[0] + (W[0, 0] * n1 + W[0, 1] * n2)
    z2 = lam[1] + (W[1, 1] * n2 + W[1, 0] * n1)
    return np.stack([z1, z2], axis=-1)


def drift(state, params: ModelParams) -> np.ndarray:
    nu = _as_rates(state)
    return -nu + sigmoid(synaptic_input(nu, params), params)


def jacobian(state, params: ModelParams) -> np.ndarray:
    """Jacobian of :func:`drift`; shape ``(..., 2, 2)``.

    Row ``i`` is ``-e_i + phi'(z_i) * W[i, :]``.
    """
    nu = _as_rates(state)
    W = connectivity(params).as_array()
    dphi = sigmoid_prime(synaptic_input(nu, params), params)
    return -np.eye(2) + dphi[..., :, None] * W
