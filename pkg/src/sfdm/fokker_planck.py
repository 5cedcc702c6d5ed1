"""Fokker-Planck solvers for the reduced (1D) and full (2D) dynamics.

Both solvers are vertex/cell finite volumes with exponentially fitted
(Scharfetter-Gummel) fluxes and backward Euler in time. For an interface
between cells ``L`` and ``R`` of width ``h`` the flux is

    J = (D / h) * (B(d) * p_L - B(-d) * p_R),    B(d) = d / (exp(d) - 1),

with ``d`` the potential drop across the interface divided by ``D``. The
implicit matrices are M-matrices with zero column sums, so every step keeps
the density non-negative and conserves mass for any ``dt > 0``. In 1D the
null-flux state of the scheme is exactly the Gibbs density on the grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import exprel

from .errors import DegenerateNoise, PreconditionError
from .model import ModelParams, drift
from .reduction import LinearizationFrame, Potential1D, SlowManifoldCurve
from .tridiag import BatchedThomas, solve

logger = logging.getLogger(__name__)

MASS_TOL = 1e-8


def trapezoid_weights(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    w = np.empty_like(y)
    d = np.diff(y)
    w[1:-1] = 0.5 * (d[1:] + d[:-1])
    w[0], w[-1] = 0.5 * d[0], 0.5 * d[-1]
    return w


@dataclass
class Density1D:
    """Nodal density on a uniform y-grid; the node weights are trapezoid weights."""

    y: np.ndarray
    q: np.ndarray
    outside_mass: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.y.shape != self.q.shape:
            raise PreconditionError("y and q must have the same shape")

    @property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.y)

    @property
    def mass(self) -> float:
        return float(self.weights @ self.q)

    def normalized(self) -> "Density1D":
        return Density1D(self.y, self.q / self.mass, self.outside_mass, self.t)

    def l1_distance(self, other: "Density1D") -> float:
        if other.y.shape != self.y.shape or not np.allclose(other.y, self.y):
            raise PreconditionError("densities live on different grids")
        return float(self.weights @ np.abs(self.q - other.q))

    def bin_masses(self, edges) -> np.ndarray:
        """Mass per interval of ``edges``, splitting each node's control volume linearly."""
        return np.diff(_cumulative_mass(self, np.asarray(edges, dtype=float)))


def _cumulative_mass(d: Density1D, at):
    # cumulative mass at the control-volume faces, interpolated linearly in between
    y = d.y
    faces = np.concatenate([[y[0]], 0.5 * (y[1:] + y[:-1]), [y[-1]]])
    cum = np.concatenate([[0.0], np.cumsum(d.weights * d.q)])
    return np.interp(at, faces, cum)


@dataclass
class Density2D:
    """Cell averages on a uniform ``n x n`` grid over ``[0, nu_max]^2``; ``p[i, j]`` at ``(nu1_i, nu2_j)``."""

    nu_max: float
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.ndim != 2 or self.p.shape[0] != self.p.shape[1]:
            raise PreconditionError("p must be a square 2D array")

    @property
    def n(self) -> int:
        return self.p.shape[0]

    @property
    def h(self) -> float:
        return self.nu_max / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def mass(self) -> float:
        return float(self.p.sum() * self.h**2)

    def mean(self) -> np.ndarray:
        c = self.centers
        m = self.p.sum(axis=1) @ c, self.p.sum(axis=0) @ c
        return np.array(m) * self.h**2 / self.mass


def _fitted_coefficients(drop, h, D):
    """``(D/h) B(drop)`` and ``(D/h) B(-drop)`` for potential drops scaled by ``D``."""
    return (D / h) / exprel(drop), (D / h) / exprel(-drop)


def _drift_coefficients(F, h, D):
    """Fitted flux coefficients for a drift ``F`` at the interfaces.

    ``D = 0`` degenerates to first-order upwinding.
    """
    F = np.asarray(F, dtype=float)
    if D == 0:
        return np.maximum(F, 0.0), np.maximum(-F, 0.0)
    return _fitted_coefficients(-F * h / D, h, D)


# ---------------------------------------------------------------- 1D


def stationary_density_1d(potential: Potential1D) -> Density1D:
    """Gibbs density ``exp(-2 G / beta_y^2) / Z`` normalized by trapezoids."""
    if not potential.beta_y > 0:
        raise DegenerateNoise("stationary density needs beta_y > 0")
    G = potential.G
    q = np.exp(-(G - G.min()) / potential.D)
    d = Density1D(potential.y, q)
    return d.normalized()


class FokkerPlanck1D:
    """Backward-Euler stepper for the reduced Fokker-Planck equation with no-flux ends.

    The interface potential drops are taken from the sampled ``G``, which is
    what makes the Gibbs density an exact discrete steady state.
    """

    def __init__(self, potential: Potential1D):
        if not potential.beta_y > 0:
            raise DegenerateNoise("1D Fokker-Planck needs beta_y > 0")
        self.potential = potential
        y = potential.y
        self.w = trapezoid_weights(y)
        D = potential.D
        h = np.diff(y)
        # zero-flux boundaries: only interior interfaces carry flux
        self.cp, self.cm = _fitted_coefficients(np.diff(potential.G) / D, h, D)
        self._dt = None

    def _matrix(self, dt):
        cp, cm = self.cp, self.cm
        diag = self.w.copy()
        diag[:-1] += dt * cp
        diag[1:] += dt * cm
        return -dt * cp, diag, -dt * cm

    def step(self, q, dt):
        if self._dt != dt:
            self._bands = self._matrix(dt)
            self._dt = dt
        lower, diag, upper = self._bands
        return solve(lower, diag, upper, self.w * q)

    def flux(self, q) -> np.ndarray:
        """Interface fluxes of ``q`` (length ``n - 1``)."""
        return self.cp * q[:-1] - self.cm * q[1:]


def _n_steps(dt, t_end):
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    if t_end < 0:
        raise PreconditionError("t_end must be non-negative")
    return int(round(t_end / dt))


def evolve_1d(
    q0: Density1D,
    potential: Potential1D,
    dt: float,
    t_end: float,
    observer: Optional[Callable[[int, float, np.ndarray], None]] = None,
) -> Density1D:
    """Advance ``q0`` to ``t_end`` (ms) with ``round(t_end / dt)`` implicit steps.

    ``observer(k, t, q)`` is called after every step.
    """
    if q0.y.shape != potential.y.shape or not np.allclose(q0.y, potential.y):
        raise PreconditionError("q0 must live on the potential's grid")
    if abs(q0.mass - 1.0) > MASS_TOL:
        raise PreconditionError(f"q0 is not normalized (mass {q0.mass:.12g})")
    solver = FokkerPlanck1D(potential)
    q = q0.q.copy()
    steps = _n_steps(dt, t_end)
    for k in range(steps):
        q = solver.step(q, dt)
        if observer is not None:
            observer(k + 1, q0.t + (k + 1) * dt, q)
    return Density1D(potential.y, q, t=q0.t + steps * dt)


def gaussian_1d(y, center: float, sigma: float) -> Density1D:
    y = np.asarray(y, dtype=float)
    return Density1D(y, np.exp(-0.5 * ((y - center) / sigma) ** 2)).normalized()


# ---------------------------------------------------------------- 2D


def implicit_sweep_operator(F_faces, h, D, dt):
    """Pre-factored ``I + dt A`` along the last axis.

    ``F_faces`` has shape ``(batch, n - 1)``: the drift component normal to
    each interior face. Boundary faces carry no flux.
    """
    cp, cm = _drift_coefficients(F_faces, h, D)
    cp, cm = cp / h, cm / h
    batch, nf = cp.shape
    diag = np.ones((batch, nf + 1))
    diag[:, :-1] += dt * cp
    diag[:, 1:] += dt * cm
    return BatchedThomas(-dt * cp, diag, -dt * cm)


class FokkerPlanck2D:
    """Dimension-wise split backward-Euler stepper for the full model on ``[0, nu_max]^2``.

    Each step solves one implicit sweep per direction; the sweep order
    alternates between steps (nu1 first on even steps).
    """

    def __init__(self, params: ModelParams, n: int = 256):
        self.params = params
        self.n = n
        self.h = params.nu_max / n
        self.D = 0.5 * params.beta**2
        c = (np.arange(n) + 0.5) * self.h
        faces = np.arange(1, n) * self.h
        # drift normal to the faces, on the face midpoints
        f1, c2 = np.meshgrid(faces, c, indexing="ij")
        self.F1 = drift(np.stack([f1, c2], axis=-1), params)[..., 0].T  # (j, i-face)
        c1, f2 = np.meshgrid(c, faces, indexing="ij")
        self.F2 = drift(np.stack([c1, f2], axis=-1), params)[..., 1]  # (i, j-face)
        self._dt = None
        self.steps_taken = 0

    def cell_peclet(self) -> float:
        if self.D == 0:
            return float("inf")
        return float(max(np.abs(self.F1).max(), np.abs(self.F2).max()) * self.h / self.D)

    def _prepare(self, dt):
        if self._dt != dt:
            self._ops = (
                implicit_sweep_operator(self.F1, self.h, self.D, dt),
                implicit_sweep_operator(self.F2, self.h, self.D, dt),
            )
            self._dt = dt

    def sweep_nu1(self, p, dt):
        self._prepare(dt)
        return self._ops[0].solve(p.T).T

    def sweep_nu2(self, p, dt):
        self._prepare(dt)
        return self._ops[1].solve(p)

    def step(self, p, dt):
        if self.steps_taken % 2 == 0:
            p = self.sweep_nu2(self.sweep_nu1(p, dt), dt)
        else:
            p = self.sweep_nu1(self.sweep_nu2(p, dt), dt)
        self.steps_taken += 1
        return p


def evolve_2d(
    p0: Density2D,
    params: ModelParams,
    dt: float,
    t_end: float,
    observer: Optional[Callable[[int, float, np.ndarray], None]] = None,
) -> Density2D:
    if abs(p0.nu_max - params.nu_max) > 1e-12:
        raise PreconditionError("p0 grid does not match params.nu_max")
    if abs(p0.mass - 1.0) > MASS_TOL:
        raise PreconditionError(f"p0 is not normalized (mass {p0.mass:.12g})")
    solver = FokkerPlanck2D(params, p0.n)
    if solver.D > 0 and solver.cell_peclet() > 2:
        logger.info("cell Peclet number %.3g; exponential fitting keeps the scheme monotone",
                    solver.cell_peclet())
    p = p0.p.copy()
    steps = _n_steps(dt, t_end)
    for k in range(steps):
        p = solver.step(p, dt)
        if observer is not None:
            observer(k + 1, p0.t + (k + 1) * dt, p)
    return Density2D(p0.nu_max, p, t=p0.t + steps * dt)


def gaussian_2d(params: ModelParams, center, sigma: float, n: int = 256) -> Density2D:
    """Isotropic Gaussian bump sampled at cell centres and renormalized on the grid."""
    h = params.nu_max / n
    c = (np.arange(n) + 0.5) * h
    g1 = np.exp(-0.5 * ((c - center[0]) / sigma) ** 2)
    g2 = np.exp(-0.5 * ((c - center[1]) / sigma) ** 2)
    p = np.outer(g1, g2)
    return Density2D(params.nu_max, p / (p.sum() * h * h))


# ---------------------------------------------------------------- projections


def marginal_along_y(p: Density2D, frame: LinearizationFrame, y, subsample: int = 1) -> Density1D:
    """Bin the mass of each cell into the control volume of its slow coordinate.

    With ``subsample > 1`` every cell is split into ``subsample^2`` equal
    sub-cells before binning, which smooths the aliasing between the 2D cell
    size and the 1D node spacing. Mass landing outside ``[y[0], y[-1]]`` is
    returned in ``outside_mass``.
    """
    y = np.asarray(y, dtype=float)
    n, h = p.n, p.h
    s = int(subsample)
    offs = (np.arange(s) + 0.5) / s - 0.5
    base = p.centers
    m = p.p * h * h / (s * s)
    dens = np.zeros_like(y)
    outside = 0.0
    faces = np.concatenate([[y[0]], 0.5 * (y[1:] + y[:-1]), [y[-1]]])
    for o1 in offs:
        for o2 in offs:
            n1, n2 = np.meshgrid(base + o1 * h, base + o2 * h, indexing="ij")
            yy = frame.y_of(np.stack([n1, n2], axis=-1)).ravel()
            mm = m.ravel()
            inside = (yy >= y[0]) & (yy <= y[-1])
            outside += float(mm[~inside].sum())
            idx = np.clip(np.searchsorted(faces, yy[inside], side="right") - 1, 0, len(y) - 1)
            dens += np.bincount(idx, weights=mm[inside], minlength=len(y))
    w = trapezoid_weights(y)
    return Density1D(y, dens / w, outside_mass=outside, t=p.t)


def moment(q: Density1D, curve: SlowManifoldCurve, frame: LinearizationFrame,
           test_function: Callable) -> float:
    """Quadrature of ``test_function`` along the mapped slow manifold weighted by ``q``."""
    if q.y.shape != curve.y.shape or not np.allclose(q.y, curve.y):
        raise PreconditionError("density and curve must share the y-grid")
    nu = frame.to_rates(np.stack([curve.x_star, curve.y], axis=-1))
    values = np.asarray(test_function(nu), dtype=float)
    if values.shape == ():
        values = np.full(len(q.y), float(values))
    return float(q.weights @ (values * q.q))


def moment_2d(p: Density2D, test_function: Callable) -> float:
    c = p.centers
    n1, n2 = np.meshgrid(c, c, indexing="ij")
    values = np.asarray(test_function(np.stack([n1, n2], axis=-1)), dtype=float)
    return float((values * p.p).sum() * p.h**2)


@dataclass
class MarginalComparison:
    """Reduced density against the y-marginal of the full density at one time.

    ``l1`` includes the 2D mass whose slow coordinate falls outside the 1D grid.
    """

    q_1d: Density1D
    q_2d: Density1D
    l1: float
    outside_mass: float


def compare_marginals(params: ModelParams, t_end: float = 200.0, sigma: float = 0.3,
                      n: int = 256, dt_2d: float = 0.1, n_points: int = 2001,
                      dt_1d: float = 0.01, subsample: int = 16, reduction=None) -> MarginalComparison:
    """Evolve matching Gaussian starts in 2D and 1D and compare the y-densities.

    The 2D start is an isotropic Gaussian of width ``sigma`` (rate units) at
    the spontaneous state; the 1D start is its image along the slow
    coordinate, a Gaussian of width ``sigma * |row 2 of P^-1|`` at ``y = 0``.
    """
    from .reduction import reduce

    r = reduction if reduction is not None else reduce(params, n_points=n_points)
    frame, pot = r.frame, r.potential
    q0 = gaussian_1d(pot.y, 0.0, sigma * float(np.hypot(*frame.P_inv[1])))
    q1 = evolve_1d(q0, pot, dt_1d, t_end)
    p2 = evolve_2d(gaussian_2d(params, frame.s0, sigma, n), params, dt_2d, t_end)
    m = marginal_along_y(p2, frame, pot.y, subsample=subsample)
    # 2D mass beyond the 1D domain is unmatched and counts in full
    return MarginalComparison(q1, m, m.l1_distance(q1) + m.outside_mass, m.outside_mass)
