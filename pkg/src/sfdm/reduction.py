"""Slow-fast reduction around the spontaneous state.

The rate plane is re-expressed in eigen-coordinates ``X = (x, y)`` of the
Jacobian at the spontaneous state ``S0``: ``nu = S0 + P X``. The fast field
``f`` and slow field ``g`` are the components of ``P^-1 F(S0 + P X)``. The
approximate slow manifold is the zero set ``f(x*(y), y) = 0``, traced by
continuation from the origin, and the effective potential is
``G(y) = -int_0^y g(x*(z), z) dz``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .equilibria import (
    Equilibrium,
    decision_states,
    eigenvalues_2x2,
    find_equilibria,
    spontaneous_state,
)
from .errors import (
    ComplexEigenvalues,
    DegenerateFrame,
    OutOfRange,
    PreconditionError,
    RootLost,
)
from .model import ModelParams, RateState, drift, jacobian, sigmoid, sigmoid_prime

logger = logging.getLogger(__name__)

MANIFOLD_TOL = 1e-10
DEFAULT_POINTS = 2001
Y_MARGIN = 1.05


@dataclass(frozen=True)
class LinearizationFrame:
    """Eigen-coordinate chart centred on the spontaneous state.

    ``P`` holds unit eigenvectors as columns (fast direction first); each is
    oriented so that its second component is positive.
    """

    S0: RateState
    mu1: float
    mu2: float
    P: np.ndarray = field(repr=False)
    P_inv: np.ndarray = field(repr=False)
    epsilon: float
    beta_y: float

    @property
    def s0(self) -> np.ndarray:
        return self.S0.as_array()

    @property
    def a(self) -> np.ndarray:
        """Entries ``a_ij`` of ``P^-1``."""
        return self.P_inv

    def to_chart(self, nu) -> np.ndarray:
        """``X = P^-1 (nu - S0)`` for rates of shape ``(..., 2)``."""
        return (np.asarray(nu, dtype=float) - self.s0) @ self.P_inv.T

    def to_rates(self, X) -> np.ndarray:
        return self.s0 + np.asarray(X, dtype=float) @ self.P.T

    def y_of(self, nu) -> np.ndarray:
        return self.to_chart(nu)[..., 1]


def _unit_eigenvector(J, mu):
    c1 = np.array([J[0, 1], mu - J[0, 0]])
    c2 = np.array([mu - J[1, 1], J[1, 0]])
    v = c1 if np.linalg.norm(c1) >= np.linalg.norm(c2) else c2
    n = np.linalg.norm(v)
    if n == 0:
        # J is a multiple of the identity in this direction
        v = np.array([1.0, 0.0]) if abs(J[1, 0]) <= abs(J[0, 1]) else np.array([0.0, 1.0])
        n = 1.0
    v = v / n
    if abs(v[1]) > 1e-14:
        return v if v[1] > 0 else -v
    return v if v[0] > 0 else -v


def _diagonal_root(params: ModelParams, s: float) -> float:
    """Newton on ``s = phi(lambda1 + (w_plus - w_inhib) s)`` (the unbiased diagonal)."""
    k = params.w_plus - params.w_inhib
    for _ in range(100):
        z = params.lambda1 + k * s
        r = -s + sigmoid(z, params)
        ds = r / (1.0 - k * sigmoid_prime(z, params))
        s = float(s + ds)
        if abs(ds) <= 1e-15 * max(1.0, abs(s)):
            break
    return s


def _symmetric_frame(s: float, params: ModelParams) -> LinearizationFrame:
    # unbiased model on the diagonal: eigenvectors are exactly (1, 1) and (-1, 1)
    J = jacobian(np.array([s, s]), params)
    mu_sym, mu_anti = J[0, 0] + J[0, 1], J[0, 0] - J[0, 1]
    r = 1.0 / np.sqrt(2.0)
    v_sym, v_anti = np.array([r, r]), np.array([-r, r])
    if abs(mu_sym) >= abs(mu_anti):
        mu1, mu2, P = mu_sym, mu_anti, np.column_stack([v_sym, v_anti])
    else:
        mu1, mu2, P = mu_anti, mu_sym, np.column_stack([v_anti, v_sym])
    if abs(mu1 - mu2) < 1e-8:
        raise DegenerateFrame(f"repeated eigenvalue {mu1} at S0")
    P_inv = P.T.copy()
    return LinearizationFrame(
        S0=RateState(s, s),
        mu1=float(mu1),
        mu2=float(mu2),
        P=P,
        P_inv=P_inv,
        epsilon=abs(mu2) / abs(mu1),
        beta_y=params.beta * float(np.hypot(P_inv[1, 0], P_inv[1, 1])),
    )


def frame_at(S0, params: ModelParams) -> LinearizationFrame:
    """Closed-form eigen-decomposition of the Jacobian at a given equilibrium.

    For the unbiased model an equilibrium on the diagonal is re-solved on the
    diagonal and given the exactly swap-symmetric chart, so that mirrored
    quantities agree to the last bit.
    """
    s0 = S0.as_array() if isinstance(S0, RateState) else np.asarray(S0, dtype=float)
    if params.delta_lambda == 0 and abs(s0[0] - s0[1]) <= 1e-6:
        return _symmetric_frame(_diagonal_root(params, 0.5 * (s0[0] + s0[1])), params)
    J = jacobian(s0, params)
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if 0.25 * tr * tr - det < 0:
        raise ComplexEigenvalues(f"complex eigenvalues at S0 (w_plus={params.w_plus})")
    mu = eigenvalues_2x2(J).real
    mu = mu[np.argsort(-np.abs(mu), kind="stable")]
    mu1, mu2 = float(mu[0]), float(mu[1])
    if abs(mu1 - mu2) < 1e-8:
        raise DegenerateFrame(f"repeated eigenvalue {mu1} at S0")
    P = np.column_stack([_unit_eigenvector(J, mu1), _unit_eigenvector(J, mu2)])
    P_inv = np.linalg.inv(P)
    beta_y = params.beta * float(np.hypot(P_inv[1, 0], P_inv[1, 1]))
    return LinearizationFrame(
        S0=RateState.from_array(np.maximum(s0, 0.0)),
        mu1=mu1,
        mu2=mu2,
        P=P,
        P_inv=P_inv,
        epsilon=abs(mu2) / abs(mu1),
        beta_y=beta_y,
    )


def linearize_at_spontaneous(params: ModelParams, equilibria: Optional[list] = None):
    """Frame at the spontaneous equilibrium (found with :func:`find_equilibria` if not given)."""
    if equilibria is None:
        equilibria = find_equilibria(params)
    return frame_at(spontaneous_state(equilibria).location, params)


def fields(x, y, frame: LinearizationFrame, params: ModelParams):
    """Fast and slow fields ``(f, g)`` at chart coordinates ``(x, y)``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    nu = frame.to_rates(np.stack([x, y], axis=-1))
    H = drift(nu, params) @ frame.P_inv.T
    return H[..., 0], H[..., 1]


def fast_field(x, y, frame, params):
    return fields(x, y, frame, params)[0]


def slow_field(x, y, frame, params):
    return fields(x, y, frame, params)[1]


def _dfdx(x, y, frame, params):
    nu = frame.to_rates(np.array([x, y]))
    return float(frame.P_inv[0] @ jacobian(nu, params) @ frame.P[:, 0])


@dataclass
class SlowManifoldCurve:
    """Sampled approximate slow manifold ``x*(y)`` and its image in the rate plane.

    ``valid`` is judged on the stretch of the curve between the y-images of
    the two decision states (the part the reduced dynamics actually uses);
    ``violation`` holds the exit point nearest to ``y = 0`` if the curve
    leaves ``[0, nu_max]^2`` there. ``lost_at`` is set when continuation
    stopped early.
    """

    y: np.ndarray
    x_star: np.ndarray
    residual: np.ndarray
    nu: np.ndarray
    valid: bool
    violation: Optional[tuple] = None
    decision_y: dict = field(default_factory=dict)
    y_m: float = 0.0
    lost_at: Optional[float] = None

    @property
    def h(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.y)))

    def interpolant(self) -> PchipInterpolator:
        return PchipInterpolator(self.y, self.x_star, extrapolate=False)


def _solve_fast_root(y, x_pred, window, frame, params, tol):
    """Safeguarded Newton for ``f(., y) = 0`` with a bracket grown inside ``window``."""
    f = lambda x: float(fast_field(x, y, frame, params))
    f0 = f(x_pred)
    if abs(f0) <= tol:
        return x_pred, abs(f0)
    lo = hi = x_pred
    flo = fhi = f0
    d = min(1e-3 * max(1.0, abs(x_pred)), window)
    while True:
        lo, hi = x_pred - d, x_pred + d
        flo, fhi = f(lo), f(hi)
        if np.sign(flo) != np.sign(f0):
            hi, fhi = x_pred, f0
            break
        if np.sign(fhi) != np.sign(f0):
            lo, flo = x_pred, f0
            break
        if d >= window:
            return None, None
        d = min(2.0 * d, window)
    x = x_pred
    fx = f0
    for _ in range(200):
        dfx = _dfdx(x, y, frame, params)
        xn = x - fx / dfx if dfx != 0 else 0.5 * (lo + hi)
        if not (min(lo, hi) < xn < max(lo, hi)):
            xn = 0.5 * (lo + hi)
        fn = f(xn)
        if np.sign(fn) == np.sign(flo):
            lo, flo = xn, fn
        else:
            hi, fhi = xn, fn
        x, fx = xn, fn
        if abs(fx) <= tol:
            return x, abs(fx)
        if abs(hi - lo) <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            break
    return x, abs(fx)


def default_half_width(frame: LinearizationFrame, equilibria, params) -> float:
    dec = decision_states(equilibria)
    if dec:
        return Y_MARGIN * max(abs(float(frame.y_of(e.as_array()))) for e in dec.values())
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float) * params.nu_max
    return float(np.max(np.abs(frame.y_of(corners))))


def _decision_y(frame, equilibria):
    return {role: float(frame.y_of(e.as_array())) for role, e in decision_states(equilibria).items()}


def _mirror_symmetric(frame: LinearizationFrame, params: ModelParams) -> bool:
    """True when swapping the pools maps ``(x, y)`` to ``(x, -y)`` exactly."""
    s0 = frame.s0
    return (params.delta_lambda == 0 and s0[0] == s0[1]
            and frame.P[0, 0] == frame.P[1, 0] and frame.P[0, 1] == -frame.P[1, 1])


def solve_slow_manifold(
    frame: LinearizationFrame,
    params: ModelParams,
    y_m: Optional[float] = None,
    n_points: int = DEFAULT_POINTS,
    equilibria: Optional[list] = None,
    tol: float = MANIFOLD_TOL,
    strict: bool = False,
) -> SlowManifoldCurve:
    """Trace ``x*(y)`` on a uniform grid over ``[-y_m, y_m]``.

    Continuation runs outward from ``y = 0`` in both directions with a secant
    predictor. If no root can be bracketed within the jump guard the curve is
    truncated there (``lost_at``), or :class:`RootLost` is raised when
    ``strict`` is set.
    """
    if n_points < 3 or n_points % 2 == 0:
        raise PreconditionError("n_points must be odd and at least 3")
    if equilibria is None:
        equilibria = find_equilibria(params)
    if y_m is None:
        y_m = default_half_width(frame, equilibria, params)
    if not y_m > 0:
        raise PreconditionError("y_m must be positive")
    c = n_points // 2
    half = np.linspace(0.0, y_m, c + 1)
    # mirrored construction keeps y[c - k] == -y[c + k] exactly
    y = np.concatenate([-half[:0:-1], half])
    h = y[1] - y[0]
    xs = np.full(n_points, np.nan)
    res = np.full(n_points, np.nan)
    xs[c], res[c] = 0.0, 0.0
    lost = []
    mirror = _mirror_symmetric(frame, params)
    for direction in ((1,) if mirror else (1, -1)):
        k = c + direction
        while 0 <= k < n_points:
            prev = xs[k - direction]
            prev2 = xs[k - 2 * direction] if 0 <= k - 2 * direction < n_points else np.nan
            pred = 2 * prev - prev2 if np.isfinite(prev2) else prev
            window = 50.0 * h * max(1.0, abs(prev))
            root, r = _solve_fast_root(y[k], pred, window, frame, params, tol)
            if root is None or abs(root - prev) > window:
                lost.append(float(y[k]))
                if strict:
                    raise RootLost(f"slow manifold lost at y={y[k]:.6g}", y=float(y[k]))
                logger.warning("slow manifold continuation stopped at y=%.6g", y[k])
                break
            xs[k], res[k] = root, r
            k += direction
    if mirror:
        xs[:c], res[:c] = xs[c + 1:][::-1], res[c + 1:][::-1]
        lost += [-v for v in lost]
    keep = np.isfinite(xs)
    y, xs, res = y[keep], xs[keep], res[keep]
    nu = frame.to_rates(np.stack([xs, y], axis=-1))
    dec_y = _decision_y(frame, equilibria)
    valid, violation = _check_validity(y, nu, dec_y, params, lost)
    return SlowManifoldCurve(
        y=y,
        x_star=xs,
        residual=res,
        nu=nu,
        valid=valid,
        violation=violation,
        decision_y=dec_y,
        y_m=float(y_m),
        lost_at=min(lost, key=abs) if lost else None,
    )


def _check_validity(y, nu, dec_y, params, lost):
    if dec_y:
        lo, hi = min(min(dec_y.values()), 0.0), max(max(dec_y.values()), 0.0)
    else:
        lo, hi = y[0], y[-1]
    if any(lo <= yl <= hi for yl in lost):
        yl = min(lost, key=abs)
        return False, (yl, float("nan"), float("nan"))
    span = (y >= lo) & (y <= hi)
    bad = span & ~np.all((nu >= 0) & (nu <= params.nu_max), axis=1)
    if not bad.any():
        return True, None
    i = np.flatnonzero(bad)[np.argmin(np.abs(y[bad]))]
    return False, (float(y[i]), float(nu[i, 0]), float(nu[i, 1]))


def validity_check(params: ModelParams, n_points: int = DEFAULT_POINTS) -> bool:
    eqs = find_equilibria(params)
    frame = linearize_at_spontaneous(params, eqs)
    return solve_slow_manifold(frame, params, n_points=n_points, equilibria=eqs).valid


@dataclass
class Potential1D:
    """Effective potential ``G`` sampled on a uniform y-grid.

    ``g`` is the reduced drift at the nodes; when omitted it is taken as the
    numerical derivative ``-dG/dy``.
    """

    y: np.ndarray
    G: np.ndarray
    beta_y: float
    g: Optional[np.ndarray] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.G = np.asarray(self.G, dtype=float)
        if self.y.shape != self.G.shape or self.y.ndim != 1 or len(self.y) < 3:
            raise PreconditionError("y and G must be 1D arrays of equal length >= 3")
        if self.g is None:
            self.g = -np.gradient(self.G, self.y, edge_order=2)
        else:
            self.g = np.asarray(self.g, dtype=float)

    @property
    def h(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def D(self) -> float:
        """Diffusion coefficient ``beta_y^2 / 2``."""
        return 0.5 * self.beta_y**2

    def __call__(self, yq):
        return np.interp(yq, self.y, self.G)

    @classmethod
    def from_function(cls, func, y_m, n_points, beta_y, drift_func=None):
        y = np.linspace(-y_m, y_m, n_points)
        g = None if drift_func is None else drift_func(y)
        return cls(y, func(y), beta_y, g)


def build_potential(curve: SlowManifoldCurve, frame: LinearizationFrame, params: ModelParams):
    """Integrate ``-g(x*(y), y)`` outward from ``y = 0`` by trapezoids."""
    g = slow_field(curve.x_star, curve.y, frame, params)
    c = curve.center_index
    if _mirror_symmetric(frame, params) and len(g) == 2 * c + 1:
        g[:c] = -g[c + 1:][::-1]
        g[c] = 0.0
    G = np.zeros_like(g)
    dy = np.diff(curve.y)
    seg = -0.5 * dy * (g[1:] + g[:-1])
    G[c + 1 :] = np.cumsum(seg[c:])
    G[:c] = -np.cumsum(seg[:c][::-1])[::-1]
    return Potential1D(curve.y.copy(), G, frame.beta_y, g)


def reduced_drift(y, curve: SlowManifoldCurve, frame: LinearizationFrame, params: ModelParams):
    """``g(x*(y), y)`` with ``x*`` from monotone cubic interpolation of the curve."""
    yq = np.asarray(y, dtype=float)
    if np.any(yq < curve.y[0]) or np.any(yq > curve.y[-1]):
        raise OutOfRange(f"y outside [{curve.y[0]:.6g}, {curve.y[-1]:.6g}]")
    return slow_field(curve.interpolant()(yq), yq, frame, params)


@dataclass
class Reduction:
    """Bundle of every stage of the reduction for one parameter set."""

    params: ModelParams
    equilibria: list
    frame: LinearizationFrame
    curve: SlowManifoldCurve
    potential: Potential1D

    @property
    def correct_role(self) -> str:
        """Decision favoured by the stimulus (the pool with the larger input)."""
        return "decision-1" if self.params.lambda1 >= self.params.lambda2 else "decision-2"


def reduce(params: ModelParams, n_points: int = DEFAULT_POINTS, y_m: Optional[float] = None,
           grid_resolution: int = 40) -> Reduction:
    eqs = find_equilibria(params, grid_resolution)
    frame = linearize_at_spontaneous(params, eqs)
    curve = solve_slow_manifold(frame, params, y_m=y_m, n_points=n_points, equilibria=eqs)
    return Reduction(params, eqs, frame, curve, build_potential(curve, frame, params))
