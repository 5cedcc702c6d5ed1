"""Performance and reaction time from the effective potential.

For the reduced SDE ``dy = -G'(y) dt + beta_y dW`` with two absorbing levels
``a < b`` and ``D = beta_y^2 / 2``:

* splitting probability to the right:
  ``pi(y0) = int_a^y0 exp(G/D) / int_a^b exp(G/D)``
* mean exit time, solving ``D T'' - G' T' = -1`` with ``T(a) = T(b) = 0``:
  ``T(y0) = (1 - pi) int_a^y0 I_L / D + pi int_y0^b I_R / D`` with
  ``I_L(s) = int_a^s exp((G(u) - G(s))/D) du`` and ``I_R`` its mirror image.

At the noise levels of interest ``G/D`` varies by tens of e-folds across one
grid cell, so every integral (single and nested) is taken exactly for the
piecewise-linear interpolant of ``G`` and accumulated in log space.
Integrals are accumulated outward from ``y0``, which makes mirror-image
set-ups produce bit-identical halves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateInterval, DegenerateNoise, NoWells, OutOfRange
from .reduction import LinearizationFrame, Potential1D, SlowManifoldCurve


def _log_exprel(x):
    """``log((exp(x) - 1) / x)`` without overflow; 0 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    big = x > 30
    neg = x < -30
    mid = ~(big | neg) & (x != 0)
    out[big] = x[big] - np.log(x[big]) + np.log1p(-np.exp(-x[big]))
    out[neg] = -np.log(-x[neg]) + np.log1p(-np.exp(x[neg]))
    xm = x[mid]
    out[mid] = np.log(np.expm1(xm) / xm)
    return out


def _log_segments(dy, e0, e1):
    """``log int exp(e(u)) du`` over segments where ``e`` runs linearly from ``e0`` to ``e1``."""
    return np.log(dy) + e0 + _log_exprel(e1 - e0)


def _log_cumulative(dy, e):
    """Running ``log int_{z_0}^{z_k} exp(e)`` along nodes; first entry is ``-inf``."""
    seg = _log_segments(dy, e[:-1], e[1:])
    out = np.empty(len(e))
    out[0] = -np.inf
    acc = -np.inf
    for k, s in enumerate(seg):
        acc = np.logaddexp(acc, s)
        out[k + 1] = acc
    return out


def _restrict(potential: Potential1D, y0, y_left, y_right):
    """Nodes ``y_left .. y0 .. y_right`` with the interpolated potential."""
    if not y_left < y_right:
        raise DegenerateInterval(f"need y_left < y_right, got [{y_left}, {y_right}]")
    y = potential.y
    if y_left < y[0] - 1e-12 or y_right > y[-1] + 1e-12:
        raise OutOfRange("interval exceeds the potential grid")
    if not y_left <= y0 <= y_right:
        raise OutOfRange("start point outside the interval")
    inner = y[(y > y_left) & (y < y_right)]
    z = np.unique(np.concatenate([[y_left, y0, y_right], inner]))
    return z, np.interp(z, y, potential.G), int(np.searchsorted(z, y0))


def _outward(z, e, i0):
    """Log-integrals of ``exp(e)`` from ``z[i0]`` to each end, accumulated outward."""
    left = _log_cumulative(-np.diff(z[: i0 + 1][::-1]), e[: i0 + 1][::-1])[-1] if i0 > 0 else -np.inf
    right = _log_cumulative(np.diff(z[i0:]), e[i0:])[-1] if i0 < len(z) - 1 else -np.inf
    return left, right


def splitting_probability(potential: Potential1D, y0, y_left, y_right) -> float:
    """Probability of leaving ``[y_left, y_right]`` through ``y_right`` when started at ``y0``."""
    if not potential.beta_y > 0:
        raise DegenerateNoise("splitting probability needs beta_y > 0")
    z, G, i0 = _restrict(potential, y0, y_left, y_right)
    e = G / potential.D
    shift = e.max()
    left, right = _outward(z, e - shift, i0)
    if left == -np.inf:
        return 0.0
    if right == -np.inf:
        return 1.0
    return float(1.0 / (1.0 + np.exp(right - left)))


def _log_psi(x):
    """``log((x - 1 + exp(-x)) / x^2)``, the same-segment part of a nested integral."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    neg = x < -30
    mid = ~(small | neg)
    xs = x[small]
    out[small] = np.log(0.5 - xs / 6 + xs * xs / 24)
    xn = x[neg]
    out[neg] = -xn + np.log1p((xn - 1) * np.exp(xn)) - 2 * np.log(-xn)
    xm = x[mid]
    out[mid] = np.log(xm + np.expm1(-xm)) - 2 * np.log(np.abs(xm))
    return out


def _log_nested(dz, e):
    """``log`` of the integral of ``exp(e(u) - e(s))`` over pairs with ``u`` before ``s``.

    ``e`` is sampled on nodes listed in traversal order with segment widths
    ``dz``; the result is exact for the piecewise-linear interpolant of
    ``e``. Pairs in different segments factor into single-segment integrals
    of ``exp(e)`` and ``exp(-e)``; pairs inside one segment have a closed form.
    """
    if len(dz) == 0:
        return -np.inf
    de = e[1:] - e[:-1]
    log_a = np.log(dz) + e[:-1] + _log_exprel(de)
    log_b = np.log(dz) - e[:-1] + _log_exprel(-de)
    log_t = 2 * np.log(dz) + _log_psi(de)
    total = prefix = -np.inf
    for k in range(len(dz)):
        total = np.logaddexp(total, np.logaddexp(prefix + log_b[k], log_t[k]))
        prefix = np.logaddexp(prefix, log_a[k])
    return float(total)


def mean_exit_time(potential: Potential1D, y0, y_left, y_right) -> float:
    """Mean time (ms) to leave ``[y_left, y_right]`` from ``y0``."""
    if not potential.beta_y > 0:
        raise DegenerateNoise("mean exit time needs beta_y > 0")
    z, G, i0 = _restrict(potential, y0, y_left, y_right)
    if i0 == 0 or i0 == len(z) - 1:
        return 0.0
    D = potential.D
    e = G / D
    left, right = _outward(z, e - e.max(), i0)
    log_pi = left - np.logaddexp(left, right)
    log_1mpi = right - np.logaddexp(left, right)
    # both halves run from their outer end towards y0, so mirrored set-ups agree exactly
    log_a = _log_nested(np.diff(z[: i0 + 1]), e[: i0 + 1])
    log_b = _log_nested(-np.diff(z[i0:][::-1]), e[i0:][::-1])
    with np.errstate(over="ignore"):
        # beyond double range the escape is effectively never: report inf
        return float(np.exp(np.logaddexp(log_1mpi + log_a, log_pi + log_b)) / D)


@dataclass
class BarrierSet:
    a_minus: float
    a_plus: float
    well_minima: tuple
    regime: str  # "double-barrier" or "single-maximum-at-origin"
    maxima: list = field(default_factory=list)
    minima: list = field(default_factory=list)


def _vertex(y, G, k):
    """Parabolic refinement through nodes ``k - 1, k, k + 1``."""
    if k <= 0 or k >= len(y) - 1:
        return float(y[k])
    g0, g1, g2 = G[k - 1], G[k], G[k + 1]
    den = g0 - 2 * g1 + g2
    if den == 0:
        return float(y[k])
    h = y[k + 1] - y[k]
    return float(y[k] + 0.5 * h * (g0 - g2) / den)


def _extrema(y, G):
    d = np.diff(G)
    s = np.sign(d)
    # carry signs across flat segments so plateaus do not register as extrema
    for k in range(1, len(s)):
        if s[k] == 0:
            s[k] = s[k - 1]
    maxima, minima = [], []
    for k in range(1, len(s)):
        if s[k - 1] > 0 and s[k] < 0:
            maxima.append(k)
        elif s[k - 1] < 0 and s[k] > 0:
            minima.append(k)
    return maxima, minima


def find_barriers(potential: Potential1D) -> BarrierSet:
    """Barriers flanking ``y = 0`` and the decision wells beyond them."""
    y, G = potential.y, potential.G
    maxima, minima = _extrema(y, G)
    if not maxima and not minima:
        raise NoWells("potential is monotone on the whole grid")
    ymax = [_vertex(y, G, k) for k in maxima]
    ymin = [_vertex(y, G, k) for k in minima]
    c = int(np.argmin(np.abs(y)))
    h = float(y[1] - y[0])
    origin_max = [v for k, v in zip(maxima, ymax) if abs(k - c) <= 1]
    if origin_max:
        a = min(origin_max, key=abs)
        left = [v for v in ymin if v < a]
        right = [v for v in ymin if v > a]
        if not left or not right:
            raise NoWells("no decision well on one side of the central maximum")
        return BarrierSet(a, a, (max(left), min(right)), "single-maximum-at-origin", ymax, ymin)
    left_max = [v for v in ymax if v < -0.5 * h]
    right_max = [v for v in ymax if v > 0.5 * h]
    if not left_max or not right_max:
        raise NoWells("no barrier on one side of the spontaneous state")
    a_minus, a_plus = max(left_max), min(right_max)
    left = [v for v in ymin if v < a_minus]
    right = [v for v in ymin if v > a_plus]
    if not left or not right:
        raise NoWells("no decision well beyond a barrier")
    return BarrierSet(a_minus, a_plus, (max(left), min(right)), "double-barrier", ymax, ymin)


@dataclass
class BehaviorResult:
    """Performance and reaction time for one parameter set.

    ``performance`` is the headline number selected by the regime:
    ``performance_mass`` (stationary mass beyond the barrier on the correct
    side) in the double-barrier regime and ``performance_split`` otherwise.
    ``correct_sign`` is the sign of y pointing to the correct decision state.
    """

    performance: float
    reaction_time: float
    regime: str
    interval: tuple
    performance_mass: Optional[float]
    performance_split: float
    correct_sign: int
    barriers: BarrierSet


def _log_tail_mass(potential, cut, side):
    """Unnormalized log stationary mass beyond ``cut``, accumulated outward from it."""
    y = potential.y
    z, G, i0 = _restrict(potential, cut, y[0], y[-1])
    e = -G / potential.D
    left, right = _outward(z, e + potential.G.min() / potential.D, i0)
    return right if side > 0 else left


def _stationary_side_mass(potential, cut, side):
    """Stationary mass on one side of ``cut`` (right for ``side > 0``)."""
    y = potential.y
    z, G, i0 = _restrict(potential, cut, y[0], y[-1])
    e = -G / potential.D
    left, right = _outward(z, e - e.max(), i0)
    if side > 0:
        return float(1.0 / (1.0 + np.exp(left - right)))
    return float(1.0 / (1.0 + np.exp(right - left)))


def behavior(potential: Potential1D, curve: SlowManifoldCurve, frame: LinearizationFrame,
             correct_role: str = "decision-1") -> BehaviorResult:
    """Performance and reaction time starting from the spontaneous state.

    The correct well is the one holding ``correct_role`` (by default the
    pool-1 decision state, favoured when ``lambda1 >= lambda2``), located
    through its mapped y-coordinate.
    """
    bars = find_barriers(potential)
    if correct_role in curve.decision_y:
        sign = 1 if curve.decision_y[correct_role] > 0 else -1
    else:
        raise NoWells(f"no {correct_role} state on the manifold")
    w_left, w_right = bars.well_minima
    split_right = splitting_probability(potential, 0.0, w_left, w_right)
    split = split_right if sign > 0 else 1.0 - split_right
    if bars.regime == "double-barrier":
        cut = bars.a_plus if sign > 0 else bars.a_minus
        other = bars.a_minus if sign > 0 else bars.a_plus
        # well masses relative to each other, so the mirror-symmetric case gives 1/2 exactly
        log_c = _log_tail_mass(potential, cut, sign)
        log_o = _log_tail_mass(potential, other, -sign)
        mass = float(1.0 / (1.0 + np.exp(log_o - log_c)))
        rt = mean_exit_time(potential, 0.0, bars.a_minus, bars.a_plus)
        interval = (bars.a_minus, bars.a_plus)
        headline = mass
    else:
        mass = None
        rt = mean_exit_time(potential, 0.0, w_left, w_right)
        interval = (w_left, w_right)
        headline = split
    return BehaviorResult(headline, rt, bars.regime, interval, mass, split, sign, bars)
