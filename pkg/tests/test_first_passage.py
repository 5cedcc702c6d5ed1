import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sfdm.errors import DegenerateInterval, DegenerateNoise, NoWells, OutOfRange
from sfdm.first_passage import behavior, find_barriers, mean_exit_time, splitting_probability
from sfdm.reduction import Potential1D

from conftest import cached_reduction

FLAT = Potential1D(np.linspace(-2, 2, 401), np.zeros(401), 0.8)


def tilted_well(n=801, beta_y=0.9):
    G = lambda y: (y**2 - 1) ** 2 / 4 + 0.15 * y
    return Potential1D.from_function(G, 2.5, n, beta_y), G


@pytest.mark.parametrize("y0", [-1.5, -0.3, 0.0, 0.7, 1.9])
def test_flat_closed_forms(y0):
    a, b = -2.0, 2.0
    assert splitting_probability(FLAT, y0, a, b) == pytest.approx((y0 - a) / (b - a), rel=1e-6)
    T = mean_exit_time(FLAT, y0, a, b)
    assert T == pytest.approx((y0 - a) * (b - y0) / FLAT.beta_y**2, rel=1e-6)


def test_flat_symmetric_exit_time():
    L = 1.25
    assert mean_exit_time(FLAT, 0.0, -L, L) == pytest.approx(L**2 / FLAT.beta_y**2, rel=1e-6)
    assert splitting_probability(FLAT, 0.0, -L, L) == 0.5


def _quad_oracle(G, D, y0, a, b):
    e = lambda u: np.exp(G(u) / D)
    num = quad(e, a, y0, epsabs=0, epsrel=1e-12)[0]
    den = quad(e, a, b, epsabs=0, epsrel=1e-12)[0]
    pi = num / den
    il = lambda s: quad(lambda u: np.exp((G(u) - G(s)) / D), a, s, epsrel=1e-11)[0]
    ir = lambda s: quad(lambda u: np.exp((G(u) - G(s)) / D), s, b, epsrel=1e-11)[0]
    A = quad(il, a, y0, epsrel=1e-10)[0]
    B = quad(ir, y0, b, epsrel=1e-10)[0]
    return pi, ((1 - pi) * A + pi * B) / D


@pytest.mark.parametrize("y0", [-0.5, 0.0, 0.4])
def test_against_nested_quadrature(y0):
    pot, G = tilted_well(4001)
    a, b = -1.8, 1.6
    pi, T = _quad_oracle(G, pot.D, y0, a, b)
    assert splitting_probability(pot, y0, a, b) == pytest.approx(pi, rel=1e-5)
    assert mean_exit_time(pot, y0, a, b) == pytest.approx(T, rel=1e-5)


def test_quadrature_refinement_is_second_order():
    a, b, y0 = -1.8, 1.6, 0.1
    _, G = tilted_well()
    pi_ref, T_ref = _quad_oracle(G, 0.5 * 0.9**2, y0, a, b)
    e_pi, e_T = [], []
    for n in (201, 401, 801):
        pot, _ = tilted_well(n)
        e_pi.append(abs(splitting_probability(pot, y0, a, b) - pi_ref))
        e_T.append(abs(mean_exit_time(pot, y0, a, b) - T_ref))
    for e in (e_pi, e_T):
        orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
        assert np.all(orders > 1.8)


@settings(max_examples=40, deadline=None)
@given(st.floats(-1.8, 1.6), st.floats(-1.8, 1.6))
def test_split_invariants(u, v):
    pot, _ = tilted_well()
    a, b = -1.8, 1.6
    lo, hi = sorted((u, v))
    p_lo = splitting_probability(pot, lo, a, b)
    p_hi = splitting_probability(pot, hi, a, b)
    assert p_lo <= p_hi + 1e-12
    # left and right exits from the mirrored problem sum to one
    mirror = Potential1D(-pot.y[::-1], pot.G[::-1], pot.beta_y)
    p_left = splitting_probability(mirror, -hi, -b, -a)
    assert p_hi + p_left == pytest.approx(1.0, abs=1e-12)
    T = mean_exit_time(pot, hi, a, b)
    assert T >= 0 and (T > 0 or hi in (a, b))


def test_exit_time_vanishes_at_ends():
    pot, _ = tilted_well()
    assert mean_exit_time(pot, -1.8, -1.8, 1.6) == 0.0
    assert mean_exit_time(pot, 1.6, -1.8, 1.6) == 0.0
    assert splitting_probability(pot, -1.8, -1.8, 1.6) == 0.0
    assert splitting_probability(pot, 1.6, -1.8, 1.6) == 1.0


def test_errors():
    with pytest.raises(DegenerateInterval):
        splitting_probability(FLAT, 0.0, 1.0, 1.0)
    with pytest.raises(OutOfRange):
        mean_exit_time(FLAT, 0.0, -3.0, 1.0)
    with pytest.raises(OutOfRange):
        mean_exit_time(FLAT, 1.5, -1.0, 1.0)
    with pytest.raises(DegenerateNoise):
        splitting_probability(Potential1D(FLAT.y, FLAT.G, 0.0), 0.0, -1, 1)


def test_barriers_symmetric_double_well():
    pot = Potential1D.from_function(lambda y: (y**2 - 1) ** 2 / 4, 2.0, 401, 0.3)
    b = find_barriers(pot)
    assert b.regime == "single-maximum-at-origin"
    assert b.a_minus == b.a_plus == pytest.approx(0.0, abs=1e-12)
    assert b.well_minima == pytest.approx((-1.0, 1.0), abs=1e-4)


def test_barriers_triple_well():
    G = lambda y: y**2 * (y**2 - 1) ** 2 - 0.05 * y**2
    pot = Potential1D.from_function(G, 1.6, 641, 0.3)
    b = find_barriers(pot)
    assert b.regime == "double-barrier"
    assert b.a_minus < 0 < b.a_plus
    assert pot(b.a_minus) >= 0 and pot(b.a_plus) >= 0


def test_monotone_potential_has_no_wells():
    with pytest.raises(NoWells):
        find_barriers(Potential1D.from_function(lambda y: y, 1.0, 101, 0.3))


@pytest.mark.parametrize("w,regime", [(2.5685, "double-barrier"), (2.5705, "single-maximum-at-origin")])
def test_regimes_around_fold(w, regime):
    r = cached_reduction(w_plus=w, beta=3e-3)
    assert find_barriers(r.potential).regime == regime


@pytest.mark.parametrize("w", [2.45, 2.5685, 2.5705])
def test_unbiased_performance_is_half(w):
    r = cached_reduction(w_plus=w, delta_lambda=0.0, beta=3e-3)
    res = behavior(r.potential, r.curve, r.frame, r.correct_role)
    assert res.performance == 0.5
    assert res.reaction_time > 0


def test_wrong_well_is_complement():
    # delta_lambda >= 0 by construction, so the swapped bias is read off the other well
    r = cached_reduction(delta_lambda=5e-4)
    right = behavior(r.potential, r.curve, r.frame, "decision-1")
    wrong = behavior(r.potential, r.curve, r.frame, "decision-2")
    assert right.performance + wrong.performance == pytest.approx(1.0, abs=1e-12)
    assert right.performance_split + wrong.performance_split == pytest.approx(1.0, abs=1e-12)
    assert right.reaction_time == wrong.reaction_time


def test_behavior_orientation_follows_rates():
    r = cached_reduction(w_plus=2.5695, beta=3e-3)
    res = behavior(r.potential, r.curve, r.frame, r.correct_role)
    assert res.correct_sign == np.sign(r.curve.decision_y["decision-1"])
    assert 0 <= res.performance <= 1 and res.reaction_time > 0
