import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_banded

from sfdm.errors import DegenerateNoise, PreconditionError
from sfdm.fokker_planck import (
    Density1D,
    Density2D,
    FokkerPlanck1D,
    FokkerPlanck2D,
    evolve_1d,
    evolve_2d,
    gaussian_1d,
    gaussian_2d,
    implicit_sweep_operator,
    marginal_along_y,
    moment,
    moment_2d,
    stationary_density_1d,
)
from sfdm.model import ModelParams
from sfdm.reduction import Potential1D
from sfdm.tridiag import BatchedThomas, solve

from conftest import cached_reduction


def double_well(n=401, beta_y=0.7, y_m=3.0):
    return Potential1D.from_function(lambda y: (y**2 - 1) ** 2 / 4, y_m, n, beta_y, lambda y: y - y**3)


def test_flat_potential_is_uniform():
    pot = Potential1D(np.linspace(-2, 2, 201), np.zeros(201), 0.5)
    q = stationary_density_1d(pot)
    np.testing.assert_allclose(q.q, 0.25, rtol=1e-14)


def test_harmonic_stationary_matches_gaussian():
    beta_y = 0.6
    pot = Potential1D.from_function(lambda y: 0.5 * y**2, 6.0, 2001, beta_y)
    q = stationary_density_1d(pot)
    var = beta_y**2 / 2
    exact = np.exp(-pot.y**2 / (2 * var)) / np.sqrt(2 * np.pi * var)
    assert np.max(np.abs(q.q - exact)) < 1e-5
    assert q.weights @ (q.q * pot.y**2) == pytest.approx(var, rel=1e-5)


def test_small_noise_stationary_is_bimodal():
    r = cached_reduction(w_plus=2.5695, beta=3e-3)
    q = stationary_density_1d(r.potential)
    near = np.zeros_like(q.y, dtype=bool)
    for y in r.curve.decision_y.values():
        near |= np.abs(q.y - y) < 0.5
    assert q.weights[near] @ q.q[near] > 1 - 1e-12


def test_stationary_is_discrete_fixed_point():
    pot = double_well()
    qs = stationary_density_1d(pot)
    solver = FokkerPlanck1D(pot)
    q = qs.q
    for _ in range(200):
        q = solver.step(q, 0.05)
    assert qs.weights @ np.abs(q - qs.q) < 1e-12
    assert np.max(np.abs(solver.flux(qs.q))) < 1e-12


def test_flat_potential_converges_to_uniform():
    pot = Potential1D(np.linspace(-1, 1, 101), np.zeros(101), 1.0)
    q = evolve_1d(gaussian_1d(pot.y, 0.4, 0.1), pot, 0.05, 20.0)
    np.testing.assert_allclose(q.q, 0.5, atol=1e-8)


def test_mass_positivity_and_monotone_relaxation():
    pot = double_well()
    qs = stationary_density_1d(pot)
    q0 = gaussian_1d(pot.y, 0.5, 0.2)
    masses, dists, mins = [], [], []

    def obs(k, t, q):
        masses.append(q0.weights @ q)
        mins.append(q.min())
        dists.append(qs.weights @ np.abs(q - qs.q))

    evolve_1d(q0, pot, 0.01, 10.0, observer=obs)
    steps = np.diff(np.concatenate([[q0.mass], masses]))
    assert np.max(np.abs(steps)) <= 1e-12
    assert min(mins) >= 0
    assert np.all(np.diff(dists) <= 1e-14)


def _run(n, dt):
    pot = double_well(n)
    return evolve_1d(gaussian_1d(pot.y, 0.3, 0.3), pot, dt, 1.0)


def test_space_convergence_order():
    ref = _run(3201, 1e-3)
    errs = []
    for n in (101, 201, 401):
        q = _run(n, 1e-3)
        s = 3200 // (n - 1)
        errs.append(q.weights @ np.abs(q.q - ref.q[::s]))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9)


def test_time_convergence_order():
    ref = _run(401, 5e-5)
    errs = [_run(401, dt).l1_distance(ref) for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.9)


def test_evolve_preconditions():
    pot = double_well()
    with pytest.raises(PreconditionError):
        evolve_1d(Density1D(pot.y, np.ones_like(pot.y)), pot, 0.01, 1.0)
    with pytest.raises(DegenerateNoise):
        FokkerPlanck1D(Potential1D(pot.y, pot.G, 0.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1))
def test_batched_thomas_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    lo, up = -rng.uniform(0, 1, (3, n - 1)), -rng.uniform(0, 1, (3, n - 1))
    diag = 2.5 + rng.uniform(0, 1, (3, n))
    rhs = rng.normal(size=(3, n))
    x = BatchedThomas(lo, diag, up).solve(rhs)
    for b in range(3):
        np.testing.assert_allclose(x[b], solve(lo[b], diag[b], up[b], rhs[b]), rtol=1e-10, atol=1e-12)
        ab = np.zeros((3, n))
        ab[0, 1:], ab[1], ab[2, :-1] = up[b], diag[b], lo[b]
        np.testing.assert_allclose(x[b], solve_banded((1, 1), ab, rhs[b]), rtol=1e-10, atol=1e-12)


def test_pure_diffusion_sweep_keeps_uniform():
    op = implicit_sweep_operator(np.zeros((4, 31)), 0.1, 0.3, 0.5)
    np.testing.assert_allclose(op.solve(np.ones((4, 32))), 1.0, rtol=1e-14)


def test_2d_mass_and_positivity():
    p = ModelParams(w_plus=2.45, beta=0.3)
    p0 = gaussian_2d(p, (1.0, 1.0), 0.5, n=64)
    solver = FokkerPlanck2D(p, 64)
    x = p0.p
    h2 = solver.h**2
    for _ in range(50):
        m0 = x.sum() * h2
        x = solver.step(x, 0.1)
        assert abs(x.sum() * h2 - m0) <= 1e-10
        assert x.min() >= 0


def test_2d_small_noise_concentrates_at_attractor():
    p = ModelParams(w_plus=2.45, beta=0.05)
    r = cached_reduction()
    dec = [e for e in r.equilibria if e.role == "decision-1"][0].as_array()
    p2 = evolve_2d(gaussian_2d(p, dec + [-1.0, 0.5], 0.3, n=96), p, 0.1, 100.0)
    np.testing.assert_allclose(p2.mean(), dec, atol=0.2)


def test_marginal_projection(red_245):
    r = red_245
    p = r.params
    y = r.potential.y
    d0 = gaussian_2d(p, r.frame.s0, 0.05, n=256)
    m = marginal_along_y(d0, r.frame, y, subsample=2)
    assert m.mass + m.outside_mass == pytest.approx(1.0, abs=1e-12)
    assert abs(m.weights @ (m.q * y)) < 0.05
    s1 = [e for e in r.equilibria if e.role == "decision-1"][0].as_array()
    d1 = gaussian_2d(p, s1, 0.05, n=256)
    m1 = marginal_along_y(d1, r.frame, y, subsample=2)
    ys1 = r.frame.y_of(s1)
    assert m1.weights @ (m1.q * y) == pytest.approx(ys1, abs=0.1)


def test_moments(red_245):
    r = red_245
    q = stationary_density_1d(r.potential)
    assert moment(q, r.curve, r.frame, lambda nu: 1.0) == pytest.approx(1.0, abs=1e-12)
    k = int(np.argmin(np.abs(r.curve.y - r.curve.decision_y["decision-1"])))
    spike = np.zeros_like(q.q)
    spike[k] = 1.0 / q.weights[k]
    val = moment(Density1D(q.y, spike), r.curve, r.frame, lambda nu: nu[..., 0])
    assert val == pytest.approx(r.curve.nu[k, 0], rel=1e-12)
    d = Density2D(20.0, np.full((40, 40), 1.0 / 400.0))
    assert moment_2d(d, lambda nu: np.ones(nu.shape[:-1])) == pytest.approx(1.0)
    assert moment_2d(d, lambda nu: nu[..., 0]) == pytest.approx(10.0)
