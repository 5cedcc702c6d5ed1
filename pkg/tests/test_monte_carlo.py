import numpy as np
import pytest

from sfdm.equilibria import decision_states, find_equilibria, spontaneous_state
from sfdm.errors import OutOfRange, PreconditionError
from sfdm.model import ModelParams
from sfdm.monte_carlo import (
    TrialConfig,
    TrialOutcome,
    default_threshold,
    ensemble,
    run_1d,
    run_2d,
    simulate_1d,
    simulate_2d,
    summarize,
    trial_generator,
)
from sfdm.reduction import Potential1D

from conftest import cached_reduction

P = ModelParams(w_plus=2.45, beta=0.3)


def flat(beta_y=1.0, y_m=3.0):
    y = np.linspace(-y_m, y_m, 601)
    return Potential1D(y, np.zeros_like(y), beta_y, np.zeros_like(y))


@pytest.mark.parametrize("bad", [dict(dt=0.0), dict(t_max=0.001, dt=0.01), dict(n_trials=0),
                                 dict(master_seed=-1), dict(master_seed=2**64)])
def test_config_validation(bad):
    with pytest.raises(PreconditionError):
        TrialConfig(**bad)


def test_outcome_invariant():
    with pytest.raises(PreconditionError):
        TrialOutcome(0, "pool-1", None, np.zeros(2))
    with pytest.raises(PreconditionError):
        TrialOutcome(0, "none", 1.0, np.zeros(2))


def test_streams_are_counter_based():
    a = trial_generator(7, 3).standard_normal(5)
    b = trial_generator(7, 3).standard_normal(5)
    c = trial_generator(7, 4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_2d_determinism_independent_of_batching():
    cfg = TrialConfig(dt=0.01, t_max=200.0, n_trials=12, master_seed=11)
    batch = run_2d(P, cfg, list(range(12)))
    single = [simulate_2d(P, cfg, i) for i in (0, 5, 11)]
    for s in single:
        b = batch[s.trial]
        assert (s.decision, s.decision_time) == (b.decision, b.decision_time)
        np.testing.assert_array_equal(s.final_state, b.final_state)
    s1, _ = ensemble(lambda c, i: run_2d(P, c, i), cfg, chunk=5)
    s2, _ = ensemble(lambda c, i: run_2d(P, c, i), cfg, chunk=12)
    assert s1 == s2


def test_noiseless_flow_reaches_basin_attractor():
    p = P.replace(beta=0.0)
    eqs = find_equilibria(p)
    dec = decision_states(eqs)["decision-2"].as_array()
    cfg = TrialConfig(dt=0.01, t_max=300.0, n_trials=1, initial_state=dec + [0.5, -1.0],
                      decision_threshold=dec[1] - 0.1)
    out = simulate_2d(p, cfg, 0)
    assert out.decision == "pool-2" and out.clamp_events == 0


def test_noiseless_equilibrium_stays_put():
    p = P.replace(beta=0.0)
    s = spontaneous_state(find_equilibria(p)).as_array()
    cfg = TrialConfig(dt=0.01, t_max=50.0, n_trials=1, initial_state=s)
    out = simulate_2d(p, cfg, 0)
    assert out.decision == "none" and out.decision_time is None
    np.testing.assert_allclose(out.final_state, s, atol=1e-9)
    assert out.clamp_events == 0


def test_default_threshold_between_states():
    eqs = find_equilibria(P)
    thr = default_threshold(P, eqs)
    s = spontaneous_state(eqs).as_array().max()
    d = min(e.as_array().max() for e in decision_states(eqs).values())
    assert thr == pytest.approx(0.5 * (s + d))


def test_unbiased_2d_is_fair():
    p = P.replace(delta_lambda=0.0)
    cfg = TrialConfig(dt=0.01, t_max=500.0, n_trials=2000, master_seed=5)
    s, _ = ensemble(lambda c, i: run_2d(p, c, i), cfg)
    assert s.undecided_fraction == 0.0
    assert abs(s.p_correct - 0.5) <= 3 * s.p_correct_se


@pytest.mark.parametrize("bridge", [True, False])
def test_flat_1d_closed_forms(bridge):
    L, beta_y = 1.0, 1.0
    cfg = TrialConfig(dt=1e-3 if not bridge else 1e-2, t_max=100.0, n_trials=10000, master_seed=2,
                      decision_threshold=(-L, L), initial_state=0.0)
    s, _ = ensemble(lambda c, i: run_1d(flat(beta_y), beta_y, c, i, bridge=bridge), cfg, correct="upper")
    assert abs(s.p_correct - 0.5) <= 3 * s.p_correct_se
    if bridge:
        assert abs(s.rt_mean - L**2 / beta_y**2) <= 3 * s.rt_se


def test_1d_leaving_grid_is_reported():
    cfg = TrialConfig(dt=0.01, t_max=100.0, n_trials=1, decision_threshold=(-10.0, 10.0))
    with pytest.raises(OutOfRange):
        simulate_1d(flat(beta_y=2.0, y_m=1.0), 2.0, cfg, 0)
    s, _ = ensemble(lambda c, i: run_1d(flat(2.0, 1.0), 2.0, c, i), cfg.replace(n_trials=20), correct="upper")
    assert s.n_invalid == 20 and s.counts == {"invalid": 20}


def test_single_trial_summary():
    cfg = TrialConfig(dt=0.01, t_max=100.0, n_trials=1, decision_threshold=(-1.0, 1.0))
    s, out = ensemble(lambda c, i: run_1d(flat(), 1.0, c, i), cfg, correct="upper")
    assert s.n_trials == 1 and s.p_correct in (0.0, 1.0)
    assert s.p_correct_se is None and s.rt_se is None
    assert s.rt_mean == out[0].decision_time


def test_summary_is_order_independent():
    outs = [TrialOutcome(i, "pool-1" if i % 3 else "pool-2", 0.1 * i + 1, np.zeros(2)) for i in range(30)]
    assert summarize(outs, "pool-1") == summarize(outs[::-1], "pool-1")


def test_dt_halving_stability(red_245):
    r = red_245
    pot = r.potential
    res = []
    for dt in (0.02, 0.01):
        cfg = TrialConfig(dt=dt, t_max=500.0, n_trials=4000, master_seed=9,
                          decision_threshold=(-0.8, 0.8), initial_state=0.0)
        s, _ = ensemble(lambda c, i: run_1d(pot, r.frame.beta_y, c, i), cfg, correct="upper")
        res.append(s)
    band = 3 * np.hypot(res[0].p_correct_se, res[1].p_correct_se)
    assert abs(res[0].p_correct - res[1].p_correct) < band
