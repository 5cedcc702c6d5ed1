"""Seeded Euler-Maruyama trial ensembles.

Every trial owns a Philox stream keyed by ``(master_seed, trial_index)``, so a
trial produces the same path whether it runs alone, in a batch, or in another
process. Batches advance in lockstep; each trial draws its noise in fixed-size
blocks from its own stream, which keeps the per-trial sequence independent of
how many other trials share the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .equilibria import decision_states, find_equilibria, spontaneous_state
from .errors import OutOfRange, PreconditionError
from .model import ModelParams, drift
from .reduction import Potential1D

BLOCK = 256
MAX_SEED = 2**64


@dataclass(frozen=True)
class TrialConfig:
    """Time stepping, stopping rule and seeding for a trial ensemble.

    For 2D trials ``decision_threshold`` is a rate level and ``initial_state``
    a rate pair; for 1D trials they are a ``(y_low, y_high)`` pair and a
    scalar y.
    """

    dt: float = 0.01
    t_max: float = 5000.0
    decision_threshold: object = None
    initial_state: object = None
    master_seed: int = 0
    n_trials: int = 1000

    def __post_init__(self):
        if not self.dt > 0:
            raise PreconditionError("dt must be positive")
        if not self.t_max >= self.dt:
            raise PreconditionError("t_max must be at least dt")
        if int(self.n_trials) < 1:
            raise PreconditionError("n_trials must be at least 1")
        if not 0 <= int(self.master_seed) < MAX_SEED:
            raise PreconditionError("master_seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_max / self.dt - 1e-9))

    def replace(self, **changes) -> "TrialConfig":
        return TrialConfig(**{**self.__dict__, **changes})


@dataclass
class TrialOutcome:
    trial: int
    decision: str  # "pool-1", "pool-2" (or the 1D labels) or "none"
    decision_time: Optional[float]
    final_state: np.ndarray
    clamp_events: int = 0
    valid: bool = True

    def __post_init__(self):
        if (self.decision_time is None) != (self.decision == "none"):
            raise PreconditionError("decision_time must be set iff a decision was made")


@dataclass
class EnsembleSummary:
    """Empirical performance and reaction time.

    ``p_correct`` is the fraction of decided trials ending in ``correct``;
    standard errors are ``None`` when fewer than two samples exist.
    """

    n_trials: int
    n_decided: int
    correct: str
    p_correct: Optional[float]
    p_correct_se: Optional[float]
    rt_mean: Optional[float]
    rt_se: Optional[float]
    undecided_fraction: float
    counts: dict = field(default_factory=dict)
    n_invalid: int = 0
    clamp_events: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def trial_generator(master_seed: int, trial_index: int) -> np.random.Generator:
    """Counter-based stream for one trial."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial_index),))
    return np.random.Generator(np.random.Philox(ss))


class _Streams:
    """Per-trial block buffers of standard normals (and uniforms if asked)."""

    def __init__(self, master_seed, indices, dim, uniforms=False):
        self.gens = [trial_generator(master_seed, i) for i in indices]
        self.dim = dim
        self.uniforms = uniforms
        self.pos = BLOCK
        self.z = np.empty((len(indices), BLOCK, dim))
        self.u = np.empty((len(indices), BLOCK)) if uniforms else None

    def draw(self, active):
        if self.pos == BLOCK:
            for k in np.flatnonzero(active):
                g = self.gens[k]
                self.z[k] = g.standard_normal((BLOCK, self.dim))
                if self.uniforms:
                    self.u[k] = g.random(BLOCK)
            self.pos = 0
        p = self.pos
        self.pos += 1
        return self.z[:, p], (self.u[:, p] if self.uniforms else None)


def default_threshold(params: ModelParams, equilibria: Optional[list] = None) -> float:
    """Rate level midway between the spontaneous state and the decision states.

    Uses the larger rate coordinate of each state; with two decision states
    the lower of their dominant rates is taken so either can trigger.
    """
    if equilibria is None:
        equilibria = find_equilibria(params)
    s = spontaneous_state(equilibria).location.as_array().max()
    dec = decision_states(equilibria)
    if not dec:
        raise PreconditionError("no decision state to place a threshold below")
    d = min(e.location.as_array().max() for e in dec.values())
    return 0.5 * (s + d)


def run_2d(params: ModelParams, config: TrialConfig, indices: Sequence[int]) -> list:
    """Euler-Maruyama for the rate SDE on a batch of trials."""
    thr = config.decision_threshold
    if thr is None:
        thr = default_threshold(params)
    x0 = config.initial_state
    if x0 is None:
        x0 = spontaneous_state(find_equilibria(params)).location.as_array()
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,):
        raise PreconditionError("2D initial_state must be a rate pair")
    n = len(indices)
    x = np.tile(x0, (n, 1))
    sigma = params.beta * np.sqrt(config.dt)
    streams = _Streams(config.master_seed, indices, 2)
    active = np.ones(n, dtype=bool)
    t_hit = np.full(n, np.nan)
    clamps = np.zeros(n, dtype=int)
    for step in range(1, config.n_steps + 1):
        if not active.any():
            break
        z, _ = streams.draw(active)
        xa = x[active]
        xn = xa + config.dt * drift(xa, params) + sigma * z[active]
        clipped = np.clip(xn, 0.0, params.nu_max)
        clamps[active] += np.any(clipped != xn, axis=1)
        x[active] = clipped
        hit = active & np.any(x > thr, axis=1)
        t_hit[hit] = step * config.dt
        active &= ~hit
    out = []
    for k, i in enumerate(indices):
        if np.isnan(t_hit[k]):
            out.append(TrialOutcome(int(i), "none", None, x[k].copy(), int(clamps[k])))
        else:
            dec = "pool-1" if x[k, 0] >= x[k, 1] else "pool-2"
            out.append(TrialOutcome(int(i), dec, float(t_hit[k]), x[k].copy(), int(clamps[k])))
    return out


def simulate_2d(params: ModelParams, config: TrialConfig, trial_index: int) -> TrialOutcome:
    """One trial of the full rate model."""
    return run_2d(params, config, [trial_index])[0]


def tabulated_drift(potential: Potential1D) -> Callable:
    """Reduced drift by linear interpolation of the node values ``potential.g``."""
    y, g = potential.y, potential.g

    def f(yq):
        return np.interp(yq, y, g)

    f.domain = (float(y[0]), float(y[-1]))
    return f


def run_1d(drift_fn, beta_y: float, config: TrialConfig, indices: Sequence[int],
           labels=("lower", "upper"), domain=None, bridge: bool = True) -> list:
    """Euler-Maruyama for ``dy = g(y) dt + beta_y dW`` between two absorbing levels.

    ``drift_fn`` is a vectorized callable or a :class:`Potential1D` (its node
    drift is interpolated). With ``bridge`` set, a step that ends inside the
    interval still counts as an exit with the Brownian-bridge crossing
    probability, which removes the leading discrete-monitoring bias of exit
    statistics.
    """
    if isinstance(drift_fn, Potential1D):
        drift_fn = tabulated_drift(drift_fn)
    if domain is None:
        domain = getattr(drift_fn, "domain", (-np.inf, np.inf))
    if config.decision_threshold is None:
        raise PreconditionError("1D trials need (y_low, y_high) thresholds")
    lo, hi = (float(v) for v in config.decision_threshold)
    if not lo < hi:
        raise PreconditionError("need y_low < y_high")
    y0 = 0.0 if config.initial_state is None else float(config.initial_state)
    n = len(indices)
    y = np.full(n, y0)
    sigma = beta_y * np.sqrt(config.dt)
    var = sigma * sigma
    streams = _Streams(config.master_seed, indices, 1, uniforms=bridge)
    active = np.ones(n, dtype=bool)
    t_hit = np.full(n, np.nan)
    side = np.zeros(n, dtype=int)
    invalid = np.zeros(n, dtype=bool)
    if not lo < y0 < hi:
        t_hit[:] = 0.0
        side[:] = -1 if y0 <= lo else 1
        active[:] = False
    for step in range(1, config.n_steps + 1):
        if not active.any():
            break
        z, u = streams.draw(active)
        ya = y[active]
        yn = ya + config.dt * drift_fn(ya) + sigma * z[active, 0]
        down = yn <= lo
        up = yn >= hi
        if bridge and var > 0:
            inside = ~(down | up)
            p_lo = np.exp(-2.0 * (ya - lo) * (yn - lo) / var)
            p_hi = np.exp(-2.0 * (hi - ya) * (hi - yn) / var)
            ua = u[active]
            # split one uniform between the two barriers; both are tiny unless the step is near one
            down |= inside & (ua < p_lo)
            up |= inside & ~down & (ua > 1.0 - p_hi)
        y[active] = yn
        idx = np.flatnonzero(active)
        leave = (yn < domain[0]) | (yn > domain[1])
        bad = leave & ~(down | up)
        invalid[idx[bad]] = True
        side[idx[down]] = -1
        side[idx[up & ~down]] = 1
        done = down | up | bad
        t_hit[idx[done & ~bad]] = step * config.dt
        active[idx[done]] = False
    out = []
    for k, i in enumerate(indices):
        if invalid[k]:
            out.append(TrialOutcome(int(i), "none", None, np.array([y[k]]), valid=False))
        elif np.isnan(t_hit[k]):
            out.append(TrialOutcome(int(i), "none", None, np.array([y[k]])))
        else:
            dec = labels[1] if side[k] > 0 else labels[0]
            out.append(TrialOutcome(int(i), dec, float(t_hit[k]), np.array([y[k]])))
    return out


def simulate_1d(drift_fn, beta_y: float, config: TrialConfig, trial_index: int, **kwargs) -> TrialOutcome:
    """One trial of the reduced SDE; raises :class:`OutOfRange` if it leaves the drift's grid."""
    out = run_1d(drift_fn, beta_y, config, [trial_index], **kwargs)[0]
    if not out.valid:
        raise OutOfRange(f"trial {trial_index} left the manifold grid at y={out.final_state[0]:.6g}")
    return out


def summarize(outcomes: Sequence[TrialOutcome], correct: str) -> EnsembleSummary:
    """Aggregate outcomes; the result does not depend on their order."""
    outcomes = sorted(outcomes, key=lambda o: o.trial)
    n = len(outcomes)
    valid = [o for o in outcomes if o.valid]
    decided = [o for o in valid if o.decision != "none"]
    counts = {}
    for o in outcomes:
        key = o.decision if o.valid else "invalid"
        counts[key] = counts.get(key, 0) + 1
    nd = len(decided)
    p = se_p = rt = se_rt = None
    if nd:
        hits = np.array([o.decision == correct for o in decided], dtype=float)
        p = float(hits.mean())
        times = np.array([o.decision_time for o in decided])
        rt = float(times.mean())
        if nd > 1:
            se_p = float(np.sqrt(p * (1 - p) / nd))
            se_rt = float(times.std(ddof=1) / np.sqrt(nd))
    return EnsembleSummary(
        n_trials=n,
        n_decided=nd,
        correct=correct,
        p_correct=p,
        p_correct_se=se_p,
        rt_mean=rt,
        rt_se=se_rt,
        undecided_fraction=(len(valid) - nd) / n if n else 0.0,
        counts=counts,
        n_invalid=n - len(valid),
        clamp_events=int(sum(o.clamp_events for o in outcomes)),
    )


def ensemble(run: Callable, config: TrialConfig, correct: str = "pool-1", chunk: int = 4096):
    """Run ``config.n_trials`` trials through ``run(config, indices)`` and summarize.

    Returns ``(summary, outcomes)`` with outcomes ordered by trial index.
    """
    outcomes = []
    for start in range(0, int(config.n_trials), chunk):
        idx = list(range(start, min(start + chunk, int(config.n_trials))))
        outcomes.extend(run(config, idx))
    outcomes.sort(key=lambda o: o.trial)
    return summarize(outcomes, correct), outcomes
