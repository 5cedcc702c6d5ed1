"""Fixed points of the noiseless rate model and their bifurcation diagram in w_plus.

Equilibria are found by multi-start damped Newton from a regular lattice of
seeds over ``[0, nu_max]^2``. All seeds are iterated together as one
vectorized batch, so the merged result does not depend on seed ordering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import NoConvergence, PreconditionError
from .model import ModelParams, RateState, drift, jacobian

logger = logging.getLogger(__name__)

NEWTON_TOL = 1e-10
DEDUP_TOL = 1e-6
EIG_TOL = 1e-8
FOLD_TOL = 1e-4
MAX_NEWTON_ITER = 100
MAX_HALVINGS = 50

STABILITY_LABELS = (
    "stable-node",
    "stable-focus",
    "saddle",
    "unstable-node",
    "unstable-focus",
    "marginal",
)


@dataclass(frozen=True)
class Equilibrium:
    location: RateState
    eigenvalues: np.ndarray = field(repr=False)
    stability: str
    role: str = "unstable-branch"

    @property
    def is_stable(self) -> bool:
        return self.stability.startswith("stable")

    def as_array(self) -> np.ndarray:
        return self.location.as_array()


def eigenvalues_2x2(J) -> np.ndarray:
    """Eigenvalues of a 2x2 matrix from its trace and determinant.

    Returned as a complex pair ordered by decreasing magnitude of the real part.
    """
    J = np.asarray(J, dtype=float)
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    disc = 0.25 * tr * tr - det
    if disc >= 0:
        root = np.sqrt(disc)
        # avoid cancellation in the smaller root
        big = 0.5 * tr + np.copysign(root, tr) if tr != 0 else root
        small = det / big if big != 0 else 0.5 * tr - root
        mu = np.array([big, small], dtype=complex)
    else:
        root = np.sqrt(-disc)
        mu = np.array([0.5 * tr + 1j * root, 0.5 * tr - 1j * root])
    order = np.argsort(-np.abs(mu.real), kind="stable")
    return mu[order]


def stability_label(mu, eig_tol: float = EIG_TOL) -> str:
    re = mu.real
    if np.any(np.abs(re) <= eig_tol):
        return "marginal"
    focus = np.any(np.abs(mu.imag) > 0)
    if np.all(re < 0):
        return "stable-focus" if focus else "stable-node"
    if np.all(re > 0):
        return "unstable-focus" if focus else "unstable-node"
    return "saddle"


def classify(location, params: ModelParams, tol: float = 1e-8, eig_tol: float = EIG_TOL):
    """Stability label and eigenvalues of the equilibrium at ``location``.

    Raises :class:`PreconditionError` when ``location`` is not an equilibrium
    within ``tol``. A zero real part (within ``eig_tol``) is reported with the
    label ``"marginal"``.
    """
    nu = location.as_array() if isinstance(location, RateState) else np.asarray(location, float)
    residual = np.max(np.abs(drift(nu, params)))
    if residual > tol:
        raise PreconditionError(f"not an equilibrium: |F| = {residual:.3e} > {tol:.1e}")
    mu = eigenvalues_2x2(jacobian(nu, params))
    return stability_label(mu, eig_tol), mu


def _solve2x2(J, r):
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    det = np.where(np.abs(det) < 1e-300, 1e-300, det)
    s0 = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
    s1 = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
    return np.stack([s0, s1], axis=-1)


def damped_newton(seeds, params: ModelParams, tol: float = NEWTON_TOL):
    """Batched damped Newton on F(nu) = 0.

    Each step is halved (up to ``MAX_HALVINGS`` times) until the residual norm
    decreases. Returns the final iterates and a boolean convergence mask.
    """
    x = np.array(seeds, dtype=float, copy=True)
    r = drift(x, params)
    norm = np.linalg.norm(r, axis=-1)
    active = norm > tol
    for _ in range(MAX_NEWTON_ITER):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, ra, na = x[idx], r[idx], norm[idx]
        step = _solve2x2(jacobian(xa, params), -ra)
        lam = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        xn, rn, nn = xa.copy(), ra.copy(), na.copy()
        for _ in range(MAX_HALVINGS + 1):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            trial = xa[p] + lam[p, None] * step[p]
            rt = drift(trial, params)
            nt = np.linalg.norm(rt, axis=-1)
            ok = np.isfinite(nt) & (nt < na[p])
            acc = p[ok]
            xn[acc], rn[acc], nn[acc] = trial[ok], rt[ok], nt[ok]
            pending[acc] = False
            lam[p[~ok]] *= 0.5
        # seeds that cannot decrease the residual are stuck
        stuck = pending
        x[idx], r[idx], norm[idx] = xn, rn, nn
        active[idx[stuck]] = False
        active[idx] &= norm[idx] > tol
    converged = norm <= tol
    return x, converged


def _polish(q, params: ModelParams, iters: int = 3) -> np.ndarray:
    """A few undamped Newton steps from a converged root, kept only if they help."""
    best, rbest = q, np.linalg.norm(drift(q, params))
    for _ in range(iters):
        q = q - np.linalg.solve(jacobian(q, params), drift(q, params))
        r = np.linalg.norm(drift(q, params))
        if not r < rbest:
            break
        best, rbest = q, r
    return best


def _lattice(params: ModelParams, n: int) -> np.ndarray:
    g = np.linspace(0.0, params.nu_max, n)
    a, b = np.meshgrid(g, g, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=-1)


def _dedup(roots: np.ndarray, tol: float) -> list[np.ndarray]:
    # lexicographic sort makes the clustering independent of seed order
    order = np.lexsort((roots[:, 1], roots[:, 0]))
    reps: list[np.ndarray] = []
    for x in roots[order]:
        if not any(np.max(np.abs(x - q)) <= tol for q in reps):
            reps.append(x)
    return reps


def assign_roles(locations, params: ModelParams, stabilities) -> list[str]:
    """Spontaneous / decision-1 / decision-2 / unstable-branch labels.

    The spontaneous state is the equilibrium closest to the diagonal among
    those with both rates below ``nu_c / 2``. Remaining stable equilibria are
    decision states, numbered by the dominant pool.
    """
    locs = np.asarray(locations, dtype=float).reshape(-1, 2)
    roles = ["unstable-branch"] * len(locs)
    low = np.flatnonzero(np.all(locs < 0.5 * params.nu_c, axis=1))
    spont = None
    if low.size:
        spont = low[np.argmin(np.abs(locs[low, 0] - locs[low, 1]))]
        roles[spont] = "spontaneous"
    for i, (loc, st) in enumerate(zip(locs, stabilities)):
        if i == spont or not st.startswith("stable"):
            continue
        roles[i] = "decision-1" if loc[0] > loc[1] else "decision-2"
    return roles


def find_equilibria(
    params: ModelParams,
    grid_resolution: int = 40,
    newton_tol: float = NEWTON_TOL,
    dedup_tol: float = DEDUP_TOL,
) -> list[Equilibrium]:
    """All equilibria in ``[0, nu_max]^2``, classified and sorted by nu1."""
    if grid_resolution < 10:
        raise PreconditionError("grid_resolution must be at least 10")
    x, ok = damped_newton(_lattice(params, grid_resolution), params, newton_tol)
    inside = ok & np.all((x >= 0) & (x <= params.nu_max), axis=1)
    n_conv = int(inside.sum())
    logger.debug("find_equilibria w_plus=%g: %d/%d seeds converged", params.w_plus, n_conv, len(x))
    if n_conv == 0:
        raise NoConvergence(
            f"no seed converged at w_plus={params.w_plus}", seeds_converged=0, w_plus=params.w_plus
        )
    reps = [_polish(q, params) for q in _dedup(x[inside], dedup_tol)]
    reps.sort(key=lambda q: (q[0], q[1]))
    labels, eigs = [], []
    for q in reps:
        mu = eigenvalues_2x2(jacobian(q, params))
        eigs.append(mu)
        labels.append(stability_label(mu))
    roles = assign_roles(np.array(reps), params, labels)
    return [
        Equilibrium(RateState.from_array(q), mu, lab, role)
        for q, mu, lab, role in zip(reps, eigs, labels, roles)
    ]


def spontaneous_state(equilibria: list[Equilibrium]) -> Equilibrium:
    for e in equilibria:
        if e.role == "spontaneous":
            return e
    raise PreconditionError("no spontaneous equilibrium among the given equilibria")


def decision_states(equilibria: list[Equilibrium]) -> dict[str, Equilibrium]:
    """Map ``decision-1`` / ``decision-2`` to the outermost stable state of each pool."""
    out: dict[str, Equilibrium] = {}
    for e in equilibria:
        if e.role in ("decision-1", "decision-2"):
            k = 0 if e.role == "decision-1" else 1
            if e.role not in out or e.as_array()[k] > out[e.role].as_array()[k]:
                out[e.role] = e
    return out


@dataclass
class BifurcationDiagram:
    w_plus: np.ndarray
    equilibria: list[list[Equilibrium]]
    branch_ids: list[list[int]]
    folds: list[float]
    fold_counts: list[tuple[int, int]]

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(e) for e in self.equilibria])

    def rows(self):
        """Flat records ``(w_plus, branch_id, nu1, nu2, re_mu1, re_mu2, stability)``."""
        for w, eqs, ids in zip(self.w_plus, self.equilibria, self.branch_ids):
            for e, bid in zip(eqs, ids):
                yield (
                    float(w),
                    bid,
                    e.location.nu1,
                    e.location.nu2,
                    float(e.eigenvalues[0].real),
                    float(e.eigenvalues[1].real),
                    e.stability,
                )


def _link_branches(prev, cur, prev_ids, next_id, link_tol):
    ids = [-1] * len(cur)
    if prev:
        a = np.array([e.as_array() for e in prev])
        b = np.array([e.as_array() for e in cur])
        cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if cost[r, c] <= link_tol:
                ids[c] = prev_ids[r]
    for i in range(len(ids)):
        if ids[i] < 0:
            ids[i] = next_id
            next_id += 1
    return ids, next_id


def _count(params, w, grid_resolution):
    try:
        return len(find_equilibria(params.replace(w_plus=w), grid_resolution))
    except NoConvergence as exc:
        exc.w_plus = w
        raise


def refine_fold(params, w_lo, w_hi, count_lo, grid_resolution=40, fold_tol=FOLD_TOL):
    """Bisect on the equilibrium count between two samples with different counts."""
    while w_hi - w_lo > fold_tol:
        mid = 0.5 * (w_lo + w_hi)
        if _count(params, mid, grid_resolution) == count_lo:
            w_lo = mid
        else:
            w_hi = mid
    return 0.5 * (w_lo + w_hi)


def bifurcation_scan(
    params: ModelParams,
    w_range=(0.5, 3.5),
    steps: int = 61,
    grid_resolution: int = 40,
    fold_tol: float = FOLD_TOL,
    link_tol: float = 1.0,
) -> BifurcationDiagram:
    """Sweep w_plus, link branches by nearest neighbour and locate folds.

    A fold is recorded wherever the equilibrium count differs between
    consecutive samples; its location is refined by bisection on the count.
    """
    lo, hi = float(w_range[0]), float(w_range[1])
    if not (0.5 <= lo < hi <= 3.5):
        raise PreconditionError("w_range must lie within [0.5, 3.5] with lo < hi")
    if steps < 2:
        raise PreconditionError("steps must be at least 2")
    ws = np.linspace(lo, hi, steps)
    all_eq, all_ids = [], []
    prev, prev_ids, next_id = [], [], 0
    for w in ws:
        try:
            eqs = find_equilibria(params.replace(w_plus=float(w)), grid_resolution)
        except NoConvergence as exc:
            exc.w_plus = float(w)
            raise
        ids, next_id = _link_branches(prev, eqs, prev_ids, next_id, link_tol)
        all_eq.append(eqs)
        all_ids.append(ids)
        prev, prev_ids = eqs, ids
    folds, fold_counts = [], []
    for k in range(steps - 1):
        c0, c1 = len(all_eq[k]), len(all_eq[k + 1])
        if c0 != c1:
            wf = refine_fold(params, float(ws[k]), float(ws[k + 1]), c0, grid_resolution, fold_tol)
            folds.append(wf)
            fold_counts.append((c0, c1))
    return BifurcationDiagram(ws, all_eq, all_ids, folds, fold_counts)
