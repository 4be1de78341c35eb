"""Dense bounded-variable simplex for the online LP subproblems.

Both LPs solved here share one shape, the packing LP

    max  r.x   s.t.  A x <= c,  0 <= x <= 1,

whose dual is ``min c.p + sum_j (r_j - a_j.p)^+`` over ``p >= 0``. The sampled
dual of a re-solve step is this LP with ``c = t * d_t`` (objective divided by
``t``); the offline hindsight problem is the same LP with ``c = b``.

The solver is a dual simplex on ``[A | I]`` with one slack per resource, so the
basis is only ``m x m``. Starting from the slack basis with every column on the
bound its reward sign prefers is dual feasible, and a bound-flipping ratio test
lets a single pivot move past many breakpoints. Pivots are chosen by largest
infeasibility, falling back to Bland's smallest-index rule after a degenerate
step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .instances import Instance

__all__ = [
    "LpStatus",
    "LpSolution",
    "OfflineSolution",
    "SampledDualProblem",
    "Basis",
    "solve_packing_lp",
    "solve_sampled_dual",
    "solve_offline_primal",
    "dual_objective",
    "packing_dual_objective",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"


@dataclass
class Basis:
    """Reusable simplex state: basic column per row and upper-bound flags.

    Slack columns are stored as ``-(i + 1)`` so a basis stays meaningful when
    more structural columns are appended.
    """

    rows: np.ndarray
    at_upper: np.ndarray


@dataclass
class LpSolution:
    prices: np.ndarray
    objective: float
    status: LpStatus
    iterations: int
    allocation: Optional[np.ndarray] = None
    basis: Optional[Basis] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass
class OfflineSolution:
    allocation: np.ndarray
    objective: float
    prices: np.ndarray
    dual_objective: float
    status: LpStatus
    iterations: int


@dataclass
class SampledDualProblem:
    """``min_{p>=0} d.p + (1/t) sum_j (r_j - a_j.p)^+`` over ``t`` samples."""

    target_capacity: np.ndarray
    rewards: np.ndarray
    demands: np.ndarray

    def __post_init__(self):
        self.target_capacity = np.atleast_1d(np.asarray(self.target_capacity, dtype=np.float64))
        self.rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        self.demands = np.asarray(self.demands, dtype=np.float64).reshape(
            self.rewards.shape[0], self.target_capacity.shape[0])
        if self.rewards.shape[0] == 0:
            raise ValueError("sampled dual problem needs at least one sample")
        if not np.all(np.isfinite(self.target_capacity)):
            raise ValueError("target capacity must be finite")

    @property
    def sample_count(self) -> int:
        return int(self.rewards.shape[0])


def packing_dual_objective(p, rewards, demands, capacity) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(np.dot(capacity, p) + np.maximum(rewards - demands @ p, 0.0).sum())


def dual_objective(p, problem: SampledDualProblem) -> float:
    """Sample-average dual objective ``d.p + mean((r - A p)^+)``."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any(p < 0):
        raise ValueError("prices must be nonnegative")
    slack = np.maximum(problem.rewards - problem.demands @ p, 0.0)
    return float(np.dot(problem.target_capacity, p) + slack.mean())


def _initial_basis(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    return -(np.arange(m) + 1), np.zeros(n, dtype=bool)


def _long_step(ratios: np.ndarray, weights: np.ndarray, delta: float):
    """Bound-flipping ratio test.

    Walks breakpoints in increasing ratio (ties by position, i.e. column index)
    until the accumulated weight covers ``delta``. Returns the positions that
    flip and the position that enters, or ``None`` if nothing enters. A
    weighted quickselect narrows the candidates before the final sort, so the
    cost is linear in the number of breakpoints.
    """
    size = ratios.shape[0]
    if size > 64:
        # cheap first look: the few smallest ratios often cover delta already
        head = np.argpartition(ratios, 16)[:17]
        head = head[np.lexsort((head, ratios[head]))]
        spent = np.cumsum(weights[head])
        stop = int(np.searchsorted(spent >= delta, True))
        if stop < 17 and ratios[head[stop]] < ratios[head[-1]]:
            return head[:stop], int(head[stop])
    pos = None
    rr, ww = ratios, weights
    flipped = []
    while rr.size > 64:
        half = rr.size // 2
        pivot = np.partition(rr, half)[half]
        lower = rr < pivot
        keep = np.flatnonzero(lower)
        if keep.size == 0:
            break
        wl = ww[keep].sum()
        if wl < delta:
            flipped.append(keep if pos is None else pos[keep])
            delta -= wl
            keep = np.flatnonzero(~lower)
        pos = keep if pos is None else pos[keep]
        rr, ww = ratios[pos], weights[pos]
    if pos is None:
        pos = np.arange(ratios.shape[0])
    local = np.argsort(rr, kind="stable")
    spent = np.cumsum(ww[local])
    stop = int(np.searchsorted(spent >= delta, True))
    if stop >= local.size:
        return None
    order = pos[local]
    flipped.append(order[:stop])
    return np.concatenate(flipped), int(order[stop])


def solve_packing_lp(
    rewards: np.ndarray,
    demands: np.ndarray,
    capacity: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    warm: Optional[Basis] = None,
) -> LpSolution:
    """Solve ``max r.x s.t. A x <= c, 0 <= x <= 1`` by dual simplex.

    ``demands`` is ``A`` transposed, one row per column of the LP. Returns the
    optimal ``x`` as ``allocation`` and the row duals as ``prices``;
    ``objective`` is the primal value ``r.x``. ``max_iter`` defaults to
    ``50 (m + n)`` pivots.

    If a run of degenerate pivots stalls (rewards that are exact linear
    combinations of demands put every column on one dual face), the solve
    restarts once with the costs perturbed by at most ``tol / 10`` relative.
    """
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    n = r.shape[0]
    c = np.atleast_1d(np.asarray(capacity, dtype=np.float64))
    m = c.shape[0]
    A = np.asarray(demands, dtype=np.float64).reshape(n, m)
    if max_iter is None:
        max_iter = 50 * (m + n)

    rows, at_upper = _initial_basis(m, n)
    if warm is not None and warm.rows.shape[0] == m and not np.any(warm.rows >= n):
        rows = warm.rows.copy()
        k = min(warm.at_upper.shape[0], n)
        at_upper[:k] = warm.at_upper[:k]

    cold = warm is None
    out = _dual_simplex(r, A, c, rows, at_upper, tol, max_iter, 4 * m + 20, cold)
    if out is None:
        bump = np.random.default_rng(n).uniform(0.5, 1.0, n)
        cost = r + 0.1 * tol * (1.0 + np.abs(r)) * bump
        rows, at_upper = _initial_basis(m, n)
        out = _dual_simplex(cost, A, c, rows, at_upper, tol, max_iter, None, True)
    x, prices, status, iterations, basis = out
    return LpSolution(
        prices=prices,
        objective=float(r @ x),
        status=status,
        iterations=iterations,
        allocation=x,
        basis=basis,
    )


def _basis_matrix(A: np.ndarray, rows: np.ndarray) -> np.ndarray:
    m = rows.shape[0]
    B = np.zeros((m, m))
    for i, v in enumerate(rows):
        if v < 0:
            B[-v - 1, i] = 1.0
        else:
            B[:, i] = A[v]
    return B


def _dual_simplex(r, A, c, rows, at_upper, tol, max_iter, stall_limit, cold):
    """Core pivoting loop; returns ``None`` if ``stall_limit`` degenerate pivots
    occur in a row."""
    n, m = A.shape
    ptol = tol * max(1.0, float(np.abs(c).max(initial=0.0)))
    atol = 1e-12
    iterations = 0
    streak = 0
    degenerate = False
    status = LpStatus.OPTIMAL
    xu = at_upper.astype(np.float64)  # nonbasic columns sitting at x = 1
    neg_r = -r
    while True:
        try:
            Binv = np.linalg.inv(_basis_matrix(A, rows))
        except np.linalg.LinAlgError:
            rows, _ = _initial_basis(m, n)
            Binv = np.eye(m)
            iterations = max(iterations, 0)
        structural = rows >= 0
        basic_cols = rows[structural]
        # duals pi = c_B B^-1 with cost -r on structural columns, 0 on slacks
        cost_B = np.zeros(m)
        cost_B[structural] = -r[basic_cols]
        pi = cost_B @ Binv
        red = neg_r - A @ pi if basic_cols.size else neg_r
        if iterations == 0:
            # place every nonbasic column on the bound its reduced cost prefers
            if cold:
                xu = (red < 0).astype(np.float64)
            else:
                xu = np.where(red < 0, 1.0, np.where(red > 0, 0.0, xu))
        xu[basic_cols] = 0.0

        xB = Binv @ (c - xu @ A)
        below = -xB
        above = np.where(structural, xB - 1.0, -np.inf)
        infeas = np.maximum(below, above)
        bad = infeas > ptol
        if not bad.any():
            break
        if iterations >= max_iter:
            status = LpStatus.MAX_ITERATIONS
            break
        if stall_limit is not None and streak >= stall_limit:
            return None
        iterations += 1

        cand_rows = np.flatnonzero(bad)
        if degenerate:
            # Bland: leaving variable with the smallest column index
            keys = np.where(rows[cand_rows] < 0, n - rows[cand_rows] - 1, rows[cand_rows])
            rsel = int(cand_rows[np.argmin(keys)])
        else:
            rsel = int(cand_rows[np.argmax(infeas[cand_rows])])
        goes_low = below[rsel] > ptol
        delta = below[rsel] if goes_low else above[rsel]

        rho = Binv[rsel]
        # signed pivot row: a column is a breakpoint when this is positive
        sign = -1.0 if goes_low else 1.0
        alpha = A @ (sign * rho)
        signed = alpha * (1.0 - 2.0 * xu)
        signed[basic_cols] = 0.0
        idx = np.flatnonzero(signed > atol)
        slack_nb = np.ones(m, dtype=bool)
        slack_nb[-rows[~structural] - 1] = False
        idx_s = np.flatnonzero(slack_nb & (sign * rho > atol))
        if idx.size == 0 and idx_s.size == 0:
            status = LpStatus.UNBOUNDED
            break
        a_idx = np.abs(alpha[idx])
        ratios = np.abs(red[idx] / a_idx)
        weights = a_idx
        cols = idx
        if idx_s.size:
            ratios = np.concatenate([ratios, np.abs(pi[idx_s] / rho[idx_s])])
            weights = np.concatenate([weights, np.full(idx_s.size, np.inf)])
            cols = np.concatenate([cols, n + idx_s])
        if degenerate:
            # textbook step: smallest column among the min-ratio ties, no flips
            tied = np.flatnonzero(ratios <= ratios.min() + tol)
            step = tied[:0], int(tied[np.argmin(cols[tied])])
        else:
            step = _long_step(ratios, weights, delta - ptol)
        if step is None:
            # every breakpoint is a boxed flip and infeasibility remains
            status = LpStatus.UNBOUNDED
            break
        flips, entering = step
        fc = cols[flips]
        fc = fc[fc < n]
        xu[fc] = 1.0 - xu[fc]
        enter = int(cols[entering])
        degenerate = ratios[entering] <= tol
        streak = streak + 1 if degenerate else 0

        leaving = int(rows[rsel])
        if leaving >= 0:
            xu[leaving] = 0.0 if goes_low else 1.0
        if enter < n:
            rows[rsel] = enter
        else:
            rows[rsel] = -(enter - n) - 1

    x = xu.copy()
    x[basic_cols] = np.clip(xB[structural], 0.0, 1.0)
    prices = np.maximum(-pi, 0.0)
    return x, prices, status, iterations, Basis(rows.copy(), xu > 0.5)


def solve_sampled_dual(
    problem: SampledDualProblem,
    tol: float = DEFAULT_TOL,
    max_iter: Optional[int] = None,
    warm: Optional[Basis] = None,
) -> LpSolution:
    """Minimize the sampled dual objective over ``p >= 0``.

    ``objective`` is reported in sample-average units; at optimality it equals
    ``dual_objective(prices, problem)`` up to ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t = problem.sample_count
    sol = solve_packing_lp(problem.rewards, problem.demands,
                           t * problem.target_capacity, tol, max_iter, warm)
    # strong duality: the packing optimum over t equals the sampled dual optimum
    sol.objective /= t
    return sol


def solve_offline_primal(instance: Instance, tol: float = DEFAULT_TOL,
                         max_iter: Optional[int] = None) -> OfflineSolution:
    """Hindsight LP relaxation over all ``T`` orders, with its dual certificate."""
    sol = solve_packing_lp(instance.rewards, instance.demands, instance.capacity,
                           tol, max_iter)
    dual = packing_dual_objective(sol.prices, instance.rewards, instance.demands,
                                  instance.capacity)
    return OfflineSolution(sol.allocation, sol.objective, sol.prices, dual,
                           sol.status, sol.iterations)
