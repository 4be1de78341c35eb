"""Online accept/reject policies driven by dual prices.

Four policies share one loop: observe order ``t``, accept iff its reward beats
its priced demand, update the remaining resources, then update the prices.
They differ only in how the price is updated after step ``t``:

``ahdl``           re-solve the sampled dual on the remaining average capacity
                   at every step.
``first_order``    projected subgradient step against the initial capacity.
``hybrid``         re-solve at ``f, 2f, ..., kf``; subgradient steps inside the
                   first and last batch; prices carried forward in between.
``enhanced``       re-solve at ``f, 2f, ..., kf``; subgradient steps at every
                   other step, restarting from each re-solved price.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TextIO, Union

import numpy as np

from .dual_lp import Basis, LpStatus, SampledDualProblem, solve_sampled_dual
from .instances import Instance, Order

__all__ = [
    "Algorithm",
    "Guard",
    "PolicyConfig",
    "PolicyState",
    "Trajectory",
    "PolicyError",
    "decide",
    "step_first_order",
    "resolve_schedule",
    "step_size",
    "guard_check",
    "run_policy",
    "price_bound",
    "write_trajectory",
]


class Algorithm(str, enum.Enum):
    AHDL = "ahdl"
    FIRST_ORDER = "first_order"
    HYBRID = "hybrid"
    ENHANCED = "enhanced"

    @classmethod
    def parse(cls, value) -> "Algorithm":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {
            "lp": "ahdl", "lp_based": "ahdl",
            "fo": "first_order", "firstorder": "first_order",
            "alg3": "hybrid", "enhancedhybrid": "enhanced",
            "enhanced_hybrid": "enhanced", "alg4": "enhanced",
        }
        return cls(aliases.get(key, key))


class Guard(str, enum.Enum):
    HARD = "hard"
    THEORETICAL = "theoretical"


StepSchedule = Union[str, Sequence[float], Callable[[int], float], None]


@dataclass
class PolicyConfig:
    """Algorithm choice and its knobs.

    ``steps`` is ``"harmonic"`` (``1/(t+1)``), ``"batch-const"`` (``1/sqrt(f)``,
    with ``f = T`` for the pure first-order policy), a sequence indexed by
    ``t - 1``, or a callable of ``t``. ``None`` picks harmonic for the pure
    first-order policy and batch-const for the hybrids.
    """

    kind: Algorithm = Algorithm.HYBRID
    f: int = 1
    steps: StepSchedule = None
    guard: Guard = Guard.HARD
    delta_guard: Optional[float] = None
    lp_tol: float = 1e-9
    lp_max_iter: Optional[int] = None
    warm_start: bool = False

    def __post_init__(self):
        self.kind = Algorithm.parse(self.kind)
        self.guard = Guard(str(getattr(self.guard, "value", self.guard)).lower())
        if self.f < 1:
            raise ValueError("re-solving frequency must be >= 1")
        if self.delta_guard is not None and not self.delta_guard > 0:
            raise ValueError("delta_guard must be positive")
        if self.steps is None:
            self.steps = "harmonic" if self.kind is Algorithm.FIRST_ORDER else "batch-const"
        if isinstance(self.steps, str):
            key = self.steps.lower().replace("_", "-")
            key = {"constantperbatch": "batch-const", "constant": "batch-const",
                   "const": "batch-const"}.get(key.replace("-", ""), key)
            if key not in ("harmonic", "batch-const"):
                raise ValueError(f"unknown step schedule {self.steps!r}")
            self.steps = key


class PolicyError(RuntimeError):
    """An LP re-solve failed; carries the solver status and the timestep."""

    def __init__(self, status: LpStatus, t: int):
        super().__init__(f"LP re-solve at t={t} ended with status {status.value}")
        self.status = status
        self.t = t


@dataclass
class PolicyState:
    t: int
    remaining: np.ndarray
    avg_remaining: np.ndarray
    prices: np.ndarray
    initial_avg: np.ndarray
    config: PolicyConfig
    reject_all: bool = False


@dataclass
class Trajectory:
    decisions: np.ndarray
    prices_seen: np.ndarray
    remaining: np.ndarray
    consumption: np.ndarray
    revenue: float
    lp_solve_count: int
    guard_trip_time: Optional[int]
    final_prices: np.ndarray
    algorithm: str = ""
    f: int = 1
    wall_time: float = 0.0

    @property
    def steps(self) -> int:
        return int(self.decisions.shape[0])


def decide(order: Order, prices) -> int:
    """Accept iff the reward strictly exceeds the priced demand; ties reject."""
    return int(order.reward > float(np.dot(order.demand, prices)))


def step_first_order(prices, demand, x, d, alpha: float) -> np.ndarray:
    """One projected subgradient step ``max(p - alpha (d - a x), 0)``."""
    if not alpha > 0:
        raise ValueError("step size must be positive")
    p = np.asarray(prices, dtype=np.float64) - alpha * (
        np.asarray(d, dtype=np.float64) - np.asarray(demand, dtype=np.float64) * x)
    return np.maximum(p, 0.0)


def resolve_schedule(T: int, f: int) -> list[int]:
    """Re-solve times ``{t <= k f : t mod f == 0}`` with ``k = T // f``."""
    if not 1 <= f <= T:
        raise ValueError(f"need 1 <= f <= T, got f={f}, T={T}")
    k = T // f
    return list(range(f, k * f + 1, f))


def step_size(config: PolicyConfig, t: int, T: int) -> float:
    s = config.steps
    if s == "harmonic":
        return 1.0 / (t + 1)
    if s == "batch-const":
        f = T if config.kind is Algorithm.FIRST_ORDER else config.f
        return 1.0 / math.sqrt(f)
    if callable(s):
        return float(s(t))
    return float(s[t - 1])


def guard_check(state: PolicyState, order: Optional[Order] = None) -> bool:
    """True when the current order must be rejected.

    Hard mode refuses just the order that would overdraw a resource.
    Theoretical mode with ``delta_guard`` latches ``reject_all`` once the
    average remaining capacity leaves ``[d - delta, d + delta]``. Theoretical
    mode without ``delta_guard`` never trips.
    """
    cfg = state.config
    if state.reject_all:
        return True
    if cfg.guard is Guard.HARD:
        if order is None:
            return False
        return bool(np.any(state.remaining - order.demand < 0))
    if cfg.delta_guard is not None:
        if np.any(np.abs(state.avg_remaining - state.initial_avg) > cfg.delta_guard):
            state.reject_all = True
    return state.reject_all


def price_bound(r_max: float, a_max: float, d_lo: float, d_hi: float, m: int,
                delta: float = 0.0) -> float:
    """Upper bound on online price norms for bounded inputs (monitoring only)."""
    spread = m * (a_max + d_hi)
    fo = (2 * r_max + m * (a_max + d_hi) ** 2) / d_lo + spread
    lp = r_max / (d_lo - delta) if d_lo > delta else math.inf
    return max(lp, fo)


# update kinds after each step
_NONE, _FO, _LP, _CARRY = 0, 1, 2, 3


def _update_plan(kind: Algorithm, T: int, f: int) -> np.ndarray:
    plan = np.empty(T + 1, dtype=np.int8)  # index t = 1..T
    plan[0] = _NONE
    if kind is Algorithm.AHDL:
        plan[1:] = _LP
        plan[T] = _NONE
        return plan
    if kind is Algorithm.FIRST_ORDER:
        plan[1:] = _FO
        return plan
    k = T // f
    t = np.arange(T + 1)
    resolve = (t % f == 0) & (t <= k * f) & (t >= 1)
    if kind is Algorithm.HYBRID:
        plan[:] = np.where((t <= f) | (t > k * f), _FO, _CARRY)
    else:
        plan[:] = _FO
    plan[resolve] = _LP
    plan[0] = _NONE
    return plan


def run_policy(instance: Instance, config: PolicyConfig,
               steps: Optional[int] = None) -> Trajectory:
    """Run one policy over the instance (or its first ``steps`` arrivals)."""
    T = instance.horizon
    m = instance.resource_count
    kind = config.kind
    f = config.f if kind in (Algorithm.HYBRID, Algorithm.ENHANCED) else 1
    if not 1 <= f <= T:
        raise ValueError(f"re-solving frequency f={f} outside [1, T={T}]")
    n_steps = T if steps is None else int(steps)
    if not 1 <= n_steps <= T:
        raise ValueError("steps must be in [1, T]")

    started = time.perf_counter()
    R = instance.rewards
    A = instance.demands
    b = instance.capacity.astype(np.float64)
    d = instance.avg_capacity.astype(np.float64)
    hard = config.guard is Guard.HARD
    delta = config.delta_guard if config.guard is Guard.THEORETICAL else None
    plan = _update_plan(kind, T, f)

    decisions = np.zeros(n_steps, dtype=np.int8)
    prices_seen = np.empty((n_steps, m))
    remaining = np.empty((n_steps, m))
    used = np.zeros(m)
    d_t = d.copy()
    p = np.zeros(m)
    reject_all = False
    trip: Optional[int] = None
    lp_count = 0
    basis: Optional[Basis] = None
    harmonic = config.steps == "harmonic"
    const_alpha = 1.0 / math.sqrt(T if kind is Algorithm.FIRST_ORDER else f)

    t = 1
    while t <= n_steps:
        if plan[t] == _CARRY and t < n_steps:
            # prices stay fixed until the next non-carry update
            u = t
            while u + 1 <= n_steps and plan[u + 1] == _CARRY:
                u += 1
            done, used, reject_all, trip_at = _carry_block(
                t, u, p, R, A, b, d, T, used, hard, delta, reject_all,
                decisions, prices_seen, remaining)
            if trip_at is not None and trip is None:
                trip = trip_at
            t = done + 1
            if t > n_steps:
                break
            d_t = _avg_remaining(b, used, T, t - 1, d_t)
            continue

        # decision at t with the current prices
        a = A[t - 1]
        r = R[t - 1]
        prices_seen[t - 1] = p
        x = 0
        if not reject_all and r > a @ p:
            x = 1
            if hard and np.any(used + a > b):
                x = 0
                if trip is None:
                    trip = t
        if x:
            used = used + a
        decisions[t - 1] = x
        remaining[t - 1] = b - used
        if t < T:
            d_t = (b - used) / (T - t)
            if delta is not None and not reject_all and np.any(np.abs(d_t - d) > delta):
                reject_all = True
                if trip is None:
                    trip = t

        kind_t = plan[t]
        if kind_t == _FO:
            alpha = (1.0 / (t + 1)) if harmonic else (
                const_alpha if config.steps == "batch-const" else step_size(config, t, T))
            p = p - alpha * (d - a * x)
            np.maximum(p, 0.0, out=p)
        elif kind_t == _LP:
            problem = SampledDualProblem(np.maximum(d_t, 0.0), R[:t], A[:t])
            sol = solve_sampled_dual(problem, config.lp_tol, config.lp_max_iter,
                                     warm=basis if config.warm_start else None)
            lp_count += 1
            if sol.status is not LpStatus.OPTIMAL:
                raise PolicyError(sol.status, t)
            p = sol.prices.copy()
            basis = sol.basis
        t += 1

    wall = time.perf_counter() - started
    return Trajectory(
        decisions=decisions,
        prices_seen=prices_seen,
        remaining=remaining,
        consumption=used,
        revenue=float(np.dot(R[:n_steps], decisions)),
        lp_solve_count=lp_count,
        guard_trip_time=trip,
        final_prices=p,
        algorithm=kind.value,
        f=f,
        wall_time=wall,
    )


def _avg_remaining(b, used, T, t, previous):
    if 1 <= t < T:
        return (b - used) / (T - t)
    return previous


def _carry_block(t, u, p, R, A, b, d, T, used, hard, delta, reject_all,
                 decisions, prices_seen, remaining):
    """Decide steps ``t..u`` (1-based) at fixed prices ``p``.

    Consumption is accumulated sequentially with ``cumsum`` so it matches the
    step-by-step loop bit for bit. Returns the last step handled, the updated
    consumption, the latch flag and the step at which a guard first fired.
    """
    lo, hi = t - 1, u
    prices_seen[lo:hi] = p
    trip = None
    if reject_all:
        remaining[lo:hi] = b - used
        return u, used, True, None
    x = (R[lo:hi] > A[lo:hi] @ p).astype(np.int8)
    path = np.cumsum(np.vstack([used[None, :], A[lo:hi] * x[:, None]]), axis=0)[1:]
    if hard:
        over = np.flatnonzero(np.any(path > b, axis=1))
        if over.size:
            k = int(over[0])
            # accept up to k - 1, then finish the block one order at a time
            decisions[lo:lo + k] = x[:k]
            remaining[lo:lo + k] = b - path[:k]
            used = path[k - 1].copy() if k > 0 else used
            for s in range(lo + k, hi):
                xs = 0
                if R[s] > A[s] @ p:
                    if np.any(used + A[s] > b):
                        if trip is None:
                            trip = s + 1
                    else:
                        xs = 1
                        used = used + A[s]
                decisions[s] = xs
                remaining[s] = b - used
            return u, used, False, trip
    elif delta is not None:
        steps = np.arange(t, u + 1)
        live = steps < T
        avg = (b - path[live]) / (T - steps[live])[:, None]
        out = np.flatnonzero(np.any(np.abs(avg - d) > delta, axis=1))
        if out.size:
            k = int(out[0])
            x[k + 1:] = 0
            path[k + 1:] = path[k]
            trip = t + k
            reject_all = True
    decisions[lo:hi] = x
    remaining[lo:hi] = b - path
    return u, path[-1].copy(), reject_all, trip


def write_trajectory(traj: Trajectory, instance: Instance, dest: TextIO) -> None:
    """Columnar text: ``t, x_t, r_t, revenue_to_date, remaining_1..m``."""
    m = instance.resource_count
    dest.write("t,x,r,revenue," + ",".join(f"remaining{i + 1}" for i in range(m)) + "\n")
    r = instance.rewards[:traj.steps]
    revenue = np.cumsum(r * traj.decisions)
    for i in range(traj.steps):
        dest.write(
            f"{i + 1},{int(traj.decisions[i])},{float(r[i])!r},{float(revenue[i])!r},"
            + ",".join(repr(float(v)) for v in traj.remaining[i]) + "\n")
