"""Re-solving frequency under a compute budget.

Chooses ``f`` minimizing ``log(T/f) + sqrt(f)`` subject to the cost of
``k = T // f`` LP re-solves (``m^2 (m + b f)`` for the ``b``-th) plus the
first-order work ``2 m f`` fitting in the budget ``R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["BudgetModel", "PlanResult", "optimal_frequency", "regret_bound", "plan_cost"]


@dataclass(frozen=True)
class BudgetModel:
    horizon: int
    resource_count: int
    budget: float = math.inf

    def __post_init__(self):
        if self.horizon < 1 or self.resource_count < 1:
            raise ValueError("horizon and resource_count must be >= 1")
        if not self.budget > 0:
            raise ValueError("budget must be positive")

    def lp_cost(self, t) -> float:
        m = self.resource_count
        return m * m * (m + t)

    def fo_cost(self, f) -> float:
        return 2 * self.resource_count * f


@dataclass(frozen=True)
class PlanResult:
    f: int
    bound_value: float
    feasible: bool


def regret_bound(T, f):
    return np.log(T / f) + np.sqrt(f)


def plan_cost(model: BudgetModel, f):
    """Total compute for frequency ``f`` (scalar or array)."""
    T, m = model.horizon, model.resource_count
    f = np.asarray(f, dtype=np.float64)
    k = np.floor(T / f)
    # sum_{b=1}^k m^2 (m + b f) in closed form
    return m * m * (k * m + f * k * (k + 1) / 2) + 2 * m * f


def optimal_frequency(model: BudgetModel) -> PlanResult:
    """Exhaustive scan over ``f = 1..T``; ties go to the smaller ``f``.

    If no ``f`` fits the budget, returns the unconstrained minimizer with
    ``feasible=False``.
    """
    f = np.arange(1, model.horizon + 1, dtype=np.float64)
    bound = regret_bound(model.horizon, f)
    ok = plan_cost(model, f) <= model.budget
    feasible = bool(ok.any())
    scored = np.where(ok, bound, np.inf) if feasible else bound
    i = int(np.argmin(scored))
    return PlanResult(int(f[i]), float(bound[i]), feasible)
