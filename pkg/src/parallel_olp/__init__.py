"""Online linear programming with dual-price policies and an LP re-solving spectrum."""

from .dual_lp import (
    LpSolution,
    LpStatus,
    OfflineSolution,
    SampledDualProblem,
    dual_objective,
    solve_offline_primal,
    solve_packing_lp,
    solve_sampled_dual,
)
from .instances import (
    Instance,
    Order,
    generate_instance,
    read_instance,
    register_model,
    sample_capacity,
    sample_input_I,
    sample_input_II,
    write_instance,
)
from .metrics import (
    AggregateReport,
    RegretReport,
    aggregate,
    analytic_dual_price_input1,
    estimate_binding_sets,
    optimality_gap,
    regret_report,
    violation,
)
from .planner import BudgetModel, optimal_frequency
from .policies import (
    Algorithm,
    Guard,
    PolicyConfig,
    PolicyError,
    Trajectory,
    decide,
    guard_check,
    resolve_schedule,
    run_policy,
    step_first_order,
)

__version__ = "0.1.0"
