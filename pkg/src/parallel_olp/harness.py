"""Command-line experiment runner.

Commands::

    run       Monte Carlo regret per (T, algorithm, f) cell, CSV + summary table
    compare   per-T regret, wall time and LP solve counts across algorithms
    plan      budget-constrained re-solving frequency
    gen       write one instance to a file
    replay    run a policy on a serialized instance

A flat ``key = value`` file given with ``--config`` supplies defaults for the
flags of the chosen command; flags on the command line win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .instances import DEFAULT_D_HI, DEFAULT_D_LO, generate_instance, read_instance, write_instance
from .metrics import OracleError, regret_report, write_csv
from .planner import BudgetModel, optimal_frequency
from .policies import Algorithm, Guard, PolicyConfig, PolicyError, run_policy, write_trajectory

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_USAGE = 2
EXIT_INFEASIBLE_PLAN = 3

FIXED_ALGOS = (Algorithm.AHDL, Algorithm.FIRST_ORDER)


@dataclass
class ExperimentSpec:
    horizons: list
    m: int = 1
    model: str = "input1"
    betas: list = field(default_factory=lambda: [1 / 3])
    freq: Optional[int] = None
    algorithms: list = field(default_factory=lambda: [Algorithm.HYBRID])
    trials: int = 10
    base_seed: int = 0
    guard: Guard = Guard.HARD
    delta: Optional[float] = None
    steps: Optional[str] = None
    d_lo: float = DEFAULT_D_LO
    d_hi: float = DEFAULT_D_HI
    warm_start: bool = True
    workers: int = 1
    out: Optional[str] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.horizons or any(T < 1 for T in self.horizons):
            raise ValueError("horizons must be positive")
        if self.freq is None and any(not 0 < b <= 1 for b in self.betas):
            raise ValueError("every beta must lie in (0, 1]")
        if self.freq is not None and self.freq < 1:
            raise ValueError("freq must be >= 1")
        self.algorithms = [Algorithm.parse(a) for a in self.algorithms]

    def frequency(self, T: int, beta: Optional[float]) -> int:
        if self.freq is not None:
            return min(self.freq, T)
        # round up, then trim float noise such as 1000 ** (1/3) = 9.999...
        return min(T, max(1, math.ceil(round(T ** beta, 9))))

    def cells(self):
        """``(T, algorithm, f, label)`` for every cell, in a fixed order."""
        out = []
        for T in self.horizons:
            for algo in self.algorithms:
                if algo in FIXED_ALGOS:
                    out.append((T, algo, 1, "-"))
                elif self.freq is not None:
                    out.append((T, algo, self.frequency(T, None), f"f={self.freq}"))
                else:
                    for beta in self.betas:
                        out.append((T, algo, self.frequency(T, beta), _beta_label(beta)))
        return out


def _beta_label(beta: float) -> str:
    for num, den in ((1, 3), (1, 2), (2, 3), (1, 1), (1, 4), (3, 4)):
        if abs(beta - num / den) < 1e-9:
            return f"T^{num}/{den}"
    return f"T^{beta:g}"


def trial_seed(base_seed: int, T: int, m: int, model: str, trial: int) -> int:
    """Seed for one trial; independent of the algorithm so comparisons are paired."""
    key = f"{T}|{m}|{model}|{trial}".encode()
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    return (int(base_seed) ^ h) & 0x7FFFFFFFFFFFFFFF


def _run_trial(args):
    spec, T, algo, f, trial = args
    seed = trial_seed(spec.base_seed, T, spec.m, spec.model, trial)
    instance = generate_instance(T, spec.m, spec.model, seed, spec.d_lo, spec.d_hi)
    config = PolicyConfig(kind=algo, f=f, steps=spec.steps, guard=spec.guard,
                          delta_guard=spec.delta, warm_start=spec.warm_start)
    try:
        traj = run_policy(instance, config)
        rep = regret_report(traj, instance)
    except PolicyError as exc:
        return {"error": True, "seed": seed, "T": T, "algorithm": algo.value, "f": f,
                "trial": trial, "t": exc.t, "status": exc.status.value}
    except OracleError as exc:
        return {"error": True, "seed": seed, "T": T, "algorithm": algo.value, "f": f,
                "trial": trial, "t": None, "status": str(exc)}
    return {
        "seed": seed, "T": T, "m": spec.m, "f": f, "algorithm": algo.value,
        "gap": repr(rep.optimality_gap), "violation": repr(rep.violation),
        "total": repr(rep.total), "lp_solves": traj.lp_solve_count,
        "wall_time": f"{traj.wall_time:.6f}", "offline": rep.offline_objective,
    }


def execute(spec: ExperimentSpec):
    """Run every trial of every cell. Results come back keyed by cell and trial."""
    tasks = []
    for T, algo, f, label in spec.cells():
        for i in range(spec.trials):
            tasks.append((spec, T, algo, f, i))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_trial, tasks, chunksize=1))
    else:
        results = [_run_trial(t) for t in tasks]
    by_cell = {}
    n = spec.trials
    for j, cell in enumerate(spec.cells()):
        by_cell[cell] = results[j * n:(j + 1) * n]
    return by_cell


def _summary(rows):
    totals = np.array([float(r["total"]) for r in rows])
    std = float(totals.std(ddof=1)) if totals.size > 1 else 0.0
    return {
        "mean": float(totals.mean()),
        "std": std,
        "gap": float(np.mean([float(r["gap"]) for r in rows])),
        "wall": float(np.mean([float(r["wall_time"]) for r in rows])),
        "lp": float(np.mean([r["lp_solves"] for r in rows])),
        "offline": float(np.mean([r["offline"] for r in rows])),
    }


def _split(by_cell):
    rows, errors = [], []
    for cell, results in by_cell.items():
        for r in results:
            (errors if r.get("error") else rows).append(r)
    return rows, errors


def _report_errors(errors, spec) -> int:
    manifest = json.dumps(errors, indent=2, sort_keys=True)
    if spec.out:
        Path(str(spec.out) + ".errors.json").write_text(manifest + "\n")
    print(f"{len(errors)} trial(s) failed in the LP solver:", file=sys.stderr)
    print(manifest, file=sys.stderr)
    return EXIT_SOLVER_FAILURE


def _emit_csv(rows, spec, stream):
    if spec.out:
        with open(spec.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, stream)


def run_table(spec: ExperimentSpec, by_cell) -> str:
    """Rows are T; columns are (algorithm, frequency regime) with mean +/- std regret."""
    cols = []
    for T, algo, f, label in spec.cells():
        key = (algo.value, label)
        if key not in cols:
            cols.append(key)
    header = ["T"] + [f"{a} {lab}" if lab != "-" else a for a, lab in cols] + ["offline"]
    lines = [header]
    for T in spec.horizons:
        line = [str(T)]
        offline = None
        for a, lab in cols:
            hit = [res for (TT, algo, f, label), res in by_cell.items()
                   if TT == T and algo.value == a and label == lab]
            good = [r for r in hit[0] if not r.get("error")] if hit else []
            if not good:
                line.append("n/a")
                continue
            s = _summary(good)
            offline = s["offline"]
            line.append(f"{s['mean']:.3f} ± {s['std']:.3f}")
        line.append("n/a" if offline is None else f"{offline:.3f}")
        lines.append(line)
    return _format(lines)


def compare_table(spec: ExperimentSpec, by_cell) -> str:
    header = ["T", "algorithm", "f", "regret", "gap", "wall_time", "lp_solves"]
    lines = [header]
    for (T, algo, f, label), results in by_cell.items():
        good = [r for r in results if not r.get("error")]
        if not good:
            lines.append([str(T), algo.value, str(f), "n/a", "n/a", "n/a", "n/a"])
            continue
        s = _summary(good)
        lines.append([str(T), algo.value, str(f), f"{s['mean']:.3f}", f"{s['gap']:.3f}",
                      f"{s['wall']:.4f}", f"{s['lp']:g}"])
    return _format(lines)


def _format(lines) -> str:
    widths = [max(len(row[i]) for row in lines) for i in range(len(lines[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in lines) + "\n"


# -- argument handling -------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, many_T: bool = True):
    p.add_argument("--config", help="flat key = value file with flag defaults")
    p.add_argument("--T", type=int, nargs="+" if many_T else None, default=[1000] if many_T else 1000)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--model", default="input1", choices=["input1", "input2"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-lo", type=float, default=DEFAULT_D_LO)
    p.add_argument("--d-hi", type=float, default=DEFAULT_D_HI)


def _add_policy(p: argparse.ArgumentParser, many: bool):
    p.add_argument("--algo", nargs="+" if many else None,
                   default=["hybrid"] if many else "hybrid")
    p.add_argument("--freq", type=int, help="fixed re-solving frequency")
    p.add_argument("--beta", type=float, nargs="+" if many else None,
                   default=[1 / 3] if many else 1 / 3, help="frequency f = ceil(T^beta)")
    p.add_argument("--guard", default="hard", choices=["hard", "theoretical"])
    p.add_argument("--delta", type=float, help="theoretical guard drift bound")
    p.add_argument("--steps", choices=["harmonic", "batch-const"])
    p.add_argument("--cold", action="store_true", help="disable simplex warm starts")
    p.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="parallel-olp", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "regret per frequency regime"),
                        ("compare", "algorithms side by side")):
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        _add_policy(p, many=True)
        p.add_argument("--trials", type=int, default=10)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("plan", help="optimal re-solving frequency under a budget")
    p.add_argument("--config")
    p.add_argument("--T", type=int, required=False, default=1000)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--budget", type=float, default=math.inf)

    p = sub.add_parser("gen", help="write one instance")
    _add_common(p, many_T=False)
    p.add_argument("--out")

    p = sub.add_parser("replay", help="run a policy on a serialized instance")
    p.add_argument("input")
    p.add_argument("--config")
    _add_policy(p, many=False)
    return parser


def read_config(path) -> list:
    """``key = value`` lines to ``--key value...`` tokens. ``#`` starts a comment."""
    argv = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"bad config line: {raw!r}")
        key = key.strip().lstrip("-")
        flag = "--" + (key if key in ("T",) else key.replace("_", "-"))
        value = value.strip()
        if value.lower() in ("true", "yes", "on"):
            argv.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            argv.append(flag)
            argv.extend(shlex.split(value.replace(",", " ")))
    return argv


def _expand_config(argv: list) -> list:
    if not argv or "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return argv
    extra = read_config(argv[i + 1])
    rest = argv[1:i] + argv[i + 2:]
    # config values first so explicit flags, parsed later, override them
    return [argv[0]] + extra + rest


def _spec_from_args(args) -> ExperimentSpec:
    return ExperimentSpec(
        horizons=list(args.T), m=args.m, model=args.model, betas=list(args.beta),
        freq=args.freq, algorithms=list(args.algo), trials=args.trials,
        base_seed=args.seed, guard=Guard(args.guard), delta=args.delta, steps=args.steps,
        d_lo=args.d_lo, d_hi=args.d_hi, warm_start=not args.cold, workers=args.workers,
        out=args.out)


def cmd_run(spec: ExperimentSpec, stdout=None) -> int:
    stdout = stdout or sys.stdout
    by_cell = execute(spec)
    rows, errors = _split(by_cell)
    table = run_table(spec, by_cell)
    if spec.out:
        _emit_csv(rows, spec, stdout)
        stdout.write(table)
    else:
        _emit_csv(rows, spec, stdout)
        sys.stderr.write(table)
    return _report_errors(errors, spec) if errors else EXIT_OK


def cmd_compare(spec: ExperimentSpec, stdout=None) -> int:
    stdout = stdout or sys.stdout
    if len(spec.algorithms) < 2:
        print("compare needs at least two algorithms", file=sys.stderr)
        return EXIT_USAGE
    by_cell = execute(spec)
    rows, errors = _split(by_cell)
    if spec.out:
        _emit_csv(rows, spec, stdout)
    stdout.write(compare_table(spec, by_cell))
    return _report_errors(errors, spec) if errors else EXIT_OK


def cmd_plan(T: int, m: int, budget: float, stdout=None) -> int:
    stdout = stdout or sys.stdout
    res = optimal_frequency(BudgetModel(T, m, budget))
    stdout.write(f"f={res.f} bound={res.bound_value:.6f} feasible={str(res.feasible).lower()}\n")
    if not res.feasible:
        print("warning: no frequency fits the budget; showing the unconstrained optimum",
              file=sys.stderr)
        return EXIT_INFEASIBLE_PLAN
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    args = parser.parse_args(argv)
    try:
        if args.command in ("run", "compare"):
            spec = _spec_from_args(args)
            return cmd_run(spec) if args.command == "run" else cmd_compare(spec)
        if args.command == "plan":
            return cmd_plan(args.T, args.m, args.budget)
        if args.command == "gen":
            inst = generate_instance(args.T, args.m, args.model, args.seed, args.d_lo, args.d_hi)
            if args.out:
                write_instance(inst, args.out)
            else:
                write_instance(inst, sys.stdout)
            return EXIT_OK
        if args.command == "replay":
            return _replay(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


def _replay(args) -> int:
    inst = read_instance(args.input)
    algo = Algorithm.parse(args.algo)
    f = 1
    if algo not in FIXED_ALGOS:
        f = args.freq or min(inst.horizon, max(1, math.ceil(round(inst.horizon ** args.beta, 9))))
    config = PolicyConfig(kind=algo, f=min(f, inst.horizon), steps=args.steps,
                          guard=Guard(args.guard), delta_guard=args.delta,
                          warm_start=not args.cold)
    try:
        traj = run_policy(inst, config)
        rep = regret_report(traj, inst)
    except (PolicyError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_trajectory(traj, inst, fh)
    print(f"algorithm={algo.value} f={config.f} revenue={traj.revenue!r} "
          f"offline={rep.offline_objective!r} gap={rep.optimality_gap!r} "
          f"violation={rep.violation!r} total={rep.total!r} lp_solves={traj.lp_solve_count}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
