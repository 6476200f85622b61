"""Exact optimization of the cluster schedule.

The cluster model couples units only through the additive objective, so
each unit's best on/off sequence can be searched independently and the
results concatenated. Two in-repo searches are provided: a vectorized
exhaustive enumeration for short horizons (the oracle) and a pruned
depth-first branch-and-bound for full horizons. An external LP-file solver
can be plugged in for parity checks.
"""

from __future__ import annotations

import math
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import milp, robust, thermal
from .baseline import BaselineResult
from .report import CostReport
from .robust import RobustMargin
from .scenario import AcUnit, ConfigurationError, Scenario, WS_PER_KWH, hours

EXHAUSTIVE_CAP = 16


class ClusterInfeasibleError(ValueError):
    def __init__(self, unit_ids: list[int]):
        self.unit_ids = unit_ids
        super().__init__(
            "cluster infeasible: no schedule satisfies the tightened comfort "
            f"bounds for unit(s) {', '.join(str(i) for i in unit_ids)}"
        )


class ExternalSolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class UnitSubproblem:
    """One unit's cost view of the cluster problem.

    Minimizing on-cost plus priced comfort deviation over feasible binary
    sequences maximizes the unit's share of cluster revenue, which differs
    only by the constant baseline credit.
    """

    unit_id: int
    on_cost: tuple[float, ...]     # CNY charged for running through each period
    alpha: float
    gain: float                    # degC pulled per on-period at equilibrium
    theta_out: tuple[float, ...]   # nominal forecast
    lo: tuple[float, ...]          # tightened lower bounds, period 1 unused
    hi: tuple[float, ...]
    theta_set: float
    penalty_rate: float            # CNY per degC of deviation per period
    initial_theta: float
    initial_on: bool
    initial_dwell: int
    min_up: int
    min_down: int


@dataclass(eq=False)
class SolveReport:
    status: str                    # "optimal" | "infeasible"
    objective: float               # CNY (unit cost or cluster revenue)
    nodes_explored: int
    wall_time: float
    incumbent_history: list[tuple[int, float]]
    # earliest decision period at which every branch was infeasible
    first_dead_period: int | None = None


def build_subproblem(unit: AcUnit, scenario: Scenario, margins: RobustMargin) -> UnitSubproblem:
    dt = scenario.horizon.dt
    lo, hi = robust.tighten_comfort(unit, margins)
    alpha = thermal.decay_factor(unit, dt)
    on_cost = tuple(unit.rated_power * p * dt / WS_PER_KWH for p in scenario.prices.price)
    return UnitSubproblem(
        unit_id=unit.id,
        on_cost=on_cost,
        alpha=alpha,
        gain=unit.cooling_gain,
        theta_out=scenario.forecast.theta_out_pre,
        lo=tuple(lo),
        hi=tuple(hi),
        theta_set=unit.theta_set,
        penalty_rate=scenario.beta * hours(dt),
        initial_theta=unit.initial_theta,
        initial_on=unit.initial_on,
        initial_dwell=unit.initial_dwell_periods,
        min_up=unit.min_up_periods,
        min_down=unit.min_down_periods,
    )


def solve_exhaustive(sub: UnitSubproblem, cap: int = EXHAUSTIVE_CAP):
    """Enumerate all 2^T sequences, keep the cheapest feasible one.

    Ties go to the lexicographically smaller sequence (more off-periods
    early). Returns (on_off, cost); (None, inf) when nothing is feasible.
    The cost accumulation order matches solve_bnb exactly, so the two agree
    to the last bit on common instances.
    """
    T = len(sub.on_cost)
    if T > cap:
        raise ConfigurationError(
            f"exhaustive enumeration is capped at {cap} periods, got {T}"
        )
    n = 1 << T
    # row r spells sequence r in binary, most significant bit first:
    # ascending row index is ascending lexicographic order
    bit_cols = [(np.arange(n) >> (T - 1 - t)) & 1 for t in range(T)]

    pen = sub.penalty_rate
    feasible = np.ones(n, dtype=bool)
    dwell = np.full(n, sub.initial_dwell)
    prev = np.full(n, 1 if sub.initial_on else 0)
    theta = np.full(n, float(sub.initial_theta))
    acc = np.full(n, pen * abs(sub.initial_theta - sub.theta_set))

    for t in range(T):
        ut = bit_cols[t]
        switching = ut != prev
        need = np.where(prev == 1, sub.min_up, sub.min_down)
        feasible &= ~(switching & (dwell < need))
        dwell = np.where(switching, 1, dwell + 1)
        acc = acc + ut * sub.on_cost[t]
        if t < T - 1:
            target = sub.theta_out[t] - sub.gain * ut
            theta = target - (target - theta) * sub.alpha
            feasible &= (theta >= sub.lo[t + 1]) & (theta <= sub.hi[t + 1])
            acc = acc + pen * np.abs(theta - sub.theta_set)
        prev = ut

    if not feasible.any():
        return None, math.inf
    costs = np.where(feasible, acc, math.inf)
    best = int(np.argmin(costs))  # argmin keeps the first (lex-smallest) tie
    on_off = np.array([int(col[best]) for col in bit_cols])
    return on_off, float(costs[best])


def solve_bnb(sub: UnitSubproblem):
    """Depth-first branch-and-bound over the periods.

    Node state is (period, last decision, dwell, nominal temperature,
    accumulated cost). Pruning: (i) accumulated cost at or above the
    incumbent (every future cost is nonnegative); (ii) a branch whose next
    temperature leaves the tightened band; (iii) switches inside a minimum
    up/down window. The cheaper immediate branch is explored first.
    Returns (on_off, cost, SolveReport).
    """
    T = len(sub.on_cost)
    on_cost = sub.on_cost
    theta_out = sub.theta_out
    lo = sub.lo
    hi = sub.hi
    alpha = sub.alpha
    gain = sub.gain
    pen = sub.penalty_rate
    theta_set = sub.theta_set
    min_up = sub.min_up
    min_down = sub.min_down

    best_cost = math.inf
    best_seq: list[int] | None = None
    nodes = 0
    history: list[tuple[int, float]] = []
    first_dead: int | None = None

    choice = [0] * T
    start = time.perf_counter()

    def descend(t: int, prev: int, dwell: int, theta: float, acc: float) -> None:
        nonlocal best_cost, best_seq, nodes, first_dead
        nodes += 1
        last = t == T - 1
        need = min_up if prev == 1 else min_down
        candidates = []
        for u in (0, 1):
            if u != prev and dwell < need:
                continue
            cost = acc + u * on_cost[t]
            if last:
                candidates.append((cost, u, theta))
                continue
            target = theta_out[t] - gain * u
            nxt = target - (target - theta) * alpha
            if nxt < lo[t + 1] or nxt > hi[t + 1]:
                continue
            cost = cost + pen * abs(nxt - theta_set)
            candidates.append((cost, u, nxt))
        if not candidates:
            if first_dead is None or t + 1 < first_dead:
                first_dead = t + 1
            return
        candidates.sort(key=lambda c: (c[0], c[1]))  # cheaper first, off on ties
        for cost, u, nxt in candidates:
            if cost >= best_cost:
                continue
            choice[t] = u
            if last:
                best_cost = cost
                best_seq = choice.copy()
                history.append((nodes, cost))
            else:
                new_dwell = dwell + 1 if u == prev else 1
                descend(t + 1, u, new_dwell, nxt, cost)

    root_acc = pen * abs(sub.initial_theta - theta_set)
    descend(0, 1 if sub.initial_on else 0, sub.initial_dwell, float(sub.initial_theta), root_acc)
    wall = time.perf_counter() - start

    if best_seq is None:
        report = SolveReport(status="infeasible", objective=math.inf, nodes_explored=nodes,
                             wall_time=wall, incumbent_history=history,
                             first_dead_period=first_dead)
        return None, math.inf, report
    report = SolveReport(status="optimal", objective=best_cost, nodes_explored=nodes,
                         wall_time=wall, incumbent_history=history)
    return np.array(best_seq), best_cost, report


def solve_cluster(scenario: Scenario, baseline: BaselineResult,
                  margins: list[RobustMargin], method: str = "bnb",
                  exhaustive_cap: int = EXHAUSTIVE_CAP) -> tuple[milp.Schedule, CostReport]:
    """Solve every unit independently and assemble the cluster schedule.

    Valid because no constraint couples distinct units; the objective is a
    sum of per-unit terms plus the baseline credit.
    """
    if method not in ("bnb", "exhaustive"):
        raise ConfigurationError(f"unknown solve method {method!r}")
    T = scenario.horizon.periods
    rows = []
    infeasible: list[int] = []
    for g, unit in enumerate(scenario.units):
        sub = build_subproblem(unit, scenario, margins[g])
        if method == "exhaustive":
            on_off, cost = solve_exhaustive(sub, cap=exhaustive_cap)
        else:
            on_off, cost, _ = solve_bnb(sub)
        if on_off is None:
            infeasible.append(unit.id)
        else:
            rows.append(on_off)
    if infeasible:
        raise ClusterInfeasibleError(infeasible)

    schedule = milp.make_schedule(scenario, baseline, np.vstack(rows))
    cost_report = milp.evaluate_schedule(schedule, scenario, baseline)
    return schedule, cost_report


# ---------- external solver seam

def solve_external(model: milp.MilpModel, solver_command: str | None,
                   scenario: Scenario, baseline: BaselineResult,
                   tol: float = 1e-6) -> tuple[milp.Schedule, SolveReport]:
    """Run an external MILP solver on the exported LP file.

    Contract: the command is invoked as `<command> <lp_path> <sol_path>` and
    must write whitespace-separated `variable value` lines to sol_path;
    variables omitted there are taken as zero. The returned solution is
    validated against the model before being accepted.
    """
    if not solver_command:
        raise ExternalSolverError(
            "external solver not configured; pass --external-cmd with a program "
            "that accepts <lp_path> <sol_path>"
        )
    start = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="acdr_ext_") as tmp:
        lp_path = Path(tmp) / "model.lp"
        sol_path = Path(tmp) / "model.sol"
        milp.export_lp(model, lp_path)
        cmd = shlex.split(solver_command) + [str(lp_path), str(sol_path)]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExternalSolverError(
                f"external solver exited with {proc.returncode}: {proc.stderr.strip()[-500:]}"
            )
        if not sol_path.exists():
            raise ExternalSolverError("external solver wrote no solution file")
        values: dict[str, float] = {}
        known = model.variable_names()
        for i, line in enumerate(sol_path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ExternalSolverError(f"solution line {i} is not 'name value': {line!r}")
            name, raw = parts
            if name not in known:
                raise ExternalSolverError(f"solution names unknown variable {name!r}")
            try:
                values[name] = float(raw)
            except ValueError as exc:
                raise ExternalSolverError(f"solution line {i}: bad value {raw!r}") from exc

    problems = validate_solution(model, values, tol=tol)
    if problems:
        raise ExternalSolverError("external solution rejected:\n  " + "\n  ".join(problems))

    u_index = model.index["u"]
    unit_ids = model.index["unit_ids"]
    T = model.index["periods"]
    on_off = np.array([
        [int(round(values.get(u_index[(gid, t)], 0.0))) for t in range(1, T + 1)]
        for gid in unit_ids
    ])
    schedule = milp.make_schedule(scenario, baseline, on_off)
    wall = time.perf_counter() - start
    report = SolveReport(status="optimal", objective=schedule.objective,
                         nodes_explored=0, wall_time=wall,
                         incumbent_history=[(0, schedule.objective)])
    return schedule, report


def validate_solution(model: milp.MilpModel, values: dict[str, float],
                      tol: float = 1e-6) -> list[str]:
    """Integrality, bounds, and constraint residual checks for a candidate
    solution; returns the list of problems found."""
    problems: list[str] = []
    for v in model.variables:
        x = values.get(v.name, 0.0)
        if v.kind == "binary" and abs(x - round(x)) > tol:
            problems.append(f"{v.name} = {x} is not integral")
        if x < v.lower - tol or x > v.upper + tol:
            problems.append(f"{v.name} = {x} outside bounds [{v.lower}, {v.upper}]")
    for c in model.constraints:
        lhs = sum(coef * values.get(name, 0.0) for name, coef in c.terms)
        resid = lhs - c.rhs
        ok = (
            resid <= tol if c.relation == "<="
            else resid >= -tol if c.relation == ">="
            else abs(resid) <= tol
        )
        if not ok:
            problems.append(f"constraint {c.name} violated by {abs(resid):.3g}")
    return problems
