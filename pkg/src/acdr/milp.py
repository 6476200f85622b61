"""Deterministic-equivalent mixed-integer model of the scheduling problem.

Builds a solver-agnostic linear model: binary on/off, start and stop
variables with minimum up/down window constraints, nominal-forecast
temperature dynamics, margin-tightened comfort bounds, absolute-deviation
linearization, and a revenue objective against the uncontrolled baseline.
The model can be exported to CPLEX-LP text and read back.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report, thermal
from .baseline import BaselineResult
from .robust import RobustMargin, tighten_comfort
from .scenario import Scenario, WS_PER_KWH, hours

INF = float("inf")


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "binary" | "continuous"
    lower: float
    upper: float


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[str, float], ...]
    relation: str  # "<=" | "=" | ">="
    rhs: float


@dataclass(eq=False)
class MilpModel:
    variables: list[Variable]
    constraints: list[Constraint]
    objective_sense: str  # "maximize"
    objective_terms: tuple[tuple[str, float], ...]
    objective_constant: float = 0.0
    # index maps: family -> {(unit_id, period): variable name}, plus scalars
    index: dict = field(default_factory=dict)

    def variable_names(self) -> set[str]:
        return {v.name for v in self.variables}

    def objective_value(self, values: dict[str, float]) -> float:
        return self.objective_constant + sum(
            coef * values.get(name, 0.0) for name, coef in self.objective_terms
        )


@dataclass(frozen=True, eq=False)
class Schedule:
    """An optimized on/off plan with its nominal-forecast consequences."""

    on_off: np.ndarray         # (G, T) 0/1
    power: np.ndarray          # (G, T) watts
    theta_nominal: np.ndarray  # (G, T) degC at the nominal forecast
    gamma: float               # comfort penalty, CNY
    objective: float           # aggregator revenue, CNY


class ScheduleValidationError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("infeasible schedule:\n  " + "\n  ".join(violations))


def initial_lock_length(initial_on: bool, initial_dwell: int, min_up: int, min_down: int) -> int:
    """Periods at the start of the horizon during which switching is still
    forbidden because the pre-horizon dwell has not met its minimum."""
    need = min_up if initial_on else min_down
    return max(0, need - initial_dwell)


def build_model(scenario: Scenario, baseline: BaselineResult,
                margins: list[RobustMargin]) -> MilpModel:
    """Assemble the full cluster model.

    Per unit g and period t the model holds binaries u/y/v (state, start,
    stop), temperature th with tightened bounds from period 2 on and the
    measured initial temperature fixed at period 1, and deviation d >= |th -
    setpoint|. gamma aggregates the priced deviation; the objective is the
    baseline-minus-controlled energy bill minus gamma.
    """
    T = scenario.horizon.periods
    dt = scenario.horizon.dt
    dt_h = hours(dt)
    price = scenario.prices.price
    xi = scenario.forecast.theta_out_pre
    if baseline.mean_power.shape != (scenario.num_units, T):
        raise ValueError("baseline dimensions do not match the scenario")
    if len(margins) != scenario.num_units:
        raise ValueError("need one margin vector per unit")

    variables: list[Variable] = []
    constraints: list[Constraint] = []
    obj_terms: list[tuple[str, float]] = []
    index: dict = {"u": {}, "y": {}, "v": {}, "th": {}, "d": {},
                   "unit_ids": [u.id for u in scenario.units], "periods": T}

    d_names_all: list[str] = []
    constant = 0.0

    for g, unit in enumerate(scenario.units):
        gid = unit.id
        alpha = thermal.decay_factor(unit, dt)
        gain = unit.cooling_gain
        lo, hi = tighten_comfort(unit, margins[g])

        u_n = [f"u_g{gid}_t{t}" for t in range(1, T + 1)]
        y_n = [f"y_g{gid}_t{t}" for t in range(1, T + 1)]
        v_n = [f"v_g{gid}_t{t}" for t in range(1, T + 1)]
        th_n = [f"th_g{gid}_t{t}" for t in range(1, T + 1)]
        d_n = [f"d_g{gid}_t{t}" for t in range(1, T + 1)]
        d_names_all.extend(d_n)
        for t in range(1, T + 1):
            index["u"][(gid, t)] = u_n[t - 1]
            index["y"][(gid, t)] = y_n[t - 1]
            index["v"][(gid, t)] = v_n[t - 1]
            index["th"][(gid, t)] = th_n[t - 1]
            index["d"][(gid, t)] = d_n[t - 1]

        variables += [Variable(n, "binary", 0.0, 1.0) for n in u_n + y_n + v_n]
        variables.append(Variable(th_n[0], "continuous", unit.initial_theta, unit.initial_theta))
        variables += [Variable(th_n[t], "continuous", float(lo[t]), float(hi[t])) for t in range(1, T)]
        variables += [Variable(n, "continuous", 0.0, INF) for n in d_n]

        # nominal dynamics: th[t+1] = alpha*th[t] + (1-alpha)*(xi[t] - gain*u[t])
        for t in range(1, T):
            constraints.append(Constraint(
                name=f"dyn_g{gid}_t{t}",
                terms=((th_n[t], 1.0), (th_n[t - 1], -alpha), (u_n[t - 1], (1.0 - alpha) * gain)),
                relation="=", rhs=(1.0 - alpha) * xi[t - 1],
            ))
        # deviation linearization: d >= th - set, d >= set - th
        for t in range(1, T + 1):
            constraints.append(Constraint(
                name=f"dpos_g{gid}_t{t}",
                terms=((d_n[t - 1], 1.0), (th_n[t - 1], -1.0)),
                relation=">=", rhs=-unit.theta_set,
            ))
        for t in range(1, T + 1):
            constraints.append(Constraint(
                name=f"dneg_g{gid}_t{t}",
                terms=((d_n[t - 1], 1.0), (th_n[t - 1], 1.0)),
                relation=">=", rhs=unit.theta_set,
            ))
        # start/stop linkage with the pre-horizon state as constant
        u0 = 1.0 if unit.initial_on else 0.0
        for t in range(1, T + 1):
            terms = [(y_n[t - 1], 1.0), (v_n[t - 1], -1.0), (u_n[t - 1], -1.0)]
            rhs = -u0
            if t > 1:
                terms.append((u_n[t - 2], 1.0))
                rhs = 0.0
            constraints.append(Constraint(
                name=f"switch_g{gid}_t{t}", terms=tuple(terms), relation="=", rhs=rhs,
            ))
        for t in range(1, T + 1):
            constraints.append(Constraint(
                name=f"yv_g{gid}_t{t}",
                terms=((y_n[t - 1], 1.0), (v_n[t - 1], 1.0)),
                relation="<=", rhs=1.0,
            ))
        # minimum up/down windows, clipped at the first period
        for t in range(1, T + 1):
            q0 = max(1, t - unit.min_up_periods + 1)
            terms = tuple((y_n[q - 1], 1.0) for q in range(q0, t + 1)) + ((u_n[t - 1], -1.0),)
            constraints.append(Constraint(
                name=f"minup_g{gid}_t{t}", terms=terms, relation="<=", rhs=0.0,
            ))
        for t in range(1, T + 1):
            q0 = max(1, t - unit.min_down_periods + 1)
            terms = tuple((v_n[q - 1], 1.0) for q in range(q0, t + 1)) + ((u_n[t - 1], 1.0),)
            constraints.append(Constraint(
                name=f"mindown_g{gid}_t{t}", terms=terms, relation="<=", rhs=1.0,
            ))
        # dwell carried in from before the horizon
        lock = min(T, initial_lock_length(unit.initial_on, unit.initial_dwell_periods,
                                          unit.min_up_periods, unit.min_down_periods))
        for t in range(1, lock + 1):
            constraints.append(Constraint(
                name=f"lock_g{gid}_t{t}", terms=((u_n[t - 1], 1.0),), relation="=", rhs=u0,
            ))

        for t in range(1, T + 1):
            coef = -unit.rated_power * price[t - 1] * dt / WS_PER_KWH
            obj_terms.append((u_n[t - 1], coef))
            constant += baseline.mean_power[g, t - 1] * price[t - 1] * dt / WS_PER_KWH

    variables.append(Variable("gamma", "continuous", 0.0, INF))
    index["gamma"] = "gamma"
    gamma_terms = (("gamma", 1.0),) + tuple((n, -scenario.beta * dt_h) for n in d_names_all)
    constraints.append(Constraint(name="gamma_def", terms=gamma_terms, relation="=", rhs=0.0))
    obj_terms.append(("gamma", -1.0))

    return MilpModel(
        variables=variables,
        constraints=constraints,
        objective_sense="maximize",
        objective_terms=tuple(obj_terms),
        objective_constant=constant,
        index=index,
    )


# ---------- schedule validation and settlement

def validate_schedule(schedule: Schedule, scenario: Scenario) -> list[str]:
    """Check the schedule against the nominal-forecast constraints; returns
    a list of human-readable violations (empty when feasible)."""
    T = scenario.horizon.periods
    dt = scenario.horizon.dt
    xi = np.asarray(scenario.forecast.theta_out_pre)
    violations: list[str] = []

    on_off = np.asarray(schedule.on_off)
    if on_off.shape != (scenario.num_units, T):
        return [f"on_off shape {on_off.shape} != ({scenario.num_units}, {T})"]
    if not np.isin(on_off, (0, 1)).all():
        violations.append("on_off entries must be 0 or 1")
        return violations

    for g, unit in enumerate(scenario.units):
        u = on_off[g]
        expected_power = u * unit.rated_power
        if not np.allclose(schedule.power[g], expected_power, atol=1e-6):
            violations.append(f"unit {unit.id}: power differs from on_off * rated_power")
        traj = thermal.simulate_trajectory(unit, u, xi, dt)
        err = float(np.max(np.abs(traj - schedule.theta_nominal[g])))
        if err > 1e-6:
            violations.append(f"unit {unit.id}: theta_nominal departs from the dynamics by {err:.3g}")
        over = float(np.max(traj[1:] - unit.theta_max))
        under = float(np.max(unit.theta_min - traj[1:]))
        if over > 1e-6:
            violations.append(f"unit {unit.id}: nominal temperature exceeds theta_max by {over:.3g}")
        if under > 1e-6:
            violations.append(f"unit {unit.id}: nominal temperature undercuts theta_min by {under:.3g}")

        prev = 1 if unit.initial_on else 0
        dwell = unit.initial_dwell_periods
        for t in range(1, T + 1):
            cur = int(u[t - 1])
            if cur != prev:
                need = unit.min_up_periods if prev == 1 else unit.min_down_periods
                if dwell < need:
                    kind = "min_up" if prev == 1 else "min_down"
                    violations.append(f"unit {unit.id}: {kind} violated at period {t}")
                dwell = 1
            else:
                dwell += 1
            prev = cur

    dt_h = hours(dt)
    penalty = scenario.beta * dt_h * float(np.sum(np.abs(
        schedule.theta_nominal - np.array([u.theta_set for u in scenario.units])[:, None])))
    if abs(penalty - schedule.gamma) > 1e-6 * max(1.0, abs(penalty)):
        violations.append(f"gamma {schedule.gamma:.6g} does not match priced deviation {penalty:.6g}")
    return violations


def evaluate_schedule(schedule: Schedule, scenario: Scenario,
                      baseline: BaselineResult) -> "report.CostReport":
    """Validate the schedule against the nominal constraints and settle it."""
    violations = validate_schedule(schedule, scenario)
    if violations:
        raise ScheduleValidationError(violations)
    return report.settle(baseline, schedule, scenario)


def make_schedule(scenario: Scenario, baseline: BaselineResult, on_off) -> Schedule:
    """Derive the full schedule record from an on/off plan: powers and
    nominal temperatures follow, gamma and revenue are priced out."""
    on_off = np.asarray(on_off, dtype=int)
    T = scenario.horizon.periods
    dt = scenario.horizon.dt
    xi = np.asarray(scenario.forecast.theta_out_pre)
    price = np.asarray(scenario.prices.price)

    power = on_off * np.array([u.rated_power for u in scenario.units])[:, None]
    theta = np.vstack([
        thermal.simulate_trajectory(unit, on_off[g], xi, dt)
        for g, unit in enumerate(scenario.units)
    ])
    theta_set = np.array([u.theta_set for u in scenario.units])[:, None]
    gamma = scenario.beta * hours(dt) * float(np.sum(np.abs(theta - theta_set)))
    energy_scale = dt / WS_PER_KWH
    objective = float(np.sum((baseline.mean_power - power) * price[None, :]) * energy_scale) - gamma
    return Schedule(on_off=on_off, power=power, theta_nominal=theta,
                    gamma=gamma, objective=objective)


# ---------- LP text export / import

_WRAP = 200


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _emit_terms(parts: list[str], terms, constant: float | None = None) -> None:
    for name, coef in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(coef))} {name}")
    if constant is not None and constant != 0.0:
        sign = "-" if constant < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(constant))}")


def _wrap_record(head: str, parts: list[str], tail: str = "") -> list[str]:
    lines = []
    cur = head
    for p in parts:
        if len(cur) + len(p) + 1 > _WRAP:
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}"
    if tail:
        cur = f"{cur} {tail}"
    lines.append(cur)
    return lines


def export_lp(model: MilpModel, path: str | Path) -> None:
    """Write the model as CPLEX-LP text with 12-significant-digit
    coefficients and a fixed variable/constraint order."""
    path = Path(path)
    out: list[str] = ["\\ acdr model export"]
    sense = "Maximize" if model.objective_sense == "maximize" else "Minimize"
    out.append(sense)
    parts: list[str] = []
    _emit_terms(parts, model.objective_terms, model.objective_constant)
    out += _wrap_record(" obj:", parts)

    out.append("Subject To")
    for c in model.constraints:
        parts = []
        _emit_terms(parts, c.terms)
        out += _wrap_record(f" {c.name}:", parts, tail=f"{c.relation} {_fmt(c.rhs)}")

    out.append("Bounds")
    for v in model.variables:
        if v.kind == "binary":
            continue
        if v.lower == v.upper:
            out.append(f" {v.name} = {_fmt(v.lower)}")
        elif v.upper == INF:
            out.append(f" {v.name} >= {_fmt(v.lower)}")
        else:
            out.append(f" {_fmt(v.lower)} <= {v.name} <= {_fmt(v.upper)}")

    binaries = [v.name for v in model.variables if v.kind == "binary"]
    out.append("Binaries")
    out += _wrap_record(" ", binaries)
    out.append("End")
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _parse_terms(tokens: list[str]) -> tuple[list[tuple[str, float]], float]:
    terms: list[tuple[str, float]] = []
    constant = 0.0
    i = 0
    sign = 1.0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
            i += 1
            continue
        if tok == "-":
            sign = -1.0
            i += 1
            continue
        if _NUM_RE.match(tok):
            value = float(tok)
            if i + 1 < len(tokens) and not _NUM_RE.match(tokens[i + 1]) \
                    and tokens[i + 1] not in ("+", "-"):
                terms.append((tokens[i + 1], sign * value))
                i += 2
            else:
                constant += sign * value
                i += 1
        else:
            terms.append((tok, sign * 1.0))
            i += 1
        sign = 1.0
    return terms, constant


def parse_lp(path: str | Path) -> MilpModel:
    """Read back an LP file written by export_lp (same dialect only)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    section = None
    records: list[str] = []
    bounds_lines: list[str] = []
    binary_tokens: list[str] = []
    sense = "maximize"

    def flush_into(buf: list[str], line: str) -> None:
        # a record starts with "name:"; continuations carry no colon label
        if re.match(r"^\s*[\w.]+:", line):
            buf.append(line.strip())
        elif buf:
            buf[-1] += " " + line.strip()

    for raw in lines:
        line = raw.split("\\")[0].rstrip()
        if not line.strip():
            continue
        low = line.strip().lower()
        if low in ("maximize", "minimize"):
            sense = low
            section = "objective"
            continue
        if low == "subject to":
            section = "constraints"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary"):
            section = "binaries"
            continue
        if low == "end":
            section = None
            continue
        if section in ("objective", "constraints"):
            flush_into(records, line)
        elif section == "bounds":
            bounds_lines.append(line.strip())
        elif section == "binaries":
            binary_tokens += line.split()

    obj_terms: tuple[tuple[str, float], ...] = ()
    obj_constant = 0.0
    constraints: list[Constraint] = []
    for rec in records:
        label, body = rec.split(":", 1)
        label = label.strip()
        tokens = body.split()
        if label == "obj":
            terms, obj_constant = _parse_terms(tokens)
            obj_terms = tuple(terms)
            continue
        rel_idx = next(i for i, t in enumerate(tokens) if t in ("<=", ">=", "="))
        terms, const = _parse_terms(tokens[:rel_idx])
        rhs = float(tokens[rel_idx + 1]) - const
        constraints.append(Constraint(name=label, terms=tuple(terms),
                                      relation=tokens[rel_idx], rhs=rhs))

    bounds: dict[str, tuple[float, float]] = {}
    order: list[str] = []
    for line in bounds_lines:
        tokens = line.split()
        if len(tokens) == 2 and tokens[1].lower() == "free":
            bounds[tokens[0]] = (-INF, INF)
            order.append(tokens[0])
        elif len(tokens) == 3 and tokens[1] == "=":
            v = float(tokens[2])
            bounds[tokens[0]] = (v, v)
            order.append(tokens[0])
        elif len(tokens) == 3 and tokens[1] == ">=":
            bounds[tokens[0]] = (float(tokens[2]), INF)
            order.append(tokens[0])
        elif len(tokens) == 3 and tokens[1] == "<=":
            bounds[tokens[0]] = (-INF, float(tokens[2]))
            order.append(tokens[0])
        elif len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
            bounds[tokens[2]] = (float(tokens[0]), float(tokens[4]))
            order.append(tokens[2])
        else:
            raise ValueError(f"unparsable bounds line: {line!r}")

    variables = [Variable(n, "binary", 0.0, 1.0) for n in binary_tokens]
    variables += [Variable(n, "continuous", bounds[n][0], bounds[n][1]) for n in order]
    return MilpModel(
        variables=variables,
        constraints=constraints,
        objective_sense=sense,
        objective_terms=obj_terms,
        objective_constant=obj_constant,
    )


# ---------- schedule files

def write_schedule_csv(schedule: Schedule, scenario: Scenario, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["unit_id", "t", "u", "power_W", "theta_C", "d_C"])
        for g, unit in enumerate(scenario.units):
            for t in range(1, scenario.horizon.periods + 1):
                theta = schedule.theta_nominal[g, t - 1]
                w.writerow([
                    unit.id, t, int(schedule.on_off[g, t - 1]),
                    f"{schedule.power[g, t - 1]:.6f}",
                    f"{theta:.9f}",
                    f"{abs(theta - unit.theta_set):.9f}",
                ])


def read_schedule_on_off(path: str | Path, scenario: Scenario) -> np.ndarray:
    """Recover the (G, T) on/off matrix from a schedule CSV."""
    T = scenario.horizon.periods
    pos = {u.id: g for g, u in enumerate(scenario.units)}
    on_off = np.full((scenario.num_units, T), -1, dtype=int)
    with Path(path).open(newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            gid = int(row["unit_id"])
            t = int(row["t"])
            if gid not in pos:
                raise ValueError(f"schedule references unknown unit id {gid}")
            if not 1 <= t <= T:
                raise ValueError(f"schedule references period {t} outside 1..{T}")
            on_off[pos[gid], t - 1] = int(row["u"])
    if (on_off < 0).any():
        raise ValueError("schedule file does not cover every unit and period")
    return on_off
