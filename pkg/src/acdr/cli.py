"""Batch command-line front end.

Subcommands wire scenario files through the pipeline: population
generation, uncontrolled baseline simulation, robust schedule optimization,
penalty-coefficient sweeps, and worst-case verification of a schedule. A
run manifest is written next to every output set; re-running a command with
the same resolved inputs reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, baseline as baseline_mod, milp, report, robust, solver, thermal
from .scenario import (
    ConfigurationError,
    Forecast,
    Horizon,
    PopulationSpec,
    PriceSchedule,
    Scenario,
    ScenarioFormatError,
    bundled_outdoor_curve,
    bundled_population_spec,
    default_outdoor_curve,
    default_price_curve,
    generate_population,
    load_scenario,
    save_scenario,
)

ENV_SEED = "ACDR_SEED"

_USER_ERRORS = (
    ConfigurationError,
    ScenarioFormatError,
    robust.ComfortInfeasibleError,
    solver.ClusterInfeasibleError,
    solver.ExternalSolverError,
    milp.ScheduleValidationError,
    ValueError,
    OSError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _write_manifest(out_dir: Path, command: str, flags: dict, master_seed: int,
                    outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "flags": flags,
        "master_seed": master_seed,
        "outputs": [str(p) for p in outputs],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")


def _resolve_seed(flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_SEED)
    return int(env) if env else 0


def _margins_for(scenario: Scenario) -> list[robust.RobustMargin]:
    return [
        robust.robust_margins(robust.unroll_affine(u, scenario.horizon),
                              scenario.forecast.epsilon, scenario.forecast.norm_kind)
        for u in scenario.units
    ]


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    forecast = scenario.forecast
    if getattr(args, "epsilon", None) is not None:
        forecast = replace(forecast, epsilon=args.epsilon)
    if getattr(args, "norm", None) is not None:
        forecast = replace(forecast, norm_kind=args.norm)
    scenario = replace(scenario, forecast=forecast)
    if getattr(args, "beta", None) is not None:
        scenario = replace(scenario, beta=args.beta)
    if getattr(args, "samples", None) is not None:
        scenario = replace(scenario, mc_samples=args.samples)
    return scenario


# ---------- commands

def cmd_gen_scenario(args) -> int:
    if args.count < 1:
        return _fail(f"--count must be >= 1, got {args.count}")
    seed = _resolve_seed(args.seed)
    if args.preset == "bundled":
        spec = bundled_population_spec()
        beta = 0.12
        curve = bundled_outdoor_curve(args.periods)
    else:
        spec = PopulationSpec()
        beta = 3.0
        curve = default_outdoor_curve(args.periods)
    periods = args.periods
    units = generate_population(args.count, spec, seed)
    scenario = Scenario(
        units=tuple(units),
        horizon=Horizon(periods=periods, dt=300.0, start_clock_time=10 * 3600.0),
        forecast=Forecast(theta_out_pre=curve, epsilon=0.3, norm_kind="box"),
        prices=PriceSchedule(price=default_price_curve(periods)),
        beta=beta,
        mc_samples=200,
        master_seed=seed,
    )
    out = Path(args.out)
    save_scenario(scenario, out)
    manifest_path = out.with_name(out.name + ".manifest.json")
    manifest_path.write_text(json.dumps({
        "command": "gen-scenario",
        "tool_version": __version__,
        "flags": {"count": args.count, "seed": seed, "preset": args.preset,
                  "periods": periods, "out": str(out)},
        "master_seed": seed,
        "outputs": [str(out)],
    }, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out} ({args.count} units, seed {seed})")
    return 0


def cmd_simulate_baseline(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = baseline_mod.run_baseline(scenario)
    csv_path = out_dir / "baseline.csv"
    baseline_mod.write_baseline_csv(result, scenario, csv_path, per_unit=args.per_unit)
    _write_manifest(out_dir, "simulate-baseline",
                    {"scenario": str(args.scenario), "samples": scenario.mc_samples,
                     "per_unit": args.per_unit, "threads": args.threads},
                    scenario.master_seed, [csv_path])
    print(f"wrote {csv_path} ({scenario.mc_samples} samples, "
          f"G={scenario.num_units}, T={scenario.horizon.periods})")
    return 0


def _optimize_outputs(scenario: Scenario, base, schedule, cost, out_dir: Path) -> list[Path]:
    outputs = []
    schedule_path = out_dir / "schedule.csv"
    milp.write_schedule_csv(schedule, scenario, schedule_path)
    outputs.append(schedule_path)

    report_path = out_dir / "report.csv"
    report.write_cost_report_csv(cost, report_path)
    outputs.append(report_path)

    power_path = out_dir / "series_total_power.csv"
    report.write_series_csv(power_path, ["baseline_total_power_W", "controlled_total_power_W"],
                            [base.total_power, schedule.power.sum(axis=0)])
    outputs.append(power_path)

    unit0 = scenario.units[0]
    temp_path = out_dir / "series_unit_temperature.csv"
    report.write_series_csv(temp_path,
                            [f"baseline_theta_C_unit{unit0.id}", f"controlled_theta_C_unit{unit0.id}"],
                            [base.mean_theta[0], schedule.theta_nominal[0]])
    outputs.append(temp_path)
    return outputs


def cmd_optimize(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    base = baseline_mod.run_baseline(scenario)
    margins = _margins_for(scenario)

    if args.solver == "external":
        model = milp.build_model(scenario, base, margins)
        schedule, _ = solver.solve_external(model, args.external_cmd, scenario, base)
        cost = milp.evaluate_schedule(schedule, scenario, base)
    else:
        schedule, cost = solver.solve_cluster(scenario, base, margins, method=args.solver)

    outputs = _optimize_outputs(scenario, base, schedule, cost, out_dir)
    if args.export_lp:
        model = milp.build_model(scenario, base, margins)
        lp_path = Path(args.export_lp)
        milp.export_lp(model, lp_path)
        outputs.append(lp_path)

    _write_manifest(out_dir, "optimize",
                    {"scenario": str(args.scenario), "epsilon": scenario.forecast.epsilon,
                     "beta": scenario.beta, "norm": scenario.forecast.norm_kind,
                     "solver": args.solver, "external_cmd": args.external_cmd,
                     "export_lp": args.export_lp, "threads": args.threads},
                    scenario.master_seed, outputs)
    print(f"revenue_cny={cost.aggregator_revenue:.2f} "
          f"electricity_cny={cost.controlled_electricity_cost:.2f} "
          f"penalty_cny={cost.penalty_cost:.2f}")
    return 0


def cmd_sweep_beta(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    try:
        betas = [float(b) for b in args.betas.split(",") if b.strip() != ""]
    except ValueError:
        return _fail(f"--betas must be a comma-separated list of numbers, got {args.betas!r}")
    if not betas:
        return _fail("--betas must name at least one value")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = report.sweep_beta(scenario, betas)
    csv_path = out_dir / "sensitivity.csv"
    report.write_sensitivity_csv(rows, csv_path)
    _write_manifest(out_dir, "sweep-beta",
                    {"scenario": str(args.scenario), "betas": betas},
                    scenario.master_seed, [csv_path])
    for r in rows:
        print(f"beta={r.beta:g} revenue_cny={r.revenue:.2f} penalty_cny={r.penalty:.2f}")
    return 0


def cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario)
    scenario = _apply_overrides(scenario, args)
    on_off = milp.read_schedule_on_off(args.schedule, scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    dt = scenario.horizon.dt
    forecast = scenario.forecast
    rows = []
    worst_overall = 0.0
    for g, unit in enumerate(scenario.units):
        analytic = robust.worst_case_check(unit, on_off[g], forecast, dt)
        rng = np.random.default_rng([scenario.master_seed & (2**64 - 1), unit.id])
        sampled = 0.0
        for _ in range(args.perturbations):
            xi = robust.sample_in_set(forecast, rng)
            traj = thermal.simulate_trajectory(unit, on_off[g], xi, dt)
            over = float(np.max(traj[1:] - unit.theta_max))
            under = float(np.max(unit.theta_min - traj[1:]))
            sampled = max(sampled, over, under, 0.0)
        rows.append((unit.id, analytic, sampled))
        worst_overall = max(worst_overall, analytic, sampled)

    csv_path = out_dir / "verify.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["unit_id", "worst_case_violation_C", "sampled_violation_C"])
        for gid, analytic, sampled in rows:
            w.writerow([gid, f"{analytic:.9f}", f"{sampled:.9f}"])
    _write_manifest(out_dir, "verify",
                    {"scenario": str(args.scenario), "schedule": str(args.schedule),
                     "samples": args.perturbations, "epsilon": forecast.epsilon,
                     "norm": forecast.norm_kind},
                    scenario.master_seed, [csv_path])
    print(f"max_violation_C={worst_overall:.9f}")
    return 0


# ---------- argument wiring

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acdr", description=__doc__)
    p.add_argument("--version", action="version", version=f"acdr {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="generate a randomized scenario file")
    g.add_argument("--count", type=int, required=True, help="number of AC units")
    g.add_argument("--seed", type=int, default=None,
                   help=f"generator seed (falls back to ${ENV_SEED}, then 0)")
    g.add_argument("--periods", type=int, default=48)
    g.add_argument("--preset", choices=("table2", "bundled"), default="table2",
                   help="population ranges: full survey spread or the bundled demo ranges")
    g.add_argument("--out", default="scenario.json")
    g.set_defaults(func=cmd_gen_scenario)

    b = sub.add_parser("simulate-baseline", help="Monte Carlo uncontrolled baseline")
    b.add_argument("--scenario", required=True)
    b.add_argument("--samples", type=int, default=None, help="override scenario mc_samples")
    b.add_argument("--per-unit", action="store_true", help="expand per-unit columns")
    b.add_argument("--threads", type=int, default=1, help="worker cap (results unaffected)")
    b.add_argument("--out", default="baseline_out")
    b.set_defaults(func=cmd_simulate_baseline)

    o = sub.add_parser("optimize", help="solve the robust scheduling problem")
    o.add_argument("--scenario", required=True)
    o.add_argument("--epsilon", type=float, default=None, help="override uncertainty radius")
    o.add_argument("--beta", type=float, default=None, help="override comfort penalty coefficient")
    o.add_argument("--norm", choices=("box", "ellipsoid"), default=None)
    o.add_argument("--solver", choices=("bnb", "exhaustive", "external"), default="bnb")
    o.add_argument("--external-cmd", default=None,
                   help="external solver: invoked as CMD <lp_path> <sol_path>")
    o.add_argument("--export-lp", default=None, help="also write the model as an LP file")
    o.add_argument("--threads", type=int, default=1, help="worker cap (results unaffected)")
    o.add_argument("--out", default="optimize_out")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sweep-beta", help="re-solve for several penalty coefficients")
    s.add_argument("--scenario", required=True)
    s.add_argument("--betas", default="0,15,30,45", help="comma-separated list")
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--norm", choices=("box", "ellipsoid"), default=None)
    s.add_argument("--out", default="sweep_out")
    s.set_defaults(func=cmd_sweep_beta)

    v = sub.add_parser("verify", help="worst-case comfort check of a schedule CSV")
    v.add_argument("--scenario", required=True)
    v.add_argument("--schedule", required=True, help="schedule.csv produced by optimize")
    v.add_argument("--samples", dest="perturbations", type=int, default=1000,
                   help="random in-set perturbations per unit")
    v.add_argument("--epsilon", type=float, default=None)
    v.add_argument("--norm", choices=("box", "ellipsoid"), default=None)
    v.add_argument("--out", default="verify_out")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
