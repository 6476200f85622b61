"""Settlement accounting, sensitivity sweeps, and plot-ready series.

All money stays at full precision internally; rounding to 0.01 CNY happens
once, at serialization.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .scenario import Scenario, WS_PER_KWH, hours


@dataclass(frozen=True)
class CostReport:
    """Uncontrolled-vs-controlled cost decomposition for one solved scenario.

    controlled_total = controlled_electricity_cost + penalty_cost and
    aggregator_revenue = baseline_electricity_cost - controlled_total hold
    exactly as written (same float expressions).
    """

    baseline_electricity_cost: float
    controlled_electricity_cost: float
    penalty_cost: float
    controlled_total: float
    aggregator_revenue: float


@dataclass(frozen=True)
class SensitivityRow:
    beta: float
    revenue: float
    penalty: float
    peak_power_reduction_fraction: float


def settle(baseline, schedule, scenario: Scenario) -> CostReport:
    """Price the schedule against the uncontrolled baseline.

    Negative revenue is a legitimate outcome and is reported as computed.
    """
    price = np.asarray(scenario.prices.price)
    scale = scenario.horizon.dt / WS_PER_KWH
    baseline_cost = float(np.sum(baseline.mean_power * price[None, :]) * scale)
    controlled_cost = float(np.sum(schedule.power * price[None, :]) * scale)
    theta_set = np.array([u.theta_set for u in scenario.units])[:, None]
    penalty = scenario.beta * hours(scenario.horizon.dt) * float(
        np.sum(np.abs(schedule.theta_nominal - theta_set)))
    total = controlled_cost + penalty
    return CostReport(
        baseline_electricity_cost=baseline_cost,
        controlled_electricity_cost=controlled_cost,
        penalty_cost=penalty,
        controlled_total=total,
        aggregator_revenue=baseline_cost - total,
    )


def peak_window_from_prices(prices) -> tuple[int, int]:
    """Contiguous 1-based period range covering every above-midpoint price."""
    p = np.asarray(prices, dtype=float)
    mid = 0.5 * (p.min() + p.max())
    if p.max() == p.min():
        return 1, len(p)
    idx = np.nonzero(p > mid)[0]
    return int(idx[0]) + 1, int(idx[-1]) + 1


def window_energy_kwh(power, dt: float, window: tuple[int, int]) -> float:
    """Energy of a (G, T) or (T,) power series over an inclusive 1-based
    period window."""
    first, last = window
    power = np.asarray(power)
    sl = power[..., first - 1:last]
    return float(np.sum(sl)) * dt / WS_PER_KWH


def peak_shaving_summary(baseline, schedule, peak_window: tuple[int, int],
                         dt: float) -> float:
    """Fractional energy reduction inside the peak window: 1.0 for complete
    shaving, 0.0 for no change."""
    base = window_energy_kwh(baseline.mean_power, dt, peak_window)
    controlled = window_energy_kwh(schedule.power, dt, peak_window)
    if controlled == 0.0 and base > 0.0:
        return 1.0
    if base == 0.0:
        return 0.0
    return 1.0 - controlled / base


def sweep_beta(scenario: Scenario, betas, baseline=None, margins=None,
               peak_window: tuple[int, int] | None = None) -> list[SensitivityRow]:
    """Re-solve the scenario for each penalty coefficient.

    The baseline and robust margins do not depend on beta and are computed
    once (or accepted precomputed). Rows come back sorted by beta.
    """
    from . import baseline as baseline_mod  # deferred: solving is heavyweight
    from . import robust, solver

    betas = list(betas)
    if not betas:
        raise ValueError("betas must be nonempty")
    if any(b < 0 for b in betas):
        raise ValueError("betas must be >= 0")

    if baseline is None:
        baseline = baseline_mod.run_baseline(scenario)
    if margins is None:
        margins = [
            robust.robust_margins(robust.unroll_affine(u, scenario.horizon),
                                  scenario.forecast.epsilon, scenario.forecast.norm_kind)
            for u in scenario.units
        ]
    if peak_window is None:
        peak_window = peak_window_from_prices(scenario.prices.price)

    rows = []
    for beta in sorted(betas):
        s = replace(scenario, beta=float(beta))
        schedule, cost = solver.solve_cluster(s, baseline, margins)
        rows.append(SensitivityRow(
            beta=float(beta),
            revenue=cost.aggregator_revenue,
            penalty=cost.penalty_cost,
            peak_power_reduction_fraction=peak_shaving_summary(
                baseline, schedule, peak_window, scenario.horizon.dt),
        ))
    return rows


# ---------- csv emission (single rounding point)

def _cny(x: float) -> str:
    return f"{x:.2f}"


def write_cost_report_csv(cost: CostReport, path: str | Path) -> None:
    """Two-case cost table plus the revenue line.

    Cents are made internally consistent: the serialized totals are the sums
    of the serialized components.
    """
    base_cents = round(cost.baseline_electricity_cost * 100)
    elec_cents = round(cost.controlled_electricity_cost * 100)
    pen_cents = round(cost.penalty_cost * 100)
    total_cents = elec_cents + pen_cents
    revenue_cents = base_cents - total_cents
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["case", "electricity_cost_cny", "penalty_cost_cny", "total_cost_cny"])
        w.writerow(["uncontrolled", _cny(base_cents / 100), _cny(0.0), _cny(base_cents / 100)])
        w.writerow(["controlled", _cny(elec_cents / 100), _cny(pen_cents / 100), _cny(total_cents / 100)])
        w.writerow(["aggregator_revenue", "", "", _cny(revenue_cents / 100)])


def write_sensitivity_csv(rows: list[SensitivityRow], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["beta", "revenue_cny", "penalty_cny", "peak_power_reduction_fraction"])
        for r in rows:
            w.writerow([f"{r.beta:g}", _cny(r.revenue), _cny(r.penalty),
                        f"{r.peak_power_reduction_fraction:.6f}"])


def write_series_csv(path: str | Path, header: list[str], columns: list[np.ndarray]) -> None:
    """Plain (period, value...) series; one row per period, 1-based."""
    T = len(columns[0])
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["t"] + header)
        for t in range(T):
            w.writerow([t + 1] + [f"{col[t]:.6f}" for col in columns])
