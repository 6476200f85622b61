"""Monte Carlo estimate of the uncontrolled cluster's power and temperatures.

Each sample advances every unit's two-state switching chain against the
nominal outdoor forecast. Uniform draws come from counter-based Philox
streams keyed on (master_seed, sample_index), with the (period, unit)
position fixed by the array layout, so any execution order reproduces the
same numbers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import markov
from .scenario import Scenario

# fixed accumulation chunk; part of the deterministic reduction order
_CHUNK = 64

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class BaselineResult:
    mean_power: np.ndarray   # (G, T) watts, sample mean per unit and period
    mean_theta: np.ndarray   # (G, T) degC
    total_power: np.ndarray  # (T,) watts, sum of mean_power over units
    samples: int
    master_seed: int


@dataclass(frozen=True, eq=False)
class _UnitArrays:
    alpha: np.ndarray
    gain: np.ndarray
    rated: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    theta_set: np.ndarray
    init_state: np.ndarray
    init_theta: np.ndarray


def _unit_arrays(scenario: Scenario) -> _UnitArrays:
    units = scenario.units
    dt = scenario.horizon.dt
    rc = np.array([u.thermal_resistance * u.thermal_capacity for u in units])
    return _UnitArrays(
        alpha=np.exp(-dt / rc),
        gain=np.array([u.cooling_gain for u in units]),
        rated=np.array([u.rated_power for u in units]),
        a=np.array([u.markov.a for u in units]),
        b=np.array([u.markov.b for u in units]),
        c=np.array([u.markov.c for u in units]),
        d=np.array([u.markov.d for u in units]),
        theta_set=np.array([u.theta_set for u in units]),
        init_state=np.array([1 if u.initial_on else 0 for u in units], dtype=np.int8),
        init_theta=np.array([u.initial_theta for u in units]),
    )


def sample_uniforms(master_seed: int, sample_index: int, periods: int, num_units: int) -> np.ndarray:
    """(T-1, G) uniforms for one sample, a pure function of all arguments."""
    seq = np.random.SeedSequence([master_seed & _MASK64, sample_index])
    rng = np.random.Generator(np.random.Philox(seq))
    return rng.random((periods - 1, num_units))


def _simulate_with_uniforms(scenario: Scenario, uniforms: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Advance the cluster given explicit uniform draws of shape (T-1, G)
    or (S, T-1, G); returns (power, theta) with a matching leading shape."""
    ua = _unit_arrays(scenario)
    T = scenario.horizon.periods
    theta_out = scenario.forecast.theta_out_pre

    squeeze = uniforms.ndim == 2
    if squeeze:
        uniforms = uniforms[None, :, :]
    S, _, G = uniforms.shape

    state = np.broadcast_to(ua.init_state, (S, G)).copy()
    theta = np.broadcast_to(ua.init_theta, (S, G)).copy()
    power = np.empty((S, G, T))
    thetas = np.empty((S, G, T))

    for t in range(T):
        power[:, :, t] = state * ua.rated
        thetas[:, :, t] = theta
        if t == T - 1:
            break
        gap = ua.theta_set - theta
        p_on = markov.sigmoid(ua.a * gap + ua.b)
        p_off = markov.sigmoid(ua.c * gap + ua.d)
        switch = np.where(state == 1, p_off, p_on)
        next_state = np.where(uniforms[:, t, :] < switch, 1 - state, state)
        # power during period t reflects the state held through it
        target = theta_out[t] - ua.gain * state
        theta = target - (target - theta) * ua.alpha
        state = next_state

    if squeeze:
        return power[0], thetas[0]
    return power, thetas


def simulate_sample(scenario: Scenario, sample_index: int) -> tuple[np.ndarray, np.ndarray]:
    """One Monte Carlo realization: per-unit (G, T) power and temperature."""
    u = sample_uniforms(scenario.master_seed, sample_index,
                        scenario.horizon.periods, scenario.num_units)
    return _simulate_with_uniforms(scenario, u)


def run_baseline(scenario: Scenario) -> BaselineResult:
    """Mean power and temperature over scenario.mc_samples realizations.

    Samples are processed in fixed-size chunks and reduced in index order,
    so repeated runs are bit-identical.
    """
    N = scenario.mc_samples
    G = scenario.num_units
    T = scenario.horizon.periods

    power_sum = np.zeros((G, T))
    theta_sum = np.zeros((G, T))
    for start in range(0, N, _CHUNK):
        idx = range(start, min(start + _CHUNK, N))
        u = np.stack([
            sample_uniforms(scenario.master_seed, i, T, G) for i in idx
        ])
        power, theta = _simulate_with_uniforms(scenario, u)
        power_sum += power.sum(axis=0)
        theta_sum += theta.sum(axis=0)

    mean_power = power_sum / N
    mean_theta = theta_sum / N
    return BaselineResult(
        mean_power=mean_power,
        mean_theta=mean_theta,
        total_power=mean_power.sum(axis=0),
        samples=N,
        master_seed=scenario.master_seed,
    )


def clock_label(start_clock_time: float, dt: float, period: int) -> str:
    """HH:MM:SS wall-clock label for a 1-based period index."""
    s = int(start_clock_time + (period - 1) * dt) % 86400
    return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"


def write_baseline_csv(result: BaselineResult, scenario: Scenario, path: str | Path,
                       per_unit: bool = False) -> None:
    """Period rows: t, clock, total power, cluster-average temperature;
    optionally one power/temperature column pair per unit."""
    path = Path(path)
    T = scenario.horizon.periods
    hz = scenario.horizon
    cluster_theta = result.mean_theta.mean(axis=0)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        header = ["t", "clock", "total_power_W", "mean_theta_C"]
        if per_unit:
            for u in scenario.units:
                header += [f"power_W_unit{u.id}", f"theta_C_unit{u.id}"]
        w.writerow(header)
        for t in range(1, T + 1):
            row = [t, clock_label(hz.start_clock_time, hz.dt, t),
                   f"{result.total_power[t - 1]:.6f}", f"{cluster_theta[t - 1]:.6f}"]
            if per_unit:
                for g in range(scenario.num_units):
                    row += [f"{result.mean_power[g, t - 1]:.6f}",
                            f"{result.mean_theta[g, t - 1]:.6f}"]
            w.writerow(row)
