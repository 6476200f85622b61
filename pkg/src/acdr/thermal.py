"""First-order room thermal dynamics, discretized exactly.

Over one period the outdoor temperature is held constant, so the indoor
temperature relaxes geometrically toward (outdoor - R*eta*P) with factor
alpha = exp(-dt/RC).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import AcUnit


@dataclass(frozen=True)
class ThermalCoeffs:
    alpha: float  # per-period decay factor, in (0,1) for dt > 0
    gain: float   # full-on temperature depression R*eta*P_rated, degC


def decay_factor(unit: AcUnit, dt: float) -> float:
    """exp(-dt / RC); strictly decreasing in dt, 1.0 at dt = 0."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    return math.exp(-dt / (unit.thermal_resistance * unit.thermal_capacity))


def coeffs(unit: AcUnit, dt: float) -> ThermalCoeffs:
    return ThermalCoeffs(alpha=decay_factor(unit, dt), gain=unit.cooling_gain)


def relax(theta, target, alpha):
    """One discrete step toward `target`: target - (target - theta) * alpha.

    Works elementwise on arrays; shared by the scalar step and the
    vectorized simulators.
    """
    return target - (target - theta) * alpha


def step_temperature(theta: float, theta_out: float, power: float, unit: AcUnit, dt: float) -> float:
    """Indoor temperature after one period at constant outdoor temperature
    and constant electrical power (0 or rated)."""
    alpha = decay_factor(unit, dt)
    target = theta_out - unit.thermal_resistance * unit.eer * power
    return relax(theta, target, alpha)


def simulate_trajectory(unit: AcUnit, on_off, theta_out, dt: float) -> np.ndarray:
    """Indoor temperatures over T periods for a given on/off plan.

    trajectory[0] is the unit's initial temperature; the decision and
    outdoor temperature of period t drive the step into period t+1, so the
    final entries of on_off/theta_out do not influence the result.
    """
    on_off = np.asarray(on_off)
    theta_out = np.asarray(theta_out, dtype=float)
    if on_off.shape != theta_out.shape:
        raise ValueError(f"length mismatch: on_off {on_off.shape} vs theta_out {theta_out.shape}")
    if not np.isin(on_off, (0, 1)).all():
        raise ValueError("on_off entries must be 0 or 1")

    T = on_off.shape[0]
    alpha = decay_factor(unit, dt)
    gain = unit.cooling_gain
    traj = np.empty(T, dtype=float)
    traj[0] = unit.initial_theta
    for i in range(T - 1):
        target = theta_out[i] - gain * on_off[i]
        traj[i + 1] = relax(traj[i], target, alpha)
    return traj
