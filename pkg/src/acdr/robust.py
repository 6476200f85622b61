"""Outdoor-temperature uncertainty and its exact deterministic counterpart.

The room dynamics unroll into an affine map from (uncertain outdoor
temperatures, on/off decisions) to indoor temperatures. Guarding the
comfort band against every realization in a norm ball is then equivalent
to shrinking the band by the dual norm of each map row times the ball
radius; that margin is computed in closed form here, no multipliers kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import thermal
from .scenario import AcUnit, ConfigurationError, Forecast, Horizon


@dataclass(frozen=True, eq=False)
class AffineStateMap:
    """Indoor temperature as an affine function of disturbances and decisions.

    Row t (0-based) gives temperature at period t+1:
      theta = const_term + xi_coeffs @ xi + u_coeffs @ u
    xi_coeffs is strictly lower triangular; entry [t, k] is
    alpha^(t-1-k) * (1-alpha) in 1-based period indices.
    """

    const_term: np.ndarray  # (T,)  alpha^(t-1) * initial temperature
    xi_coeffs: np.ndarray   # (T, T)
    u_coeffs: np.ndarray    # (T, T)  = -gain * xi_coeffs

    def evaluate(self, xi, u) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.const_term + self.xi_coeffs @ xi + self.u_coeffs @ u


@dataclass(frozen=True, eq=False)
class RobustMargin:
    """Per-period comfort-band tightening in degC; entry 0 is always 0
    because the initial temperature is measured, not uncertain."""

    values: np.ndarray  # (T,), nonnegative
    epsilon: float      # ball radius the margins were computed for


def unroll_affine(unit: AcUnit, horizon: Horizon) -> AffineStateMap:
    T = horizon.periods
    alpha = thermal.decay_factor(unit, horizon.dt)
    xi = np.zeros((T, T))
    for i in range(1, T):
        ks = np.arange(i)
        xi[i, :i] = alpha ** (i - 1 - ks) * (1.0 - alpha)
    const = alpha ** np.arange(T) * unit.initial_theta
    return AffineStateMap(const_term=const, xi_coeffs=xi, u_coeffs=-unit.cooling_gain * xi)


def dual_norm_of(norm_kind: str) -> Callable[[np.ndarray], float]:
    """Dual-norm evaluator for the uncertainty ball's norm.

    A sup-norm (box) ball dualizes to the 1-norm, a Euclidean (ellipsoid)
    ball to the Euclidean norm.
    """
    if norm_kind == "box":
        return lambda row: float(np.sum(np.abs(row)))
    if norm_kind == "ellipsoid":
        return lambda row: float(np.linalg.norm(row))
    raise ConfigurationError(f"unsupported uncertainty norm kind {norm_kind!r}")


def robust_margins(state_map: AffineStateMap, epsilon: float, norm_kind: str) -> RobustMargin:
    """margin[t] = epsilon * dual_norm(row t of the disturbance coefficients)."""
    if epsilon < 0:
        raise ConfigurationError(f"epsilon must be >= 0, got {epsilon}")
    dual = dual_norm_of(norm_kind)
    values = epsilon * np.array([dual(row) for row in state_map.xi_coeffs])
    return RobustMargin(values=values, epsilon=epsilon)


class ComfortInfeasibleError(ValueError):
    """Tightening emptied a unit's comfort band."""

    def __init__(self, unit_id: int, period: int, epsilon: float, epsilon_max: float):
        self.unit_id = unit_id
        self.period = period
        self.epsilon = epsilon
        self.epsilon_max = epsilon_max
        super().__init__(
            f"unit {unit_id}: tightened comfort band is empty at period {period}; "
            f"reduce epsilon by at least {epsilon - epsilon_max:.6g} "
            f"(largest feasible epsilon ~ {epsilon_max:.6g})"
        )


def tighten_comfort(unit: AcUnit, margins: RobustMargin) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic per-period bounds [lo, hi] whose satisfaction at the
    nominal forecast guarantees the raw band for every realization.

    Period 1 keeps the raw band (the initial temperature is certain);
    margins apply from period 2 on.
    """
    m = margins.values
    lo = unit.theta_min + m
    hi = unit.theta_max - m
    lo[0] = unit.theta_min
    hi[0] = unit.theta_max
    if np.any(lo > hi):
        t_bad = int(np.argmax(lo > hi)) + 1  # earliest offending period, 1-based
        # margins scale linearly in the ball radius, so the largest feasible
        # radius keeps the biggest margin within the half band
        halfband = 0.5 * (unit.theta_max - unit.theta_min)
        eps_max = margins.epsilon * halfband / float(np.max(m))
        raise ComfortInfeasibleError(
            unit_id=unit.id, period=t_bad,
            epsilon=margins.epsilon, epsilon_max=eps_max,
        )
    return lo, hi


def sample_in_set(forecast: Forecast, rng: np.random.Generator) -> np.ndarray:
    """One outdoor-temperature realization drawn inside the uncertainty set."""
    nominal = np.asarray(forecast.theta_out_pre)
    T = nominal.shape[0]
    eps = forecast.epsilon
    if forecast.norm_kind == "box":
        return nominal + rng.uniform(-eps, eps, T)
    direction = rng.standard_normal(T)
    direction /= max(np.linalg.norm(direction), np.finfo(float).tiny)
    radius = eps * rng.random() ** (1.0 / T)
    return nominal + radius * direction


def worst_case_check(unit: AcUnit, on_off, forecast: Forecast, dt: float) -> float:
    """Largest comfort-band violation over the whole uncertainty set.

    For the box set the extreme realizations are the uniformly shifted
    forecasts (every disturbance coefficient is nonnegative, so indoor
    temperature is monotone in each outdoor entry): the +epsilon shift
    stresses the upper bound and the -epsilon shift the lower one. For the
    ellipsoid each period's worst case aligns the realization with its own
    coefficient row, which is exactly the Euclidean-norm margin.
    Returns 0.0 when robustly feasible; bounds bind from period 2 on.
    """
    on_off = np.asarray(on_off)
    nominal = np.asarray(forecast.theta_out_pre)
    eps = forecast.epsilon
    if forecast.norm_kind == "box":
        hot = thermal.simulate_trajectory(unit, on_off, nominal + eps, dt)
        cold = thermal.simulate_trajectory(unit, on_off, nominal - eps, dt)
        over = hot[1:] - unit.theta_max
        under = unit.theta_min - cold[1:]
    else:
        T = on_off.shape[0]
        state_map = unroll_affine(unit, Horizon(periods=T, dt=dt))
        margins = robust_margins(state_map, eps, forecast.norm_kind).values
        nominal_traj = thermal.simulate_trajectory(unit, on_off, nominal, dt)
        over = nominal_traj[1:] + margins[1:] - unit.theta_max
        under = unit.theta_min - (nominal_traj[1:] - margins[1:])
    worst = max(float(np.max(over)), float(np.max(under)))
    return max(worst, 0.0)
