"""Probabilistic on/off behavior of an uncontrolled air conditioner.

Switching probabilities are sigmoids of the setpoint-minus-room gap; the
2x2 transition matrix is built from them with exact complements. Parameters
can be recovered from observed transitions by logistic regression.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scenario import AcUnit, TransitionParams

OFF = 0
ON = 1

# sigmoid(37) is 1.0 to double precision; boundary fits clamp here
_INTERCEPT_CAP = 37.0


class DegenerateDataError(ValueError):
    """Observations cannot identify a finite fit (all outcomes identical)."""


def sigmoid(x):
    """Numerically stable logistic function; elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def turn_on_probability(theta: float, unit: AcUnit):
    """Probability that an off unit switches on at room temperature theta."""
    p = unit.markov
    return sigmoid(p.a * (unit.theta_set - np.asarray(theta, dtype=float)) + p.b)


def turn_off_probability(theta: float, unit: AcUnit):
    """Probability that an on unit switches off at room temperature theta."""
    p = unit.markov
    return sigmoid(p.c * (unit.theta_set - np.asarray(theta, dtype=float)) + p.d)


@dataclass(frozen=True)
class TransitionMatrix:
    p_stay_off: float
    p_off_to_on: float
    p_on_to_off: float
    p_stay_on: float


def transition_matrix(theta: float, unit: AcUnit) -> TransitionMatrix:
    """Row-stochastic by construction: the diagonal holds exact complements."""
    p_on = float(turn_on_probability(theta, unit))
    p_off = float(turn_off_probability(theta, unit))
    return TransitionMatrix(
        p_stay_off=1.0 - p_on,
        p_off_to_on=p_on,
        p_on_to_off=p_off,
        p_stay_on=1.0 - p_off,
    )


def sample_next_state(state: int, m: TransitionMatrix, u: float) -> int:
    """Advance one step using a uniform draw u in [0,1).

    From off the unit switches on iff u < p_off_to_on; from on it switches
    off iff u < p_on_to_off. Deterministic given u.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must be in [0,1), got {u}")
    if state == OFF:
        return ON if u < m.p_off_to_on else OFF
    return OFF if u < m.p_on_to_off else ON


# ---------- parameter estimation

@dataclass(frozen=True)
class LogisticFit:
    slope: float
    intercept: float
    converged: bool
    iterations: int
    identifiable: bool  # False when the feature has no variation


def _mean_log_likelihood(x, y, slope, intercept):
    z = slope * x + intercept
    # y*z - log(1 + e^z), computed stably
    return float(np.mean(y * z - np.logaddexp(0.0, z)))


def fit_logistic(x, y, tol: float = 1e-8, max_iter: int = 10_000) -> LogisticFit:
    """Maximum-likelihood logistic fit by damped gradient ascent.

    Converges when the mean-gradient sup-norm drops below tol. Data whose
    outcomes are all identical has no finite optimum; such fits are returned
    with the intercept clamped at the working boundary and converged=False.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise ValueError("x and y must be equal-length nonempty 1-d arrays")

    identifiable = bool(np.ptp(x) > 0)
    if np.all(y == y[0]):
        cap = _INTERCEPT_CAP if y[0] == 1.0 else -_INTERCEPT_CAP
        return LogisticFit(slope=0.0, intercept=cap, converged=False, iterations=0,
                           identifiable=identifiable)

    slope, intercept = 0.0, 0.0
    ll = _mean_log_likelihood(x, y, slope, intercept)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        z = slope * x + intercept
        resid = y - sigmoid(z)
        g_slope = float(np.mean(resid * x))
        g_int = float(np.mean(resid))
        if max(abs(g_slope), abs(g_int)) < tol:
            return LogisticFit(slope, intercept, True, it, identifiable)
        while step > 1e-14:
            cand = (slope + step * g_slope, intercept + step * g_int)
            cand_ll = _mean_log_likelihood(x, y, *cand)
            if cand_ll >= ll:
                slope, intercept = cand
                ll = cand_ll
                step *= 1.3
                break
            step *= 0.5
        else:
            break  # step underflow: as converged as float allows
    return LogisticFit(slope, intercept, False, it, identifiable)


def fit_params(observations) -> TransitionParams:
    """Estimate (a, b, c, d) from (theta, theta_set, state, next_state) rows.

    Off-origin rows identify the turn-on curve (a, b); on-origin rows the
    turn-off curve (c, d). The feature is theta_set - theta in both fits.
    """
    obs = list(observations)
    theta = np.array([o[0] for o in obs], dtype=float)
    theta_set = np.array([o[1] for o in obs], dtype=float)
    state = np.array([o[2] for o in obs], dtype=int)
    nxt = np.array([o[3] for o in obs], dtype=int)
    gap = theta_set - theta

    off_rows = state == OFF
    on_rows = state == ON
    if not off_rows.any() or not on_rows.any():
        raise DegenerateDataError("need at least one observation from each origin state")

    results = {}
    for name, mask, outcome in (("on", off_rows, nxt[off_rows] == ON),
                                ("off", on_rows, nxt[on_rows] == OFF)):
        out = np.asarray(outcome, dtype=float)
        if np.all(out == out[0]):
            raise DegenerateDataError(
                f"turn-{name} outcomes are all {'positive' if out[0] else 'negative'}: "
                "boundary fit, parameters not identifiable"
            )
        fit = fit_logistic(gap[mask], out)
        if not fit.identifiable:
            warnings.warn(
                f"turn-{name} slope not identifiable (single temperature gap in the data); "
                "reporting intercept-only fit",
                stacklevel=2,
            )
        results[name] = fit

    return TransitionParams(
        a=results["on"].slope, b=results["on"].intercept,
        c=results["off"].slope, d=results["off"].intercept,
    )


def read_observations(path: str | Path) -> list[tuple[float, float, int, int]]:
    """Read transition observations from CSV with header
    theta,theta_set,state,next_state (states coded 0/1)."""
    path = Path(path)
    rows: list[tuple[float, float, int, int]] = []
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        expected = ["theta", "theta_set", "state", "next_state"]
        if reader.fieldnames != expected:
            raise ValueError(f"{path}: expected header {','.join(expected)}, got {reader.fieldnames}")
        for row in reader:
            rows.append((float(row["theta"]), float(row["theta_set"]),
                         int(row["state"]), int(row["next_state"])))
    return rows
