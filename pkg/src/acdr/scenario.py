"""Domain inputs: AC units, horizons, forecasts, prices, and scenario files.

Everything is SI internally: watts, seconds, joules, degrees Celsius.
Billing converts watt-seconds to kWh; comfort penalties are priced per
degree-hour.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WS_PER_KWH = 3.6e6
SECONDS_PER_HOUR = 3600.0

ON = "on"
OFF = "off"


class ConfigurationError(ValueError):
    """A domain object or generator spec violates its invariants."""


class ScenarioFormatError(ValueError):
    """A scenario file does not match the expected schema."""


def energy_kwh(power_w: float, dt_s: float) -> float:
    return power_w * dt_s / WS_PER_KWH


def hours(dt_s: float) -> float:
    return dt_s / SECONDS_PER_HOUR


@dataclass(frozen=True)
class TransitionParams:
    """Sigmoid coefficients for the on/off switching probabilities.

    (a, b) shape the turn-on curve, (c, d) the turn-off curve; both act on
    the setpoint-minus-room-temperature gap.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ConfigurationError(f"transition parameter {name} must be finite, got {v!r}")


@dataclass(frozen=True)
class AcUnit:
    """One fixed-speed air conditioner and the room it serves."""

    id: int
    rated_power: float            # W
    eer: float                    # cooling W per electrical W
    thermal_resistance: float     # degC per W
    thermal_capacity: float       # J per degC
    theta_set: float              # degC
    theta_min: float              # degC
    theta_max: float              # degC
    min_up_periods: int
    min_down_periods: int
    markov: TransitionParams
    initial_state: str            # "on" | "off"
    initial_dwell_periods: int
    initial_theta: float          # degC

    def __post_init__(self):
        u = f"unit {self.id}"
        if self.rated_power <= 0:
            raise ConfigurationError(f"{u}: rated_power must be > 0, got {self.rated_power}")
        if self.eer <= 0:
            raise ConfigurationError(f"{u}: eer must be > 0, got {self.eer}")
        if self.thermal_resistance <= 0:
            raise ConfigurationError(f"{u}: thermal_resistance must be > 0, got {self.thermal_resistance}")
        if self.thermal_capacity <= 0:
            raise ConfigurationError(f"{u}: thermal_capacity must be > 0, got {self.thermal_capacity}")
        if not (self.theta_min <= self.theta_set <= self.theta_max):
            raise ConfigurationError(
                f"{u}: need theta_min <= theta_set <= theta_max, got "
                f"{self.theta_min} / {self.theta_set} / {self.theta_max}"
            )
        if not (self.theta_min <= self.initial_theta <= self.theta_max):
            raise ConfigurationError(
                f"{u}: initial_theta {self.initial_theta} outside "
                f"[{self.theta_min}, {self.theta_max}]"
            )
        if self.min_up_periods < 1 or self.min_down_periods < 1:
            raise ConfigurationError(f"{u}: min up/down periods must be >= 1")
        if self.initial_dwell_periods < 0:
            raise ConfigurationError(f"{u}: initial_dwell_periods must be >= 0")
        if self.initial_state not in (ON, OFF):
            raise ConfigurationError(f"{u}: initial_state must be 'on' or 'off', got {self.initial_state!r}")

    @property
    def initial_on(self) -> bool:
        return self.initial_state == ON

    @property
    def cooling_gain(self) -> float:
        """Full-on steady-state temperature depression R*eta*P_rated (degC)."""
        return self.thermal_resistance * self.eer * self.rated_power


@dataclass(frozen=True)
class Horizon:
    periods: int                  # T
    dt: float                     # seconds per period
    start_clock_time: float = 0.0  # seconds since midnight, labeling only

    def __post_init__(self):
        if self.periods < 2:
            raise ConfigurationError(f"horizon needs periods >= 2, got {self.periods}")
        if self.dt <= 0:
            raise ConfigurationError(f"horizon dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class Forecast:
    theta_out_pre: tuple[float, ...]  # nominal outdoor temperature per period, degC
    epsilon: float                    # uncertainty radius, degC
    norm_kind: str = "box"            # "box" (sup-norm ball) | "ellipsoid" (Euclidean ball)

    def __post_init__(self):
        object.__setattr__(self, "theta_out_pre", tuple(float(v) for v in self.theta_out_pre))
        if self.epsilon < 0:
            raise ConfigurationError(f"forecast epsilon must be >= 0, got {self.epsilon}")
        if self.norm_kind not in ("box", "ellipsoid"):
            raise ConfigurationError(f"forecast norm_kind must be 'box' or 'ellipsoid', got {self.norm_kind!r}")


@dataclass(frozen=True)
class PriceSchedule:
    price: tuple[float, ...]  # CNY per kWh, one entry per period

    def __post_init__(self):
        object.__setattr__(self, "price", tuple(float(v) for v in self.price))
        if any(p < 0 for p in self.price):
            raise ConfigurationError("prices must be >= 0")


@dataclass(frozen=True)
class Scenario:
    units: tuple[AcUnit, ...]
    horizon: Horizon
    forecast: Forecast
    prices: PriceSchedule
    beta: float          # CNY per degC-hour of comfort deviation
    mc_samples: int
    master_seed: int

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        if len(self.units) < 1:
            raise ConfigurationError("scenario needs at least one unit")
        if self.beta < 0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
        if self.mc_samples < 1:
            raise ConfigurationError(f"mc_samples must be >= 1, got {self.mc_samples}")
        T = self.horizon.periods
        if len(self.forecast.theta_out_pre) != T:
            raise ConfigurationError(
                f"forecast length {len(self.forecast.theta_out_pre)} != periods {T}"
            )
        if len(self.prices.price) != T:
            raise ConfigurationError(f"price length {len(self.prices.price)} != periods {T}")
        ids = [u.id for u in self.units]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("unit ids must be unique")

    @property
    def num_units(self) -> int:
        return len(self.units)


@dataclass(frozen=True)
class PopulationSpec:
    """Ranges for randomized AC populations.

    Room thermal ranges follow field survey values; rated power and EER
    ranges are implementation defaults and freely overridable. The comfort
    band is setpoint +/- band_halfwidth.
    """

    r_range: tuple[float, float] = (0.001, 0.00772)          # degC/W
    c_range: tuple[float, float] = (336140.0, 3074600.0)     # J/degC
    rated_power_range: tuple[float, float] = (1000.0, 3000.0)  # W
    eer_range: tuple[float, float] = (2.5, 4.0)
    theta_set_choices: tuple[float, ...] = (24.0, 25.0, 26.0, 27.0, 28.0)
    band_halfwidth: float = 3.0
    initial_theta_range: tuple[float, float] = (25.0, 28.0)
    min_up_periods: int = 2
    min_down_periods: int = 2
    markov: TransitionParams = field(default_factory=lambda: TransitionParams(-2.0, -1.0, 1.5, -0.5))
    initial_state: str = ON

    def __post_init__(self):
        for name in ("r_range", "c_range", "rated_power_range", "eer_range", "initial_theta_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigurationError(f"population spec {name}: min {lo} > max {hi}")
        if self.r_range[0] <= 0 or self.c_range[0] <= 0:
            raise ConfigurationError("thermal ranges must be positive")
        if self.rated_power_range[0] <= 0 or self.eer_range[0] <= 0:
            raise ConfigurationError("power and EER ranges must be positive")
        if not self.theta_set_choices:
            raise ConfigurationError("theta_set_choices must be nonempty")
        if self.band_halfwidth <= 0:
            raise ConfigurationError("band_halfwidth must be > 0")


def generate_population(count: int, spec: PopulationSpec | None = None, seed: int = 0) -> list[AcUnit]:
    """Draw `count` independent AC units from the distributions in `spec`.

    Pure function of (count, spec, seed): the draw order per field is fixed,
    so the same inputs always give the same population.
    """
    if count < 1:
        raise ConfigurationError(f"count must be >= 1, got {count}")
    spec = spec or PopulationSpec()
    rng = np.random.default_rng(seed)

    r = rng.uniform(spec.r_range[0], spec.r_range[1], count)
    c = rng.uniform(spec.c_range[0], spec.c_range[1], count)
    theta_set = rng.choice(np.asarray(spec.theta_set_choices, dtype=float), size=count)
    rated = rng.uniform(spec.rated_power_range[0], spec.rated_power_range[1], count)
    eer = rng.uniform(spec.eer_range[0], spec.eer_range[1], count)
    raw_theta0 = rng.uniform(spec.initial_theta_range[0], spec.initial_theta_range[1], count)

    theta_min = theta_set - spec.band_halfwidth
    theta_max = theta_set + spec.band_halfwidth
    theta0 = np.clip(raw_theta0, theta_min, theta_max)

    dwell = min(spec.min_up_periods, spec.min_down_periods)
    return [
        AcUnit(
            id=i + 1,
            rated_power=float(rated[i]),
            eer=float(eer[i]),
            thermal_resistance=float(r[i]),
            thermal_capacity=float(c[i]),
            theta_set=float(theta_set[i]),
            theta_min=float(theta_min[i]),
            theta_max=float(theta_max[i]),
            min_up_periods=spec.min_up_periods,
            min_down_periods=spec.min_down_periods,
            markov=spec.markov,
            initial_state=spec.initial_state,
            initial_dwell_periods=dwell,
            initial_theta=float(theta0[i]),
        )
        for i in range(count)
    ]


# ---------- scenario file i/o

_SCENARIO_KEYS = {"horizon", "forecast", "prices", "beta", "mc_samples", "master_seed", "units"}
_HORIZON_KEYS = {"periods", "dt", "start_clock_time"}
_FORECAST_KEYS = {"theta_out_pre", "epsilon", "norm_kind"}
_PRICES_KEYS = {"price"}
_UNIT_KEYS = {
    "id", "rated_power", "eer", "thermal_resistance", "thermal_capacity",
    "theta_set", "theta_min", "theta_max", "min_up_periods", "min_down_periods",
    "markov", "initial_state", "initial_dwell_periods", "initial_theta",
}
_MARKOV_KEYS = {"a", "b", "c", "d"}


def _check_keys(obj: dict, expected: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ScenarioFormatError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - expected
    if unknown:
        raise ScenarioFormatError(f"{where}: unknown field {sorted(unknown)[0]}")
    missing = expected - set(obj)
    if missing:
        raise ScenarioFormatError(f"{where}: missing field {sorted(missing)[0]}")


def _unit_from_dict(raw: dict, where: str) -> AcUnit:
    _check_keys(raw, _UNIT_KEYS, where)
    _check_keys(raw["markov"], _MARKOV_KEYS, f"{where}.markov")
    try:
        return AcUnit(
            id=int(raw["id"]),
            rated_power=float(raw["rated_power"]),
            eer=float(raw["eer"]),
            thermal_resistance=float(raw["thermal_resistance"]),
            thermal_capacity=float(raw["thermal_capacity"]),
            theta_set=float(raw["theta_set"]),
            theta_min=float(raw["theta_min"]),
            theta_max=float(raw["theta_max"]),
            min_up_periods=int(raw["min_up_periods"]),
            min_down_periods=int(raw["min_down_periods"]),
            markov=TransitionParams(
                a=float(raw["markov"]["a"]),
                b=float(raw["markov"]["b"]),
                c=float(raw["markov"]["c"]),
                d=float(raw["markov"]["d"]),
            ),
            initial_state=str(raw["initial_state"]),
            initial_dwell_periods=int(raw["initial_dwell_periods"]),
            initial_theta=float(raw["initial_theta"]),
        )
    except ConfigurationError as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{where}: bad value ({exc})") from exc


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file (strict: unknown keys are errors)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc

    _check_keys(raw, _SCENARIO_KEYS, "scenario")
    _check_keys(raw["horizon"], _HORIZON_KEYS, "horizon")
    _check_keys(raw["forecast"], _FORECAST_KEYS, "forecast")
    _check_keys(raw["prices"], _PRICES_KEYS, "prices")
    if not isinstance(raw["units"], list):
        raise ScenarioFormatError("units: expected an array")

    units = [_unit_from_dict(u, f"units[{i}]") for i, u in enumerate(raw["units"])]
    try:
        return Scenario(
            units=tuple(units),
            horizon=Horizon(
                periods=int(raw["horizon"]["periods"]),
                dt=float(raw["horizon"]["dt"]),
                start_clock_time=float(raw["horizon"]["start_clock_time"]),
            ),
            forecast=Forecast(
                theta_out_pre=tuple(float(v) for v in raw["forecast"]["theta_out_pre"]),
                epsilon=float(raw["forecast"]["epsilon"]),
                norm_kind=str(raw["forecast"]["norm_kind"]),
            ),
            prices=PriceSchedule(price=tuple(float(v) for v in raw["prices"]["price"])),
            beta=float(raw["beta"]),
            mc_samples=int(raw["mc_samples"]),
            master_seed=int(raw["master_seed"]),
        )
    except ConfigurationError as exc:
        raise ScenarioFormatError(str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "horizon": {
            "periods": s.horizon.periods,
            "dt": s.horizon.dt,
            "start_clock_time": s.horizon.start_clock_time,
        },
        "forecast": {
            "theta_out_pre": list(s.forecast.theta_out_pre),
            "epsilon": s.forecast.epsilon,
            "norm_kind": s.forecast.norm_kind,
        },
        "prices": {"price": list(s.prices.price)},
        "beta": s.beta,
        "mc_samples": s.mc_samples,
        "master_seed": s.master_seed,
        "units": [
            {
                "id": u.id,
                "rated_power": u.rated_power,
                "eer": u.eer,
                "thermal_resistance": u.thermal_resistance,
                "thermal_capacity": u.thermal_capacity,
                "theta_set": u.theta_set,
                "theta_min": u.theta_min,
                "theta_max": u.theta_max,
                "min_up_periods": u.min_up_periods,
                "min_down_periods": u.min_down_periods,
                "markov": {"a": u.markov.a, "b": u.markov.b, "c": u.markov.c, "d": u.markov.d},
                "initial_state": u.initial_state,
                "initial_dwell_periods": u.initial_dwell_periods,
                "initial_theta": u.initial_theta,
            }
            for u in s.units
        ],
    }


def save_scenario(s: Scenario, path: str | Path) -> None:
    path = Path(path)
    path.write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n", encoding="utf-8")


# ---------- bundled example scenario

def default_outdoor_curve(periods: int) -> tuple[float, ...]:
    """Mild afternoon warm-up.

    Stays below 26.7 degC, the tightest robust cap a 24 degC setpoint can
    carry, so populations drawn from the full survey ranges (where huge
    cooling gains make any minimum-length on-run overshoot the band floor)
    remain schedulable without ever switching on.
    """
    x = np.arange(periods) / max(periods - 1, 1)
    return tuple(25.5 + 1.0 * x**1.5)


def bundled_outdoor_curve(periods: int) -> tuple[float, ...]:
    """Heat-wave afternoon: cool morning, steep late-morning rise, hot plateau."""
    x = np.arange(periods) / max(periods - 1, 1)
    return tuple(26.0 + 9.0 / (1.0 + np.exp(-(x - 0.30) / 0.10)))


def default_price_curve(periods: int, off_peak: float = 0.3, peak: float = 3.0) -> tuple[float, ...]:
    """Time-of-use price with a high-price block over the middle half."""
    price = np.full(periods, off_peak)
    lo = periods // 4
    hi = periods - periods // 4
    price[lo:hi] = peak
    return tuple(price)


def bundled_population_spec() -> PopulationSpec:
    """Population used by the bundled scenario.

    Much narrower than the full survey spread: every room carries enough
    thermal storage to coast through the whole high-price block after
    pre-cooling, which is what makes complete peak shaving attainable, and
    enough cooling gain to finish banking within the hour before it.
    """
    return PopulationSpec(
        r_range=(0.0036, 0.004),
        c_range=(2.9e6, 3.0746e6),
        rated_power_range=(1200.0, 1500.0),
        eer_range=(3.0, 3.4),
        theta_set_choices=(26.0,),
        initial_theta_range=(25.0, 27.0),
    )


def bundled_scenario(count: int = 100, seed: int = 42) -> Scenario:
    """Deterministic example scenario: a 4-hour heat-wave window from 10:00,
    5-minute periods, 10x peak price over the middle two hours."""
    periods = 48
    units = generate_population(count, bundled_population_spec(), seed)
    return Scenario(
        units=tuple(units),
        horizon=Horizon(periods=periods, dt=300.0, start_clock_time=10 * 3600.0),
        forecast=Forecast(theta_out_pre=bundled_outdoor_curve(periods), epsilon=0.3, norm_kind="box"),
        prices=PriceSchedule(price=default_price_curve(periods)),
        beta=0.12,
        mc_samples=200,
        master_seed=seed,
    )
