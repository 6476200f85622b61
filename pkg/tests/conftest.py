from __future__ import annotations

import numpy as np
import pytest

from acdr.scenario import (
    AcUnit,
    Forecast,
    Horizon,
    PriceSchedule,
    Scenario,
    TransitionParams,
)


def make_unit(**overrides) -> AcUnit:
    """A plain mid-range unit; alpha = exp(-300/12000) ~ 0.9753 at dt=300."""
    fields = dict(
        id=1,
        rated_power=1500.0,
        eer=3.0,
        thermal_resistance=0.004,
        thermal_capacity=3.0e6,
        theta_set=26.0,
        theta_min=23.0,
        theta_max=29.0,
        min_up_periods=2,
        min_down_periods=2,
        markov=TransitionParams(-2.0, -1.0, 1.5, -0.5),
        initial_state="on",
        initial_dwell_periods=2,
        initial_theta=26.0,
    )
    fields.update(overrides)
    return AcUnit(**fields)


def make_scenario(units, periods=8, dt=300.0, theta_out=28.0, price=1.0,
                  beta=0.0, epsilon=0.0, norm_kind="box", mc_samples=4,
                  master_seed=7) -> Scenario:
    if np.isscalar(theta_out):
        theta_out = (float(theta_out),) * periods
    if np.isscalar(price):
        price = (float(price),) * periods
    return Scenario(
        units=tuple(units),
        horizon=Horizon(periods=periods, dt=dt),
        forecast=Forecast(theta_out_pre=tuple(theta_out), epsilon=epsilon, norm_kind=norm_kind),
        prices=PriceSchedule(price=tuple(price)),
        beta=beta,
        mc_samples=mc_samples,
        master_seed=master_seed,
    )


@pytest.fixture
def unit():
    return make_unit()
