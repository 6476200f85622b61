from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from acdr import thermal
from acdr.robust import unroll_affine
from acdr.scenario import Horizon

from conftest import make_unit

# independent oracle: high-precision value of exp(-0.06)
EXP_MINUS_006 = 0.9417645335842487


class TestDecayFactor:
    def test_rc_time_step_gives_inverse_e(self):
        u = make_unit(thermal_resistance=0.004, thermal_capacity=3.0e6)
        rc = 0.004 * 3.0e6
        assert thermal.decay_factor(u, rc) == pytest.approx(np.exp(-1.0), abs=1e-15)

    def test_zero_dt_is_identity(self, unit):
        assert thermal.decay_factor(unit, 0.0) == 1.0

    def test_frozen_value(self):
        u = make_unit(thermal_resistance=0.005, thermal_capacity=1.0e6)
        assert thermal.decay_factor(u, 300.0) == pytest.approx(EXP_MINUS_006, abs=1e-15)

    def test_strictly_decreasing_in_dt(self, unit):
        dts = np.linspace(0.0, 3600.0, 25)
        alphas = [thermal.decay_factor(unit, dt) for dt in dts]
        assert all(a > b for a, b in zip(alphas, alphas[1:]))


def test_coeffs_bundle_alpha_and_gain(unit):
    c = thermal.coeffs(unit, 300.0)
    assert 0.0 < c.alpha < 1.0
    assert c.alpha == thermal.decay_factor(unit, 300.0)
    assert c.gain == pytest.approx(0.004 * 3.0 * 1500.0)


class TestStepTemperature:
    def test_off_at_outdoor_temperature_is_fixed_point(self, unit):
        assert thermal.step_temperature(28.0, 28.0, 0.0, unit, 300.0) == pytest.approx(28.0, abs=1e-12)

    def test_full_on_equilibrium_is_fixed_point(self, unit):
        theta = 30.0 - unit.cooling_gain
        got = thermal.step_temperature(theta, 30.0, unit.rated_power, unit, 300.0)
        assert got == pytest.approx(theta, abs=1e-9)

    def test_hand_computed_affine_map(self):
        # alpha = 0.5 via dt = RC*ln(2); gain arranged to be exactly 10
        u = make_unit(thermal_resistance=0.004, thermal_capacity=2.5e6,
                      eer=2.5, rated_power=1000.0)
        dt = 0.004 * 2.5e6 * np.log(2.0)
        assert u.cooling_gain == pytest.approx(10.0)
        got = thermal.step_temperature(26.0, 32.0, 1000.0, u, dt)
        assert got == pytest.approx(24.0, abs=1e-9)  # 0.5*26 + 0.5*(32-10)

    @given(theta1=st.floats(15, 35), theta2=st.floats(15, 35))
    def test_contraction_in_theta(self, theta1, theta2):
        u = make_unit()
        alpha = thermal.decay_factor(u, 300.0)
        s1 = thermal.step_temperature(theta1, 30.0, 0.0, u, 300.0)
        s2 = thermal.step_temperature(theta2, 30.0, 0.0, u, 300.0)
        assert abs(abs(s1 - s2) - alpha * abs(theta1 - theta2)) < 1e-12

    def test_monotone_in_outdoor_and_power(self, unit):
        base = thermal.step_temperature(26.0, 30.0, 0.0, unit, 300.0)
        assert thermal.step_temperature(26.0, 30.5, 0.0, unit, 300.0) > base
        assert thermal.step_temperature(26.0, 30.0, unit.rated_power, unit, 300.0) < base


class TestSimulateTrajectory:
    def test_fixed_point_propagates(self):
        u = make_unit(initial_theta=27.0)
        traj = thermal.simulate_trajectory(u, [0, 0], [27.0, 27.0], 300.0)
        assert traj == pytest.approx([27.0, 27.0], abs=1e-12)

    def test_matches_manual_fold(self, unit):
        on_off = [1, 0, 1, 0, 0]
        theta_out = [30.0, 31.0, 29.5, 30.5, 28.0]
        traj = thermal.simulate_trajectory(unit, on_off, theta_out, 300.0)
        theta = unit.initial_theta
        for i in range(4):
            theta = thermal.step_temperature(theta, theta_out[i], on_off[i] * unit.rated_power,
                                             unit, 300.0)
            assert traj[i + 1] == theta

    def test_monotone_in_each_outdoor_entry(self, unit):
        rng = np.random.default_rng(4)
        T = 10
        on_off = rng.integers(0, 2, T)
        theta_out = 28.0 + rng.normal(0, 1, T)
        base = thermal.simulate_trajectory(unit, on_off, theta_out, 300.0)
        for k in range(T - 1):
            bumped = theta_out.copy()
            bumped[k] += 0.5
            new = thermal.simulate_trajectory(unit, on_off, bumped, 300.0)
            assert (new[k + 1:] >= base[k + 1:] - 1e-12).all()
            assert new[k + 1] > base[k + 1]

    def test_rejects_non_binary_plan(self, unit):
        with pytest.raises(ValueError, match="0 or 1"):
            thermal.simulate_trajectory(unit, [0, 2], [28.0, 28.0], 300.0)

    def test_rejects_length_mismatch(self, unit):
        with pytest.raises(ValueError, match="mismatch"):
            thermal.simulate_trajectory(unit, [0, 1], [28.0], 300.0)

    def test_closed_form_unroll_agreement(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            u = make_unit(
                thermal_resistance=float(rng.uniform(0.002, 0.0077)),
                thermal_capacity=float(rng.uniform(0.5e6, 3.0e6)),
                initial_theta=float(rng.uniform(24.0, 28.0)),
            )
            T = 24
            on_off = rng.integers(0, 2, T)
            theta_out = 28.0 + rng.normal(0, 2, T)
            traj = thermal.simulate_trajectory(u, on_off, theta_out, 300.0)
            state_map = unroll_affine(u, Horizon(periods=T, dt=300.0))
            unrolled = state_map.evaluate(theta_out, on_off)
            assert np.max(np.abs(traj - unrolled)) < 1e-9
