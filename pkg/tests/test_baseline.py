from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from acdr import baseline
from acdr.scenario import TransitionParams, bundled_scenario

from conftest import make_scenario, make_unit

# intercepts at +-50 saturate the sigmoid: switching becomes (almost surely) impossible
NEVER = -50.0
ALWAYS = 50.0


class TestSimulateSample:
    def test_absorbing_off_state_gives_zero_power(self):
        units = [make_unit(id=i + 1, initial_state="off",
                           markov=TransitionParams(0.0, NEVER, 0.0, 0.0))
                 for i in range(3)]
        s = make_scenario(units, periods=12, theta_out=30.0)
        power, theta = baseline.simulate_sample(s, 0)
        assert (power == 0).all()
        # rooms relax toward the outdoor temperature
        assert (np.diff(theta, axis=1) > 0).all()

    def test_absorbing_on_state_gives_rated_power(self):
        units = [make_unit(id=i + 1, initial_state="on", theta_min=10.0, theta_max=40.0,
                           theta_set=26.0, initial_theta=26.0,
                           markov=TransitionParams(0.0, 0.0, 0.0, NEVER))
                 for i in range(3)]
        s = make_scenario(units, periods=12)
        power, _ = baseline.simulate_sample(s, 0)
        for g, u in enumerate(s.units):
            assert (power[g] == u.rated_power).all()

    def test_scripted_draws_trace_by_hand(self):
        # p(switch) = 0.5 for both transitions at every temperature;
        # draw 0.9 keeps the initial off state, draw 0.1 switches it on
        u = make_unit(initial_state="off", markov=TransitionParams(0.0, 0.0, 0.0, 0.0))
        s = make_scenario([u], periods=3)
        uniforms = np.array([[0.9], [0.1]])
        power, theta = baseline._simulate_with_uniforms(s, uniforms)
        assert power[0].tolist() == [0.0, 0.0, u.rated_power]
        # temperatures follow the off/off steps of the recurrence
        from acdr import thermal
        expect = thermal.simulate_trajectory(u, [0, 0, 1], s.forecast.theta_out_pre, 300.0)
        assert theta[0] == pytest.approx(expect)

    def test_deterministic_in_seed_and_index(self):
        s = make_scenario([make_unit()], periods=10, mc_samples=1)
        p1, t1 = baseline.simulate_sample(s, 3)
        p2, t2 = baseline.simulate_sample(s, 3)
        p3, _ = baseline.simulate_sample(s, 4)
        assert (p1 == p2).all() and (t1 == t2).all()
        assert not (p1 == p3).all()


class TestRunBaseline:
    def test_single_sample_equals_mean_of_one(self):
        s = make_scenario([make_unit(id=1), make_unit(id=2)], periods=10, mc_samples=1)
        result = baseline.run_baseline(s)
        power, theta = baseline.simulate_sample(s, 0)
        assert (result.mean_power == power).all()
        assert (result.mean_theta == theta).all()

    def test_bit_identical_reruns(self):
        s = make_scenario([make_unit()], periods=12, mc_samples=100)
        r1 = baseline.run_baseline(s)
        r2 = baseline.run_baseline(s)
        assert (r1.mean_power == r2.mean_power).all()
        assert (r1.mean_theta == r2.mean_theta).all()

    def test_total_power_is_unit_sum(self):
        s = make_scenario([make_unit(id=1), make_unit(id=2, rated_power=900.0)],
                          periods=10, mc_samples=25)
        r = baseline.run_baseline(s)
        assert np.allclose(r.total_power, r.mean_power.sum(axis=0), rtol=1e-6)

    def test_mean_power_within_rated_bounds(self):
        s = make_scenario([make_unit(id=1), make_unit(id=2, rated_power=900.0)],
                          periods=10, mc_samples=50)
        r = baseline.run_baseline(s)
        rated = np.array([u.rated_power for u in s.units])[:, None]
        assert (r.mean_power >= 0).all() and (r.mean_power <= rated).all()

    def test_absorbing_off_scenario_mean_is_zero(self):
        u = make_unit(initial_state="off", markov=TransitionParams(0.0, NEVER, 0.0, 0.0))
        s = make_scenario([u], periods=10, mc_samples=40)
        r = baseline.run_baseline(s)
        assert (r.mean_power == 0).all()

    def test_disjoint_seeds_agree_within_three_standard_errors(self):
        s = bundled_scenario(count=20, seed=5)
        n = 400
        r1 = baseline.run_baseline(replace(s, mc_samples=n, master_seed=101))
        r2 = baseline.run_baseline(replace(s, mc_samples=n, master_seed=202))
        # standard error of the mean total power, estimated per period
        totals = np.stack([
            baseline.simulate_sample(replace(s, master_seed=101), i)[0].sum(axis=0)
            for i in range(n)
        ])
        se = totals.std(axis=0, ddof=1) / np.sqrt(n)
        gap = np.abs(r1.total_power - r2.total_power)
        assert (gap <= 3 * np.maximum(se, 1e-9) * np.sqrt(2)).all()


def test_bundled_afternoon_power_rises():
    # heat-wave shape: mean total power over the final quarter strictly
    # exceeds the second quarter
    s = bundled_scenario()
    r = baseline.run_baseline(s)
    T = s.horizon.periods
    q2 = r.total_power[T // 4: T // 2].mean()
    q4 = r.total_power[3 * T // 4:].mean()
    assert q4 > q2


class TestBaselineCsv:
    def test_period_rows_and_clock_labels(self, tmp_path):
        s = make_scenario([make_unit()], periods=4, mc_samples=2)
        s = replace(s, horizon=replace(s.horizon, start_clock_time=10 * 3600.0))
        r = baseline.run_baseline(s)
        path = tmp_path / "baseline.csv"
        baseline.write_baseline_csv(r, s, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,clock,total_power_W,mean_theta_C"
        assert len(lines) == 5
        assert lines[1].startswith("1,10:00:00,")
        assert lines[2].startswith("2,10:05:00,")

    def test_per_unit_expansion(self, tmp_path):
        s = make_scenario([make_unit(id=1), make_unit(id=2)], periods=4, mc_samples=2)
        r = baseline.run_baseline(s)
        path = tmp_path / "baseline.csv"
        baseline.write_baseline_csv(r, s, path, per_unit=True)
        header = path.read_text().splitlines()[0]
        assert "power_W_unit1" in header and "theta_C_unit2" in header
