from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from acdr import milp, robust, solver, thermal
from acdr.baseline import BaselineResult
from acdr.milp import (
    Schedule,
    ScheduleValidationError,
    build_model,
    evaluate_schedule,
    export_lp,
    make_schedule,
    parse_lp,
    read_schedule_on_off,
    write_schedule_csv,
)
from acdr.robust import RobustMargin, robust_margins, unroll_affine

from conftest import make_scenario, make_unit

DATA = Path(__file__).parent / "data"


def zero_baseline(scenario) -> BaselineResult:
    G, T = scenario.num_units, scenario.horizon.periods
    return BaselineResult(
        mean_power=np.zeros((G, T)),
        mean_theta=np.full((G, T), 26.0),
        total_power=np.zeros(T),
        samples=1,
        master_seed=scenario.master_seed,
    )


def margins_for(scenario) -> list[RobustMargin]:
    return [
        robust_margins(unroll_affine(u, scenario.horizon),
                       scenario.forecast.epsilon, scenario.forecast.norm_kind)
        for u in scenario.units
    ]


def tiny_scenario(**kw):
    u = make_unit(min_up_periods=1, min_down_periods=1, initial_dwell_periods=1)
    defaults = dict(periods=3, theta_out=28.0, price=1.0, beta=0.5, epsilon=0.0)
    defaults.update(kw)
    return make_scenario([u], **defaults)


class TestBuildModelStructure:
    def test_variable_count_for_hand_sized_instance(self):
        s = tiny_scenario()
        model = build_model(s, zero_baseline(s), margins_for(s))
        assert len(model.variables) == 16  # 9 binaries + 3 theta + 3 d + gamma
        kinds = [v.kind for v in model.variables]
        assert kinds.count("binary") == 9

    def test_constraint_families_countable_by_hand(self):
        s = tiny_scenario()
        model = build_model(s, zero_baseline(s), margins_for(s))
        by_prefix = {}
        for c in model.constraints:
            by_prefix.setdefault(c.name.split("_")[0], []).append(c)
        assert len(by_prefix["dyn"]) == 2
        assert len(by_prefix["dpos"]) == 3
        assert len(by_prefix["dneg"]) == 3
        assert len(by_prefix["switch"]) == 3
        assert len(by_prefix["yv"]) == 3
        assert len(by_prefix["minup"]) == 3
        assert len(by_prefix["mindown"]) == 3
        assert len(by_prefix["gamma"]) == 1
        assert len(model.constraints) == 21

    def test_binaries_have_unit_bounds_and_unique_names(self):
        s = tiny_scenario()
        model = build_model(s, zero_baseline(s), margins_for(s))
        names = [v.name for v in model.variables]
        assert len(names) == len(set(names))
        for v in model.variables:
            if v.kind == "binary":
                assert (v.lower, v.upper) == (0.0, 1.0)

    def test_zero_epsilon_leaves_raw_band(self):
        s = tiny_scenario(epsilon=0.0)
        model = build_model(s, zero_baseline(s), margins_for(s))
        u = s.units[0]
        th = {v.name: v for v in model.variables if v.name.startswith("th_")}
        assert th["th_g1_t1"].lower == th["th_g1_t1"].upper == u.initial_theta
        for t in (2, 3):
            v = th[f"th_g1_t{t}"]
            assert (v.lower, v.upper) == (u.theta_min, u.theta_max)

    def test_epsilon_tightens_later_bounds(self):
        s = tiny_scenario(periods=6, epsilon=0.3)
        model = build_model(s, zero_baseline(s), margins_for(s))
        u = s.units[0]
        alpha = thermal.decay_factor(u, s.horizon.dt)
        v = next(v for v in model.variables if v.name == "th_g1_t6")
        assert v.upper == pytest.approx(u.theta_max - 0.3 * (1 - alpha**5), abs=1e-12)

    def test_zero_beta_detaches_deviation_variables(self):
        s = tiny_scenario(beta=0.0)
        model = build_model(s, zero_baseline(s), margins_for(s))
        gamma_def = next(c for c in model.constraints if c.name == "gamma_def")
        d_coefs = [coef for name, coef in gamma_def.terms if name.startswith("d_")]
        assert all(c == 0.0 for c in d_coefs)

    def test_initial_dwell_lock_rows(self):
        u = make_unit(min_up_periods=4, initial_dwell_periods=1, initial_state="on")
        s = make_scenario([u], periods=6, epsilon=0.0)
        model = build_model(s, zero_baseline(s), margins_for(s))
        locks = [c for c in model.constraints if c.name.startswith("lock_")]
        # 4-period minimum with 1 period already served: first 3 periods pinned on
        assert [c.name for c in locks] == ["lock_g1_t1", "lock_g1_t2", "lock_g1_t3"]
        assert all(c.relation == "=" and c.rhs == 1.0 for c in locks)

    def test_no_constraint_couples_two_units_except_gamma(self):
        s = make_scenario([make_unit(id=1), make_unit(id=2, rated_power=900.0)],
                          periods=6, epsilon=0.3, beta=0.7)
        model = build_model(s, zero_baseline(s), margins_for(s))
        for c in model.constraints:
            if c.name == "gamma_def":
                continue
            units_touched = {name.split("_g")[1].split("_")[0]
                             for name, _ in c.terms if "_g" in name}
            assert len(units_touched) <= 1, c.name

    def test_dimension_mismatch_rejected(self):
        s = tiny_scenario()
        bad = zero_baseline(make_scenario([make_unit()], periods=5))
        with pytest.raises(ValueError, match="dimensions"):
            build_model(s, bad, margins_for(s))


class TestScheduleEvaluation:
    def test_matching_baseline_and_setpoint_theta_gives_zero_revenue(self):
        u = make_unit(initial_theta=26.0, theta_set=26.0)
        s = make_scenario([u], periods=4, theta_out=26.0, price=1.0, beta=2.0)
        base = zero_baseline(s)
        schedule = make_schedule(s, base, np.zeros((1, 4), dtype=int))
        cost = evaluate_schedule(schedule, s, base)
        assert cost.aggregator_revenue == 0.0
        assert cost.penalty_cost == 0.0

    def test_unit_conversion_hand_case(self):
        # 1000 W avoided for one 300 s period at 1 CNY/kWh = 1/12 CNY
        u = make_unit(rated_power=1000.0, initial_theta=26.0, theta_set=26.0)
        s = make_scenario([u], periods=2, theta_out=26.0, price=1.0, beta=0.0)
        base = zero_baseline(s)
        base.mean_power[0, 0] = 1000.0
        schedule = make_schedule(s, base, np.zeros((1, 2), dtype=int))
        cost = evaluate_schedule(schedule, s, base)
        assert cost.aggregator_revenue == pytest.approx(1000.0 * 300.0 / 3.6e6, abs=1e-12)
        assert cost.aggregator_revenue == pytest.approx(0.08333333333333333, abs=1e-12)

    def test_power_mismatch_listed(self):
        s = tiny_scenario()
        base = zero_baseline(s)
        schedule = make_schedule(s, base, np.zeros((1, 3), dtype=int))
        broken = Schedule(on_off=schedule.on_off, power=schedule.power + 5.0,
                          theta_nominal=schedule.theta_nominal,
                          gamma=schedule.gamma, objective=schedule.objective)
        with pytest.raises(ScheduleValidationError, match="power"):
            evaluate_schedule(broken, s, base)

    def test_min_up_violation_listed(self):
        u = make_unit(min_up_periods=3, min_down_periods=1, initial_state="off",
                      initial_dwell_periods=5, theta_min=10.0, theta_max=40.0)
        s = make_scenario([u], periods=5, beta=0.0)
        base = zero_baseline(s)
        schedule = make_schedule(s, base, np.array([[1, 1, 0, 0, 0]]))
        with pytest.raises(ScheduleValidationError, match="min_up"):
            evaluate_schedule(schedule, s, base)

    def test_band_breach_listed(self):
        u = make_unit(initial_theta=28.9, theta_max=29.0)
        s = make_scenario([u], periods=6, theta_out=35.0, beta=0.0)
        base = zero_baseline(s)
        schedule = make_schedule(s, base, np.zeros((1, 6), dtype=int))
        with pytest.raises(ScheduleValidationError, match="exceeds theta_max"):
            evaluate_schedule(schedule, s, base)

    def test_gamma_matches_priced_deviation_at_solved_optimum(self):
        s = tiny_scenario(beta=0.5, theta_out=30.0)
        base = zero_baseline(s)
        margins = margins_for(s)
        schedule, _ = solver.solve_cluster(s, base, margins)
        dt_h = s.horizon.dt / 3600.0
        dev = np.abs(schedule.theta_nominal - s.units[0].theta_set).sum()
        assert schedule.gamma == pytest.approx(0.5 * dt_h * dev, rel=1e-9)


class TestLpRoundTrip:
    def build(self):
        s = make_scenario([make_unit(id=1), make_unit(id=2, rated_power=900.0)],
                          periods=4, theta_out=29.0, price=(0.3, 3.0, 3.0, 0.3),
                          beta=0.4, epsilon=0.3)
        base = zero_baseline(s)
        base.mean_power[:, :] = 450.0
        return s, build_model(s, base, margins_for(s))

    def test_reparse_reproduces_model(self, tmp_path):
        _, model = self.build()
        path = tmp_path / "model.lp"
        export_lp(model, path)
        parsed = parse_lp(path)

        orig_vars = {v.name: (v.kind, v.lower, v.upper) for v in model.variables}
        back_vars = {v.name: (v.kind, v.lower, v.upper) for v in parsed.variables}
        assert set(orig_vars) == set(back_vars)
        for name, (kind, lo, hi) in orig_vars.items():
            bkind, blo, bhi = back_vars[name]
            assert bkind == kind
            assert blo == pytest.approx(lo, rel=1e-11, abs=1e-11)
            assert bhi == hi or bhi == pytest.approx(hi, rel=1e-11)

        orig_cons = {c.name: c for c in model.constraints}
        back_cons = {c.name: c for c in parsed.constraints}
        assert set(orig_cons) == set(back_cons)
        for name, c in orig_cons.items():
            b = back_cons[name]
            assert b.relation == c.relation
            assert b.rhs == pytest.approx(c.rhs, rel=1e-11, abs=1e-11)
            assert dict(b.terms).keys() == dict(c.terms).keys()
            for var, coef in c.terms:
                assert dict(b.terms)[var] == pytest.approx(coef, rel=1e-11, abs=1e-14)

        assert parsed.objective_sense == model.objective_sense
        assert dict(parsed.objective_terms).keys() == dict(model.objective_terms).keys()
        assert parsed.objective_constant == pytest.approx(model.objective_constant, rel=1e-11)

    def test_binaries_section_lists_three_per_unit_period(self, tmp_path):
        s, model = self.build()
        path = tmp_path / "model.lp"
        export_lp(model, path)
        text = path.read_text()
        binaries = text.split("Binaries")[1].split("End")[0].split()
        assert len(binaries) == 3 * s.num_units * s.horizon.periods

    def test_golden_fixture_bytes(self, tmp_path):
        s = tiny_scenario(beta=0.5, theta_out=30.0, price=2.0)
        model = build_model(s, zero_baseline(s), margins_for(s))
        path = tmp_path / "tiny.lp"
        export_lp(model, path)
        golden = (DATA / "tiny_model.golden.lp").read_bytes()
        assert path.read_bytes() == golden


class TestScheduleCsv:
    def test_round_trip_on_off(self, tmp_path):
        s = make_scenario([make_unit(id=1), make_unit(id=4, rated_power=900.0)],
                          periods=5, beta=0.0)
        base = zero_baseline(s)
        rng = np.random.default_rng(2)
        on_off = rng.integers(0, 2, (2, 5))
        schedule = make_schedule(s, base, on_off)
        path = tmp_path / "schedule.csv"
        write_schedule_csv(schedule, s, path)
        assert (read_schedule_on_off(path, s) == on_off).all()

    def test_unknown_unit_rejected(self, tmp_path):
        s = make_scenario([make_unit(id=1)], periods=3)
        path = tmp_path / "schedule.csv"
        path.write_text("unit_id,t,u,power_W,theta_C,d_C\n5,1,0,0,26,0\n")
        with pytest.raises(ValueError, match="unknown unit"):
            read_schedule_on_off(path, s)

    def test_incomplete_coverage_rejected(self, tmp_path):
        s = make_scenario([make_unit(id=1)], periods=3)
        path = tmp_path / "schedule.csv"
        path.write_text("unit_id,t,u,power_W,theta_C,d_C\n1,1,0,0,26,0\n")
        with pytest.raises(ValueError, match="cover"):
            read_schedule_on_off(path, s)
