"""Feedback trajectories, cost functionals and optimality diagnostics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optliq import (
    ArgumentError,
    ConstantImpact,
    ConstantRisk,
    ControlTrajectory,
    GBMImpact,
    PenalizedParams,
    PowerPair,
    PowerSingularImpact,
    TimeGrid,
    ZeroRisk,
    candidate_control,
    closed_form_y,
    cost,
    integrate_control,
    maximum_principle_diag,
    monotone_envelope,
    optimality_tournament,
    penalized_cost,
    sample_paths,
    schedule_functions,
    solve_penalized_deterministic,
    solve_penalized_mc,
    value_identity_check,
)
from optliq.bsde import YField
from optliq.control import _pathwise_terms

P2 = PowerPair.from_p(2.0)
ZERO = ZeroRisk()
UNIT = ConstantImpact(1.0)


def unit_ensemble(grid, n_paths=1, seed=0):
    return sample_paths(UNIT, ZERO, grid, seed=seed, n_paths=n_paths)


class TestIntegrateControl:
    def test_martingale_field_gives_linear_schedule(self):
        grid = TimeGrid.build(1.0, 4000, 2.0)
        y = 1.0 / (1.0 - grid.nodes[:-1])
        fld = YField(grid=grid, y_values=y, terminal_level=None)
        traj = integrate_control(fld, unit_ensemble(grid), P2, xi=1.0)
        assert traj.x_values[0, -1] == 0.0
        assert np.max(np.abs(traj.x_values[0] - (1.0 - grid.nodes))) <= 1e-4

    def test_sqrt_family_tight_tolerance(self):
        # steeper clustering resolves the singular rate to 1e-6
        impact = PowerSingularImpact(0.5, 1.0)
        grid = TimeGrid.build(1.0, 4000, 4.0)
        ens = sample_paths(impact, ZERO, grid, seed=0, n_paths=1)
        traj = integrate_control(closed_form_y(impact, P2, 1.0), ens, P2, xi=1.0)
        target = np.sqrt(np.maximum(1.0 - grid.nodes, 0.0))
        assert np.max(np.abs(traj.x_values[0] - target)) <= 1e-6

    def test_zero_field_means_no_trading(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        fld = YField(grid=grid, y_values=np.zeros(101), terminal_level=0.0)
        traj = integrate_control(fld, unit_ensemble(grid), P2, xi=3.0)
        assert np.all(traj.x_values == 3.0)
        assert np.all(traj.rate_values == 0.0)

    def test_position_sign_preserved(self):
        grid = TimeGrid.build(1.0, 200, 2.0)
        traj = integrate_control(closed_form_y(UNIT, P2, 1.0), unit_ensemble(grid), P2, xi=-2.0)
        assert np.all(traj.x_values[:, :-1] < 0.0)
        assert traj.x_values[0, -1] == 0.0

    def test_terminal_rate_repeats_penultimate(self):
        grid = TimeGrid.build(1.0, 50, 1.0)
        traj = integrate_control(closed_form_y(UNIT, P2, 1.0), unit_ensemble(grid), P2, xi=1.0)
        assert traj.rate_values[0, -1] == traj.rate_values[0, -2]


class TestCandidates:
    def test_linear(self):
        grid = TimeGrid.build(1.0, 10, 1.0)
        traj = candidate_control("linear", grid, 1.0)
        np.testing.assert_allclose(traj.x_values[0], 1.0 - grid.nodes)
        np.testing.assert_allclose(traj.rate_values[0], -1.0)

    def test_power_one_equals_linear(self):
        grid = TimeGrid.build(1.0, 10, 1.0)
        a = candidate_control("power", grid, 1.0, alpha=1.0)
        b = candidate_control("linear", grid, 1.0)
        np.testing.assert_allclose(a.x_values, b.x_values)
        np.testing.assert_allclose(a.rate_values, b.rate_values)

    def test_power_half_value(self):
        grid = TimeGrid.build(1.0, 4, 1.0)
        traj = candidate_control("power", grid, 1.0, alpha=0.5)
        assert math.isclose(traj.x_values[0, 3], 0.5)  # t = 0.75

    def test_rejects_bad_alpha(self):
        grid = TimeGrid.build(1.0, 4, 1.0)
        with pytest.raises(ArgumentError):
            candidate_control("power", grid, 1.0, alpha=0.0)

    def test_rate_table_closes_position(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        traj = candidate_control(
            "deterministic_rate", grid, 2.0, rate_table=((0.0, 1.0), (1.0, 3.0))
        )
        assert traj.x_values[0, 0] == 2.0
        assert abs(traj.x_values[0, -1]) < 1e-14
        assert np.all(np.diff(traj.x_values[0]) <= 0)


class TestCost:
    def test_sqrt_family_quadrature_cost(self):
        impact = PowerSingularImpact(0.5, 1.0)
        grid = TimeGrid.build(1.0, 4000, 2.0)
        ens = sample_paths(impact, ZERO, grid, seed=0, n_paths=1)
        traj = integrate_control(closed_form_y(impact, P2, 1.0), ens, P2, xi=1.0)
        rep = cost(traj, ens, ZERO, P2)
        assert rep.std_error == 0.0
        assert abs(rep.estimate - 0.5) <= 1e-6

    def test_linear_closure_unit_cost(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        rep = cost(candidate_control("linear", grid, 1.0), unit_ensemble(grid), ZERO, P2)
        assert math.isclose(rep.estimate, 1.0, rel_tol=1e-12)

    def test_null_position(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        rep = cost(candidate_control("linear", grid, 0.0), unit_ensemble(grid), ZERO, P2)
        assert rep.estimate == 0.0

    def test_ci_and_decomposition_identities(self):
        gbm = GBMImpact(1.0, 1.0, 0.5)
        grid = TimeGrid.build(1.0, 200, 1.0)
        ens = sample_paths(gbm, ConstantRisk(0.5), grid, seed=2, n_paths=2000)
        rep = cost(candidate_control("linear", grid, 1.0), ens, ConstantRisk(0.5), P2)
        assert rep.ci95_lo == rep.estimate - 1.959964 * rep.std_error
        assert rep.ci95_hi == rep.estimate + 1.959964 * rep.std_error
        total = sum(rep.terms.values())
        assert abs(total - rep.estimate) <= 1e-12 * abs(rep.estimate)

    @given(st.floats(min_value=0.1, max_value=4.0))
    @settings(max_examples=25, deadline=None)
    def test_homogeneity(self, xi):
        gbm = GBMImpact(1.0, 0.5, 0.4)
        grid = TimeGrid.build(1.0, 50, 1.0)
        ens = sample_paths(gbm, ZERO, grid, seed=4, n_paths=200)
        base = cost(candidate_control("power", grid, 1.0, alpha=2.0), ens, ZERO, P2)
        scaled = cost(candidate_control("power", grid, xi, alpha=2.0), ens, ZERO, P2)
        assert math.isclose(scaled.estimate, xi ** P2.p * base.estimate, rel_tol=1e-12)


class TestPenalizedCost:
    def test_no_trade_pays_terminal_penalty(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        fld = YField(grid=grid, y_values=np.zeros(101), terminal_level=0.0)
        traj = integrate_control(fld, unit_ensemble(grid), P2, xi=1.0)
        rep = penalized_cost(traj, unit_ensemble(grid), ZERO, P2, L=10.0)
        assert rep.estimate == 10.0
        assert rep.terms == {"trading": 0.0, "risk": 0.0, "terminal": 10.0}

    def test_penalized_optimum_attains_field_value(self):
        grid = TimeGrid.build(1.0, 4000, 1.0)
        params = PenalizedParams(L=10.0)
        fld = solve_penalized_deterministic(UNIT, ZERO, P2, grid, params)
        ens = unit_ensemble(grid)
        traj = integrate_control(fld, ens, P2, xi=1.0)
        rep = penalized_cost(traj, ens, ZERO, P2, L=10.0)
        assert abs(rep.estimate - 10.0 / 11.0) <= 1e-6

    def test_risk_cutoff_in_decomposition(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        risk = ConstantRisk(20.0)
        ens = sample_paths(UNIT, risk, grid, seed=0, n_paths=1)
        fld = YField(grid=grid, y_values=np.zeros(101), terminal_level=0.0)
        traj = integrate_control(fld, ens, P2, xi=1.0)
        rep = penalized_cost(traj, ens, risk, P2, L=10.0)
        assert math.isclose(rep.terms["risk"], 10.0, rel_tol=1e-12)
        assert math.isclose(rep.terms["terminal"], 10.0, rel_tol=1e-12)


class TestValueIdentity:
    def test_sqrt_family(self):
        impact = PowerSingularImpact(0.5, 1.0)
        grid = TimeGrid.build(1.0, 4000, 2.0)
        ens = sample_paths(impact, ZERO, grid, seed=0, n_paths=1)
        traj = integrate_control(closed_form_y(impact, P2, 1.0), ens, P2, xi=1.0)
        rep = cost(traj, ens, ZERO, P2)
        out = value_identity_check(impact, P2, 1.0, 0.5, rep, abs_tol=2e-4)
        assert out.passed and out.normalized_gap <= 1.0

    def test_position_scaling(self):
        impact = PowerSingularImpact(0.5, 1.0)
        grid = TimeGrid.build(1.0, 4000, 2.0)
        ens = sample_paths(impact, ZERO, grid, seed=0, n_paths=1)
        traj = integrate_control(closed_form_y(impact, P2, 1.0), ens, P2, xi=2.0)
        rep = cost(traj, ens, ZERO, P2)
        out = value_identity_check(impact, P2, 2.0, 0.5, rep, abs_tol=1e-3)
        assert out.predicted == 2.0
        assert out.passed

    def test_gbm_monte_carlo(self):
        gbm = GBMImpact(1.0, 1.0, 0.5)
        grid = TimeGrid.build(1.0, 500, 1.0)
        ens = sample_paths(gbm, ZERO, grid, seed=9, n_paths=8000)
        traj = integrate_control(closed_form_y(gbm, P2, 1.0), ens, P2, xi=1.0)
        rep = cost(traj, ens, ZERO, P2)
        y0 = 1.0 / (1.0 - math.exp(-1.0))
        out = value_identity_check(gbm, P2, 1.0, y0, rep)
        assert rep.std_error > 0
        assert out.passed


class TestMonotoneEnvelope:
    def _traj(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        grid = TimeGrid.build(1.0, rows.shape[1] - 1, 1.0)
        rates = np.gradient(rows, grid.nodes, axis=1)
        return ControlTrajectory(
            grid=grid,
            initial_position=float(rows[0, 0]),
            x_values=rows,
            rate_values=rates,
            singular=False,
        )

    def test_running_minimum(self):
        env = monotone_envelope(self._traj([1.0, 0.5, 0.8, 0.0]))
        np.testing.assert_allclose(env.x_values[0], [1.0, 0.5, 0.5, 0.0])

    def test_fixed_point(self):
        traj = self._traj([1.0, 0.7, 0.3, 0.0])
        env = monotone_envelope(traj)
        np.testing.assert_allclose(env.x_values, traj.x_values)
        np.testing.assert_allclose(env.rate_values, traj.rate_values)

    def test_negative_dip_clipped(self):
        env = monotone_envelope(self._traj([1.0, -0.2, 0.1, 0.0]))
        np.testing.assert_allclose(env.x_values[0], [1.0, 0.0, 0.0, 0.0])

    @given(
        st.lists(st.floats(min_value=-0.5, max_value=2.0), min_size=3, max_size=12),
    )
    @settings(max_examples=100)
    def test_never_costs_more(self, interior):
        rows = np.array([[1.0] + interior + [0.0]])
        traj = self._traj(rows)
        env = monotone_envelope(traj)
        assert np.all(env.x_values <= np.maximum(traj.x_values, 0.0) + 1e-15)
        assert np.all(np.abs(env.rate_values) <= np.abs(traj.rate_values) + 1e-15)
        assert np.all(np.diff(env.x_values[0]) <= 1e-15)

    def test_envelope_cost_improvement_pathwise(self):
        rng = np.random.default_rng(3)
        grid = TimeGrid.build(1.0, 30, 1.0)
        ens = sample_paths(GBMImpact(1.0, 0.5, 0.5), ConstantRisk(1.0), grid, seed=1, n_paths=50)
        wiggly = np.concatenate(
            [np.ones((50, 1)), rng.uniform(-0.3, 1.2, size=(50, 29)), np.zeros((50, 1))], axis=1
        )
        rates = np.gradient(wiggly, grid.nodes, axis=1)
        traj = ControlTrajectory(
            grid=grid, initial_position=1.0, x_values=wiggly, rate_values=rates, singular=False
        )
        env = monotone_envelope(traj)
        t0, r0, p0 = _pathwise_terms(traj, ens, P2, risk_cap=5.0, terminal_level=5.0)
        t1, r1, p1 = _pathwise_terms(env, ens, P2, risk_cap=5.0, terminal_level=5.0)
        assert np.all(t1 + r1 + p1 <= t0 + r0 + p0 + 1e-12)


class TestMaximumPrinciple:
    def test_deterministic_optimum_is_exactly_flat(self):
        impact = PowerSingularImpact(0.5, 1.0)
        grid = TimeGrid.build(1.0, 1000, 2.0)
        ens = sample_paths(impact, ZERO, grid, seed=0, n_paths=32)
        traj = integrate_control(closed_form_y(impact, P2, 1.0), ens, P2, xi=1.0)
        diag = maximum_principle_diag(traj, ens, ZERO, P2, (0.25, 0.5, 0.75))
        assert diag.passed
        assert max(diag.flatness_stats) == 0.0

    def test_martingale_linear_closure_passes(self):
        gbm = GBMImpact(1.0, 0.0, 0.5)
        grid = TimeGrid.build(1.0, 200, 1.0)
        ens = sample_paths(gbm, ZERO, grid, seed=23, n_paths=10_000)
        traj = candidate_control("linear", grid, 1.0)
        diag = maximum_principle_diag(traj, ens, ZERO, P2, (0.25, 0.5, 0.75))
        assert diag.passed

    def test_drifting_impact_fails_linear_closure(self):
        gbm = GBMImpact(1.0, 1.0, 0.5)
        grid = TimeGrid.build(1.0, 200, 1.0)
        ens = sample_paths(gbm, ZERO, grid, seed=29, n_paths=10_000)
        traj = candidate_control("linear", grid, 1.0)
        diag = maximum_principle_diag(traj, ens, ZERO, P2, (0.25, 0.5, 0.75))
        assert not diag.passed
        assert max(diag.flatness_stats) > 8.0

    def test_checkpoint_validation(self):
        grid = TimeGrid.build(1.0, 100, 1.0)
        traj = candidate_control("linear", grid, 1.0)
        ens = unit_ensemble(grid, n_paths=32)
        with pytest.raises(ArgumentError):
            maximum_principle_diag(traj, ens, ZERO, P2, (0.5, 1.5))
        with pytest.raises(ArgumentError):
            maximum_principle_diag(traj, ens, ZERO, P2, (0.5,))


class TestTournament:
    def test_sqrt_family_beats_linear(self):
        impact = PowerSingularImpact(0.5, 1.0)
        grid = TimeGrid.build(1.0, 4000, 2.0)
        ens = sample_paths(impact, ZERO, grid, seed=0, n_paths=1)
        optimal = integrate_control(closed_form_y(impact, P2, 1.0), ens, P2, xi=1.0)
        report = optimality_tournament(
            P2, 1.0, optimal, {"linear": candidate_control("linear", grid, 1.0)}, ens, ZERO
        )
        assert report.passed
        # deterministic gap: 2/3 - 1/2 up to grid error
        assert math.isclose(report.entries[0].gap, 2.0 / 3.0 - 0.5, abs_tol=1e-3)

    def test_martingale_linear_beats_power_closures(self):
        gbm = GBMImpact(1.0, 0.0, 0.5)
        grid = TimeGrid.build(1.0, 500, 1.0)
        ens = sample_paths(gbm, ZERO, grid, seed=31, n_paths=4000)
        optimal = candidate_control("linear", grid, 1.0)
        report = optimality_tournament(
            P2,
            1.0,
            optimal,
            {
                "power_0.5": candidate_control("power", grid, 1.0, alpha=0.5),
                "power_2": candidate_control("power", grid, 1.0, alpha=2.0),
            },
            ens,
            ZERO,
        )
        assert report.passed
        assert report.n_significantly_worse == 2

    def test_self_comparison_is_zero(self):
        grid = TimeGrid.build(1.0, 200, 1.0)
        ens = sample_paths(GBMImpact(1.0, 1.0, 0.5), ZERO, grid, seed=37, n_paths=500)
        optimal = integrate_control(
            closed_form_y(GBMImpact(1.0, 1.0, 0.5), P2, 1.0), ens, P2, xi=1.0
        )
        report = optimality_tournament(P2, 1.0, optimal, {"self": optimal}, ens, ZERO)
        assert report.entries[0].gap == 0.0
        assert report.passed


class TestTerminalApproach:
    def test_closed_form_schedules_vanish_at_horizon(self):
        for impact in (UNIT, PowerSingularImpact(0.5, 1.0), GBMImpact(1.0, 1.0, 0.5)):
            x_fn, _ = schedule_functions(impact, P2, 1.0)
            values = [x_fn(1.0 - 10.0 ** -k) for k in range(2, 7)]
            assert all(b < a for a, b in zip(values, values[1:]))
            assert values[-1] < 1e-4
