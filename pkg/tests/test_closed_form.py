"""Explicit solution fields, schedules and the no-optimizer counterexample."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from optliq import (
    ArgumentError,
    ConstantImpact,
    DomainError,
    GBMImpact,
    PowerPair,
    PowerSingularImpact,
    TableImpact,
    UnsupportedModelError,
    closed_form_y,
    counterexample_cost,
    counterexample_cost_quadrature,
    x_deterministic,
    x_uncorrelated,
    y_deterministic,
    y_gbm,
    y_martingale,
    y_uncorrelated,
)
from optliq.closed_form import y_gbm_alt_prefactor
from optliq.model import BrownianSquareImpact

P2 = PowerPair.from_p(2.0)
P3 = PowerPair.from_p(3.0)
GBM = GBMImpact(eta0=1.0, mu=1.0, sigma=0.5)


def quad(f, a, b):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


class TestDeterministicField:
    def test_sqrt_singular_impact(self):
        # int_0^1 (1-s)^(-1/2) ds = 2, frozen via the quadrature oracle
        imp = PowerSingularImpact(0.5, horizon=1.0)
        oracle = 1.0 / quad(lambda s: (1.0 - s) ** -0.5, 0.0, 1.0 - 1e-13)
        assert math.isclose(oracle, 0.5, rel_tol=1e-6)
        assert math.isclose(y_deterministic(imp, P2, 1.0, 0.0), 0.5, rel_tol=1e-10)

    def test_unit_impact_midpoint(self):
        assert math.isclose(y_deterministic(ConstantImpact(1.0), P2, 1.0, 0.5), 2.0, rel_tol=1e-12)

    def test_cubic_exponent(self):
        assert math.isclose(y_deterministic(ConstantImpact(1.0), P3, 1.0, 0.0), 1.0, rel_tol=1e-12)

    def test_rejects_horizon(self):
        with pytest.raises(DomainError):
            y_deterministic(ConstantImpact(1.0), P2, 1.0, 1.0)

    def test_schedule_sqrt_family(self):
        imp = PowerSingularImpact(0.5, horizon=1.0)
        for t in (0.0, 0.3, 0.9):
            assert math.isclose(x_deterministic(imp, P2, 1.0, t), (1.0 - t) ** 0.5, rel_tol=1e-10)

    def test_schedule_constant_is_linear(self):
        for t in (0.0, 0.25, 0.99):
            assert math.isclose(
                x_deterministic(ConstantImpact(2.0), P2, 1.0, t), 1.0 - t, rel_tol=1e-12
            )

    def test_schedule_terminal_zero(self):
        assert x_deterministic(PowerSingularImpact(0.5, 1.0), P2, 1.0, 1.0) == 0.0


class TestMartingaleField:
    def test_values(self):
        assert y_martingale(1.0, P2, 1.0, 0.0) == 1.0
        assert y_martingale(1.0, P2, 1.0, 0.5) == 2.0
        assert y_martingale(3.0, P3, 2.0, 1.0) == 3.0

    def test_rejects_horizon(self):
        with pytest.raises(DomainError):
            y_martingale(1.0, P2, 1.0, 1.0)


class TestUMIField:
    def test_gbm_value_at_zero(self):
        # oracle: quadrature of int_0^1 exp(-s) ds
        oracle = 1.0 / quad(lambda s: math.exp(-s), 0.0, 1.0)
        assert math.isclose(oracle, 1.0 / (1.0 - math.exp(-1.0)), rel_tol=1e-12)
        assert math.isclose(y_uncorrelated(GBM, P2, 1.0, 0.0, 1.0), oracle, rel_tol=1e-10)

    def test_driftless_gbm_matches_martingale(self):
        imp = GBMImpact(1.0, 0.0, 0.8)
        rng = np.random.default_rng(0)
        for _ in range(20):
            t = rng.uniform(0.0, 0.95)
            eta = math.exp(rng.normal(scale=0.4))
            assert math.isclose(
                y_uncorrelated(imp, P2, 1.0, t, eta),
                y_martingale(eta, P2, 1.0, t),
                rel_tol=1e-12,
            )

    def test_constant_matches_deterministic(self):
        imp = ConstantImpact(1.7)
        for t in (0.0, 0.4, 0.9):
            assert math.isclose(
                y_uncorrelated(imp, P2, 1.0, t, 1.7),
                y_deterministic(imp, P2, 1.0, t),
                rel_tol=1e-10,
            )

    def test_counter_model_rejected(self):
        with pytest.raises(UnsupportedModelError):
            y_uncorrelated(BrownianSquareImpact(), P2, 1.0, 0.5, 1.0)

    def test_gbm_schedule_midpoint(self):
        # oracle: quadrature ratio; equals (e^-0.5 - e^-1)/(1 - e^-1)
        oracle = quad(lambda s: math.exp(-s), 0.5, 1.0) / quad(lambda s: math.exp(-s), 0.0, 1.0)
        assert math.isclose(oracle, 0.377541, abs_tol=5e-7)
        assert math.isclose(x_uncorrelated(GBM, P2, 1.0, 0.5), oracle, rel_tol=1e-10)

    def test_driftless_schedule_is_linear(self):
        imp = GBMImpact(1.0, 0.0, 0.5)
        for t in (0.1, 0.6):
            assert math.isclose(x_uncorrelated(imp, P2, 1.0, t), 1.0 - t, rel_tol=1e-12)

    def test_schedule_starts_at_one(self):
        assert math.isclose(x_uncorrelated(GBM, P2, 1.0, 0.0), 1.0, rel_tol=1e-12)


class TestGBMField:
    def test_matches_umi_form(self):
        assert math.isclose(
            y_gbm(GBM, P2, 1.0, 0.0, 1.0), y_uncorrelated(GBM, P2, 1.0, 0.0, 1.0), rel_tol=1e-12
        )

    def test_p2_prefactor_collapse(self):
        # at p = 2 the grouped prefactor equals mu itself
        t, eta = 0.3, 1.4
        z = GBM.mu * (P2.q - 1.0) * (1.0 - t)
        manual = GBM.mu * eta / (1.0 - math.exp(-z))
        assert math.isclose(y_gbm(GBM, P2, 1.0, t, eta), manual, rel_tol=1e-12)

    def test_small_drift_matches_martingale(self):
        imp = GBMImpact(1.0, 1e-8, 0.5)
        got = y_gbm(imp, P2, 1.0, 0.25, 1.3)
        assert math.isclose(got, y_martingale(1.3, P2, 1.0, 0.25), rel_tol=1e-6)

    def test_zero_drift_is_martingale_variant(self):
        imp = GBMImpact(1.0, 0.0, 0.5)
        assert y_gbm(imp, P2, 1.0, 0.5, 2.0) == y_martingale(2.0, P2, 1.0, 0.5)
        assert closed_form_y(imp, P2, 1.0).family == "martingale"

    def test_grouped_prefactor_agrees_with_quadrature_at_p3(self):
        # the quadrature oracle decides the parenthesisation for p != 2;
        # mu must differ from 1 or mu^(p-1) collapses onto mu
        imp = GBMImpact(1.0, 2.0, 0.5)
        integral = quad(lambda s: math.exp(-imp.mu * (P3.q - 1.0) * s), 0.0, 1.0)
        oracle = integral ** (-(P3.p - 1.0))
        grouped = y_gbm(imp, P3, 1.0, 0.0, 1.0)
        ungrouped = y_gbm_alt_prefactor(imp, P3, 1.0, 0.0, 1.0)
        assert math.isclose(grouped, oracle, rel_tol=1e-10)
        assert abs(ungrouped - oracle) > 1e-3 * oracle

    def test_negative_drift(self):
        imp = GBMImpact(1.0, -1.0, 0.5)
        got = y_gbm(imp, P2, 1.0, 0.0, 1.0)
        oracle = 1.0 / quad(lambda s: math.exp(s), 0.0, 1.0)
        assert math.isclose(got, oracle, rel_tol=1e-10)


class TestFamilyConsistency:
    def test_hundred_random_samples(self):
        rng = np.random.default_rng(42)
        const = ConstantImpact(1.3)
        flat = GBMImpact(1.3, 0.0, 0.6)
        for _ in range(100):
            t = rng.uniform(0.0, 0.99)
            eta = 1.3 * math.exp(rng.normal(scale=0.3))
            ym = y_martingale(eta, P2, 1.0, t)
            assert math.isclose(y_uncorrelated(flat, P2, 1.0, t, eta), ym, rel_tol=1e-10)
            yd = y_deterministic(const, P2, 1.0, t)
            assert math.isclose(y_uncorrelated(const, P2, 1.0, t, 1.3), yd, rel_tol=1e-10)

    def test_divergence_toward_horizon(self):
        fields = [
            closed_form_y(ConstantImpact(1.0), P2, 1.0),
            closed_form_y(PowerSingularImpact(0.5, 1.0), P2, 1.0),
            closed_form_y(GBM, P2, 1.0),
            closed_form_y(GBMImpact(1.0, 0.0, 0.5), P2, 1.0),
        ]
        for cf in fields:
            values = [cf.evaluate(1.0 - 10.0 ** -k, 1.0) for k in range(2, 9)]
            assert all(b > a for a, b in zip(values, values[1:]))

    def test_schedules_bracketed_and_nonincreasing(self):
        grid = np.linspace(0.0, 1.0, 101)
        for imp in (ConstantImpact(2.0), PowerSingularImpact(0.5, 1.0), GBM):
            xs = np.array([x_uncorrelated(imp, P2, 1.0, t) for t in grid])
            assert np.all(xs >= -1e-15) and np.all(xs <= 1.0 + 1e-12)
            assert np.all(np.diff(xs) <= 1e-15)

    @given(st.floats(min_value=0.1, max_value=10.0), st.floats(min_value=0.0, max_value=0.95))
    @settings(max_examples=50)
    def test_scaling_covariance(self, c, t):
        base = TableImpact((0.0, 0.5, 1.0), (1.0, 2.0, 1.5))
        scaled = TableImpact((0.0, 0.5, 1.0), (c, 2.0 * c, 1.5 * c))
        assert math.isclose(
            y_deterministic(scaled, P2, 1.0, t), c * y_deterministic(base, P2, 1.0, t), rel_tol=1e-10
        )
        assert math.isclose(
            x_deterministic(scaled, P2, 1.0, t), x_deterministic(base, P2, 1.0, t), rel_tol=1e-10
        )


class TestCounterexample:
    def test_reference_values(self):
        assert counterexample_cost(1.0, 1.0) == 0.5
        assert counterexample_cost(0.5, 1.0) == 0.25
        assert math.isclose(counterexample_cost(1.0, 2.0), 1.0 / 3.0, rel_tol=1e-15)

    def test_vanishing_infimum(self):
        costs = [counterexample_cost(2.0 ** -k, 1.0) for k in range(0, 12)]
        assert all(b < a for a, b in zip(costs, costs[1:]))
        assert costs[-1] < 1e-3

    @given(st.floats(min_value=1e-3, max_value=1.0))
    @settings(max_examples=50)
    def test_strictly_increasing_in_alpha(self, a):
        assert counterexample_cost(a, 1.0) < counterexample_cost(min(a * 1.5, 1.5), 1.0)

    def test_quadrature_matches_formula(self):
        for beta in (1.0, 2.0):
            for alpha in (1.0, 0.5, 0.1, 0.01):
                assert math.isclose(
                    counterexample_cost_quadrature(alpha, beta),
                    counterexample_cost(alpha, beta),
                    abs_tol=1e-9,
                )

    def test_rejects_bad_arguments(self):
        with pytest.raises(ArgumentError):
            counterexample_cost(0.0, 1.0)
        with pytest.raises(ArgumentError):
            counterexample_cost(1.0, 0.5)
