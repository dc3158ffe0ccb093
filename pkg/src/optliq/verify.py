"""Cross-checks among closed forms, solvers, Monte Carlo costs and proven bounds.

Every check emits a :class:`VerificationReport` whose records carry the
expected value, the observed value, the tolerance actually enforced and a
provenance string naming the oracle (Riccati recursion, quadrature of an
explicit formula, conditional-moment identity, paired Monte Carlo, ...), so a
failure is always attributable.

Statistical checks use fixed seeds and pre-registered sample sizes; the pass
thresholds (3 standard errors for estimates, 4 for martingale diagnostics,
with known-suboptimal controls required to exceed 8) are module constants,
not configuration.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import bsde, closed_form, control
from .errors import ArgumentError, OptliqError
from .model import (
    BrownianSquareImpact,
    ConstantImpact,
    GBMImpact,
    ImpactModel,
    PathEnsemble,
    PowerPair,
    PowerSingularImpact,
    RiskModel,
    TimeGrid,
    ZeroRisk,
    expected_impact,
    is_deterministic_impact,
    sample_paths,
    validate_integrability,
)
from .regression import flatness_statistic

SE_MULTIPLE = 3.0          # estimate comparisons
DIAG_THRESHOLD = 4.0       # martingale diagnostics must stay below this
FAIL_THRESHOLD = 8.0       # known-suboptimal controls must exceed this


@dataclass(frozen=True)
class CheckRecord:
    name: str
    expected: object
    observed: object
    tol: object
    passed: bool
    oracle: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "expected": self.expected,
            "observed": self.observed,
            "tol": self.tol,
            "pass": self.passed,
            "oracle": self.oracle,
        }


@dataclass
class VerificationReport:
    suite: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "checks": [c.to_dict() for c in self.checks],
            "pass": self.passed,
            "seconds": self.seconds,
        }


def _rec(name, expected, observed, tol, oracle, passed=None) -> CheckRecord:
    if passed is None:
        passed = abs(observed - expected) <= tol
    return CheckRecord(
        name=name, expected=expected, observed=observed, tol=tol, passed=bool(passed), oracle=oracle
    )


def _timed(suite: str, fill: Callable[[VerificationReport], None]) -> VerificationReport:
    report = VerificationReport(suite=suite)
    start = time.perf_counter()
    try:
        fill(report)
    except OptliqError as exc:
        report.checks.append(
            CheckRecord(
                name=f"{suite}.error",
                expected="completes",
                observed=f"{type(exc).__name__}: {exc}",
                tol=None,
                passed=False,
                oracle="execution",
            )
        )
    report.seconds = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# Model-facing suites
# ---------------------------------------------------------------------------


def cross_check(
    impact: ImpactModel,
    risk: RiskModel,
    pq: PowerPair,
    T: float,
    seed: int = 0,
    solver_nodes: int = 8000,
    cluster: float = 2.0,
    levels=(1e3, 1e5, 1e7),
    mc_paths: int = 10_000,
    mc_nodes: int = 250,
    mc_level: float = 1e4,
    mc_replicates: int = 3,
) -> VerificationReport:
    """Closed-form field vs penalty-limit solver on a five-point time lattice.

    Deterministic families are compared at relative tolerance 1e-5 (the limit
    solver integrates the separable power term exactly, so the residual is the
    finite-penalty truncation).  GBM compares its two independent closed forms
    at 1e-10 and the regression solver within 3 replicate standard errors.
    Models outside the integrable regime report the classification instead.
    """

    def fill(report: VerificationReport):
        gate = validate_integrability(impact, risk, pq, T)
        if not gate.passed:
            report.checks.append(
                CheckRecord(
                    name="integrability_gate",
                    expected="integrable",
                    observed="no minimal solution regime",
                    tol=None,
                    passed=True,
                    oracle="inverse-impact integrability criterion",
                )
            )
            return
        report.checks.append(
            CheckRecord(
                name="integrability_gate",
                expected="integrable",
                observed="integrable",
                tol=None,
                passed=True,
                oracle="inverse-impact integrability criterion",
            )
        )

        lattice = [0.0, 0.25 * T, 0.5 * T, 0.75 * T, 0.95 * T]
        if is_deterministic_impact(impact):
            grid = TimeGrid.build(T, solver_nodes, cluster)
            schedule = bsde.LSchedule(levels=levels, stop_tol=1e-12)
            result = bsde.l_schedule_limit(
                impact,
                risk,
                pq,
                grid,
                schedule,
                lambda L: bsde.solve_penalized_deterministic(
                    impact, risk, pq, grid, bsde.PenalizedParams(L=L)
                ),
            )
            for t in lattice:
                k = int(np.argmin(np.abs(grid.nodes[:-1] - t)))
                t_node = grid.nodes[k]
                expected = closed_form.y_deterministic(impact, pq, T, t_node)
                observed = float(result.field.y_values[k])
                report.checks.append(
                    _rec(
                        f"limit_vs_closed_form@t={t_node:.4g}",
                        expected,
                        observed,
                        1e-5 * abs(expected),
                        "deterministic-impact formula by quadrature",
                    )
                )
            return

        if isinstance(impact, GBMImpact):
            rng = np.random.default_rng(seed)
            for t in lattice:
                eta_t = expected_impact(impact, t) * math.exp(0.3 * rng.standard_normal())
                a = closed_form.y_gbm(impact, pq, T, t, eta_t)
                b = closed_form.y_uncorrelated(impact, pq, T, t, eta_t)
                report.checks.append(
                    _rec(
                        f"gbm_vs_umi@t={t:.4g}",
                        b,
                        a,
                        1e-10 * abs(b),
                        "two independent closed forms",
                    )
                )
            if pq.p != 2.0 and impact.mu > 0:
                main = closed_form.y_gbm(impact, pq, T, 0.0, impact.eta0)
                alt = closed_form.y_gbm_alt_prefactor(impact, pq, T, 0.0, impact.eta0)
                report.checks.append(
                    CheckRecord(
                        name="gbm_prefactor_readings",
                        expected=main,
                        observed=alt,
                        tol=None,
                        passed=True,
                        oracle="informational: grouped vs ungrouped drift prefactor",
                    )
                )

            closed_y0 = closed_form.y_gbm(impact, pq, T, 0.0, impact.eta0)
            grid = TimeGrid.build(T, mc_nodes, cluster)
            vals = []
            for i in range(mc_replicates):
                ensemble = sample_paths(impact, risk, grid, seed + 1000 + i, mc_paths)
                fld = bsde.solve_penalized_mc(
                    impact, risk, pq, ensemble, bsde.PenalizedParams(L=mc_level)
                )
                vals.append(fld.y0)
            mean = float(np.mean(vals))
            se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
            report.checks.append(
                _rec(
                    "mc_solver_y0",
                    closed_y0,
                    mean,
                    SE_MULTIPLE * se,
                    f"closed form vs regression solver, {mc_replicates} replicates",
                )
            )
            return

        raise ArgumentError(
            f"{type(impact).__name__} is outside the closed-form families"
        )

    return _timed("cross_check", fill)


def umi_test(
    ensemble: PathEnsemble,
    impact: ImpactModel,
    checkpoints=None,
) -> VerificationReport:
    """Martingale test of eta_t / E[eta_t] between checkpoints.

    The normalised impact is a martingale exactly for the families with
    uncorrelated multiplicative increments; the flatness statistic is the
    largest coefficient |t| of the increment regressed on the earlier state.
    """
    if ensemble.n_paths < 10_000:
        raise ArgumentError("martingale test needs at least 10^4 paths")
    grid = ensemble.grid
    T = grid.horizon
    if checkpoints is None:
        checkpoints = (0.25 * T, 0.5 * T, 0.75 * T)
    idx = [int(np.argmin(np.abs(grid.nodes - c))) for c in checkpoints]
    if len(set(idx)) != len(idx) or len(idx) < 2:
        raise ArgumentError("need at least two distinct checkpoint nodes")

    def fill(report: VerificationReport):
        m = ensemble.eta_paths / expected_impact(impact, grid.nodes)[None, :]
        for ka, kb in zip(idx[:-1], idx[1:]):
            stat = flatness_statistic(
                ensemble.eta_paths[:, ka], m[:, kb] - m[:, ka], degree=1, log_state=False
            )
            report.checks.append(
                _rec(
                    f"flatness@{grid.nodes[ka]:.3g}->{grid.nodes[kb]:.3g}",
                    0.0,
                    stat,
                    DIAG_THRESHOLD,
                    "normalised-impact martingale increments",
                )
            )

    return _timed("umi_test", fill)


def counterexample_sweep(beta: float, alphas) -> VerificationReport:
    """Vanishing-infimum sweep for eta = (1-t)^beta, beta >= 1, p = 2.

    Each power schedule's quadrature cost must match alpha^2/(2 alpha + beta - 1)
    to 1e-6 and the sequence must decrease strictly toward zero (the cost is
    bounded by alpha/2, so the last record checks J(alpha_min) <= alpha_min).
    """
    if beta < 1:
        raise ArgumentError(
            "sweep inapplicable for beta < 1: an optimal control exists; run cross_check"
        )
    alphas = [float(a) for a in alphas]
    if any(a <= 0 for a in alphas) or any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ArgumentError("alphas must be positive and strictly decreasing")

    def fill(report: VerificationReport):
        costs = []
        for a in alphas:
            formula = closed_form.counterexample_cost(a, beta)
            quad = closed_form.counterexample_cost_quadrature(a, beta)
            costs.append(quad)
            report.checks.append(
                _rec(
                    f"cost@alpha={a:g}",
                    formula,
                    quad,
                    1e-6,
                    "explicit cost of the power schedule vs quadrature",
                )
            )
        decreasing = all(b < a for a, b in zip(costs, costs[1:]))
        report.checks.append(
            CheckRecord(
                name="strictly_decreasing",
                expected=True,
                observed=decreasing,
                tol=None,
                passed=decreasing,
                oracle="cost sequence along alpha -> 0",
            )
        )
        report.checks.append(
            _rec(
                "vanishing_infimum",
                0.0,
                costs[-1],
                alphas[-1],
                "J(alpha) <= alpha/2 bounds the infimum gap",
            )
        )

    return _timed(f"counterexample_beta={beta:g}", fill)


# ---------------------------------------------------------------------------
# Acceptance battery (fixed seeds, pre-registered sizes)
# ---------------------------------------------------------------------------

_P2 = PowerPair.from_p(2.0)
_GBM = GBMImpact(eta0=1.0, mu=1.0, sigma=0.5)
_GBM_FLAT = GBMImpact(eta0=1.0, mu=0.0, sigma=0.5)
_ZERO = ZeroRisk()


def check_riccati_exactness() -> VerificationReport:
    def fill(report):
        grid = TimeGrid.build(1.0, 2000, 1.0)
        impact = ConstantImpact(1.0)
        start = time.perf_counter()
        for L in (1.0, 10.0, 100.0):
            fld = bsde.solve_penalized_deterministic(
                impact, _ZERO, _P2, grid, bsde.PenalizedParams(L=L)
            )
            expected = L / (1.0 + L)
            report.checks.append(
                _rec(
                    f"y0@L={L:g}",
                    expected,
                    fld.y0,
                    1e-6 * expected,
                    "exact Riccati solution L/(1+L(T-t))",
                )
            )
        elapsed = time.perf_counter() - start
        report.checks.append(
            CheckRecord("runtime", "< 1 s", elapsed, 1.0, elapsed < 1.0, "wall clock")
        )

    return _timed("acceptance_01_riccati_exactness", fill)


def check_singular_limit() -> VerificationReport:
    def fill(report):
        grid = TimeGrid.build(1.0, 2000, 1.0)
        impact = ConstantImpact(1.0)
        schedule = bsde.LSchedule(levels=(1e1, 1e2, 1e3, 1e4, 1e5), stop_tol=1e-9)
        start = time.perf_counter()
        result = bsde.l_schedule_limit(
            impact,
            _ZERO,
            _P2,
            grid,
            schedule,
            lambda L: bsde.solve_penalized_deterministic(
                impact, _ZERO, _P2, grid, bsde.PenalizedParams(L=L)
            ),
        )
        elapsed = time.perf_counter() - start
        trace = np.asarray(result.y0_trace)
        monotone = bool(np.all(np.diff(trace) >= 0))
        report.checks.append(
            CheckRecord(
                "monotone_trace", True, monotone, None, monotone, "comparison in the penalty level"
            )
        )
        report.checks.append(
            _rec("limit_y0", 1.0, float(trace[-1]), 1e-3, "martingale-case field at constant impact")
        )
        report.checks.append(
            CheckRecord("runtime", "< 5 s", elapsed, 5.0, elapsed < 5.0, "wall clock")
        )

    return _timed("acceptance_02_singular_limit", fill)


def check_deterministic_closed_form() -> VerificationReport:
    def fill(report):
        T = 1.0
        impact = PowerSingularImpact(beta=0.5, horizon=T)
        grid = TimeGrid.build(T, 4000, 2.0)
        schedule = bsde.LSchedule(levels=(1e2, 1e4, 1e6), stop_tol=1e-12)
        result = bsde.l_schedule_limit(
            impact,
            _ZERO,
            _P2,
            grid,
            schedule,
            lambda L: bsde.solve_penalized_deterministic(
                impact, _ZERO, _P2, grid, bsde.PenalizedParams(L=L)
            ),
        )
        report.checks.append(
            _rec("limit_y0", 0.5, result.y0_trace[-1], 1e-4, "inverse-impact integral quadrature")
        )

        ensemble = sample_paths(impact, _ZERO, grid, seed=0, n_paths=1)
        cf = closed_form.closed_form_y(impact, _P2, T)
        traj = control.integrate_control(cf, ensemble, _P2, xi=1.0)
        target = np.sqrt(np.maximum(1.0 - grid.nodes, 0.0))
        sup_err = float(np.max(np.abs(traj.x_values[0] - target)))
        report.checks.append(
            _rec("schedule_sup_error", 0.0, sup_err, 1e-4, "explicit schedule (1-t)^(1-beta)")
        )

        rep = control.cost(traj, ensemble, _ZERO, _P2)
        report.checks.append(
            _rec("quadrature_cost", 0.5, rep.estimate, 1e-6, "quadrature of the explicit cost density")
        )

        identity = control.value_identity_check(
            impact, _P2, 1.0, result.y0_trace[-1], rep, abs_tol=2e-4
        )
        report.checks.append(
            _rec(
                "value_identity_gap",
                0.0,
                identity.gap,
                identity.tolerance,
                "cost vs Y_0 |xi|^p",
            )
        )

    return _timed("acceptance_03_deterministic_closed_form", fill)


def check_gbm_value_identity() -> VerificationReport:
    def fill(report):
        T = 1.0
        start = time.perf_counter()
        lam = _P2.q - 1.0
        quad_val, _ = integrate.quad(
            lambda s: math.exp(-lam * _GBM.mu * s), 0.0, T, epsabs=1e-14, epsrel=1e-12
        )
        oracle_y0 = quad_val ** (-(_P2.p - 1.0))
        closed_y0 = closed_form.y_gbm(_GBM, _P2, T, 0.0, _GBM.eta0)
        report.checks.append(
            _rec("closed_form_y0", oracle_y0, closed_y0, 1e-10, "quadrature of the mean-impact integral")
        )

        grid = TimeGrid.build(T, 1000, 1.0)
        ensemble = sample_paths(_GBM, _ZERO, grid, seed=11, n_paths=10_000)
        cf = closed_form.closed_form_y(_GBM, _P2, T)
        traj = control.integrate_control(cf, ensemble, _P2, xi=1.0)
        rep = control.cost(traj, ensemble, _ZERO, _P2)
        report.checks.append(
            _rec(
                "mc_cost_vs_y0",
                closed_y0,
                rep.estimate,
                SE_MULTIPLE * rep.std_error,
                "paired Monte Carlo cost of the closed-form control",
            )
        )
        elapsed = time.perf_counter() - start
        report.checks.append(
            CheckRecord("runtime", "< 60 s", elapsed, 60.0, elapsed < 60.0, "wall clock")
        )

    return _timed("acceptance_04_gbm_value_identity", fill)


def check_mc_solver_consistency() -> VerificationReport:
    def fill(report):
        T = 1.0
        closed_y0 = closed_form.y_gbm(_GBM, _P2, T, 0.0, _GBM.eta0)
        grid = TimeGrid.build(T, 400, 2.0)
        params = bsde.PenalizedParams(L=1e4)
        vals = []
        first = None
        for i in range(5):
            ensemble = sample_paths(_GBM, _ZERO, grid, seed=100 + i, n_paths=10_000)
            fld = bsde.solve_penalized_mc(_GBM, _ZERO, _P2, ensemble, params, basis_degree=3)
            vals.append(fld.y0)
            if first is None:
                first = (fld, ensemble)
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        tol = max(SE_MULTIPLE * se, 0.02 * closed_y0)
        report.checks.append(
            _rec("mc_y0", closed_y0, mean, tol, "closed-form field, 5 solver replicates")
        )

        fld, ensemble = first
        n = grid.n_intervals
        nodes = [n // 4, n // 2, (3 * n) // 4]
        sandwich = bsde.bounds_sandwich_check(
            fld, _GBM, _ZERO, _P2, params, ensemble=ensemble, node_indices=nodes
        )
        report.checks.append(
            CheckRecord(
                "sandwich_checkpoints",
                True,
                bool(sandwich.passed),
                None,
                sandwich.passed,
                "conditional-moment envelope, paired means within 3 SE",
            )
        )

    return _timed("acceptance_05_mc_solver_consistency", fill)


def check_counterexample() -> VerificationReport:
    def fill(report):
        for beta in (1.0, 2.0):
            sub = counterexample_sweep(beta, (1.0, 0.5, 0.1, 0.01))
            for c in sub.checks:
                report.checks.append(
                    CheckRecord(
                        name=f"beta={beta:g}:{c.name}",
                        expected=c.expected,
                        observed=c.observed,
                        tol=c.tol,
                        passed=c.passed,
                        oracle=c.oracle,
                    )
                )

    return _timed("acceptance_06_counterexample", fill)


def check_l_monotonicity() -> VerificationReport:
    def fill(report):
        rng = np.random.default_rng(7)
        grid = TimeGrid.build(1.0, 500, 1.0)
        impact = ConstantImpact(1.0)
        for i in range(5):
            l1, l2 = np.sort(10.0 ** rng.uniform(0.0, 4.0, size=2))
            if l2 <= l1:
                l2 = l1 * 1.5
            f1 = bsde.solve_penalized_deterministic(
                impact, _ZERO, _P2, grid, bsde.PenalizedParams(L=float(l1))
            )
            f2 = bsde.solve_penalized_deterministic(
                impact, _ZERO, _P2, grid, bsde.PenalizedParams(L=float(l2))
            )
            worst = float(np.min(f2.y_values - f1.y_values))
            report.checks.append(
                _rec(
                    f"deterministic_pair_{i}",
                    0.0,
                    min(worst, 0.0),
                    1e-12,
                    f"comparison of penalty levels {l1:.3g} < {l2:.3g}",
                )
            )

        mc_grid = TimeGrid.build(1.0, 200, 2.0)
        ensemble = sample_paths(_GBM, _ZERO, mc_grid, seed=21, n_paths=4000)
        for i, (l1, l2) in enumerate([(10.0, 100.0), (100.0, 10_000.0)]):
            f1 = bsde.solve_penalized_mc(_GBM, _ZERO, _P2, ensemble, bsde.PenalizedParams(L=l1))
            f2 = bsde.solve_penalized_mc(_GBM, _ZERO, _P2, ensemble, bsde.PenalizedParams(L=l2))
            diff = f2.y_values - f1.y_values
            means = diff.mean(axis=0)
            ses = diff.std(axis=0, ddof=1) / math.sqrt(ensemble.n_paths)
            stat = float(np.min(means + SE_MULTIPLE * ses))
            report.checks.append(
                _rec(
                    f"mc_pair_{i}",
                    0.0,
                    min(stat, 0.0),
                    1e-12,
                    f"paired regression fields at levels {l1:g} < {l2:g}",
                )
            )

    return _timed("acceptance_07_l_monotonicity", fill)


def check_optimality_tournament() -> VerificationReport:
    def fill(report):
        T = 1.0
        grid = TimeGrid.build(T, 1000, 1.0)
        ensemble = sample_paths(_GBM, _ZERO, grid, seed=31, n_paths=10_000)
        cf = closed_form.closed_form_y(_GBM, _P2, T)
        optimal = control.integrate_control(cf, ensemble, _P2, xi=1.0)
        candidates = {
            "power_0.5": control.candidate_control("power", grid, 1.0, alpha=0.5),
            "power_2": control.candidate_control("power", grid, 1.0, alpha=2.0),
            "linear": control.candidate_control("linear", grid, 1.0),
        }
        tour = control.optimality_tournament(_P2, 1.0, optimal, candidates, ensemble, _ZERO)
        for e in tour.entries:
            report.checks.append(
                CheckRecord(
                    name=f"gap:{e.name}",
                    expected=">= -3 SE",
                    observed=e.gap,
                    tol=SE_MULTIPLE * e.std_error,
                    passed=e.not_better,
                    oracle="common-random-numbers paired cost gap",
                )
            )
        enough = tour.n_significantly_worse >= 2
        report.checks.append(
            CheckRecord(
                "separation",
                ">= 2 candidates worse beyond 3 SE",
                tour.n_significantly_worse,
                None,
                enough,
                "paired gap significance count",
            )
        )

    return _timed("acceptance_08_optimality_tournament", fill)


def check_max_principle_separation() -> VerificationReport:
    def fill(report):
        T = 1.0
        cps = (0.25, 0.5, 0.75)

        det_impact = PowerSingularImpact(beta=0.5, horizon=T)
        det_grid = TimeGrid.build(T, 2000, 2.0)
        det_ens = sample_paths(det_impact, _ZERO, det_grid, seed=41, n_paths=64)
        det_traj = control.integrate_control(
            closed_form.closed_form_y(det_impact, _P2, T), det_ens, _P2, xi=1.0
        )
        diag = control.maximum_principle_diag(det_traj, det_ens, _ZERO, _P2, cps)
        report.checks.append(
            _rec(
                "optimal_deterministic",
                0.0,
                max(diag.flatness_stats),
                DIAG_THRESHOLD,
                "constant certificate process p (1-beta)^(p-1)",
            )
        )

        grid = TimeGrid.build(T, 500, 1.0)
        flat_ens = sample_paths(_GBM_FLAT, _ZERO, grid, seed=43, n_paths=10_000)
        linear_flat = control.candidate_control("linear", grid, 1.0)
        diag = control.maximum_principle_diag(linear_flat, flat_ens, _ZERO, _P2, cps)
        report.checks.append(
            _rec(
                "optimal_martingale_linear",
                0.0,
                max(diag.flatness_stats),
                DIAG_THRESHOLD,
                "certificate is a constant multiple of a martingale",
            )
        )

        drift_ens = sample_paths(_GBM, _ZERO, grid, seed=47, n_paths=10_000)
        linear_drift = control.candidate_control("linear", grid, 1.0)
        diag = control.maximum_principle_diag(linear_drift, drift_ens, _ZERO, _P2, cps)
        stat = max(diag.flatness_stats)
        report.checks.append(
            CheckRecord(
                "suboptimal_detected",
                f"> {FAIL_THRESHOLD:g}",
                stat,
                None,
                stat > FAIL_THRESHOLD,
                "drifting certificate of the linear closure",
            )
        )

    return _timed("acceptance_09_max_principle_separation", fill)


def check_umi_classification() -> VerificationReport:
    def fill(report):
        grid = TimeGrid.build(1.0, 200, 1.0)
        for name, impact, seed in (
            ("gbm", _GBM, 51),
            ("constant", ConstantImpact(2.0), 53),
        ):
            ens = sample_paths(impact, _ZERO, grid, seed=seed, n_paths=10_000)
            rep = umi_test(ens, impact, checkpoints=(0.25, 0.5, 0.75))
            worst = max(c.observed for c in rep.checks)
            report.checks.append(
                _rec(
                    f"umi_pass:{name}",
                    0.0,
                    worst,
                    DIAG_THRESHOLD,
                    "normalised-impact martingale increments",
                )
            )
        counter = BrownianSquareImpact()
        ens = sample_paths(counter, _ZERO, grid, seed=59, n_paths=10_000)
        rep = umi_test(ens, counter, checkpoints=(0.25, 0.5))
        worst = max(c.observed for c in rep.checks)
        report.checks.append(
            CheckRecord(
                "umi_fail:brownian_square",
                f"> {FAIL_THRESHOLD:g}",
                worst,
                None,
                worst > FAIL_THRESHOLD,
                "conditional moment (1+W_s^2+(t-s))/(1+t) differs from M_s",
            )
        )

    return _timed("acceptance_10_umi_classification", fill)


def check_convexity() -> VerificationReport:
    def fill(report):
        T = 1.0
        t = np.linspace(0.0, T, 201)
        for mu, side in ((1.0, "convex"), (-1.0, "concave")):
            impact = GBMImpact(eta0=1.0, mu=mu, sigma=0.5)
            x = np.array([closed_form.x_uncorrelated(impact, _P2, T, s) for s in t])
            d2 = np.diff(x, 2)
            worst = float(d2.min()) if mu > 0 else float(-d2.max())
            report.checks.append(
                _rec(
                    f"schedule_{side}",
                    0.0,
                    min(worst, 0.0),
                    1e-10,
                    "second differences of the deterministic schedule",
                )
            )

    return _timed("acceptance_11_convexity", fill)


def check_linear_bsde_oracle() -> VerificationReport:
    def fill(report):
        T = 1.0
        grid = TimeGrid.build(T, 512, 1.0)
        ensemble = sample_paths(ConstantImpact(1.0), _ZERO, grid, seed=61, n_paths=20_000)

        res = bsde.linear_bsde_mc(0.7, 0.0, 2.0, ensemble, alpha_cap=1.0)
        report.checks.append(
            _rec("constant_alpha", 2.0 * math.exp(0.7 * T), res.estimate, 1e-3, "deterministic exponential")
        )
        res = bsde.linear_bsde_mc(0.0, 0.4, 0.0, ensemble, alpha_cap=0.0)
        report.checks.append(
            _rec("constant_beta", 0.4 * T, res.estimate, 1e-3, "elementary integral")
        )
        res = bsde.linear_bsde_mc(-1.0, 1.0, 0.0, ensemble, alpha_cap=0.0)
        report.checks.append(
            _rec("mixed", 1.0 - math.exp(-1.0), res.estimate, 1e-3, "elementary integral")
        )

        w = np.concatenate(
            [
                np.zeros((ensemble.n_paths, 1)),
                np.cumsum(ensemble.brownian_increments, axis=1),
            ],
            axis=1,
        )
        res = bsde.linear_bsde_mc(-(w ** 2), 0.0, 1.0, ensemble, alpha_cap=0.0)
        target = math.cosh(math.sqrt(2.0) * T) ** -0.5
        report.checks.append(
            _rec(
                "stochastic_alpha",
                target,
                res.estimate,
                SE_MULTIPLE * res.std_error,
                "explicit Laplace transform of the integrated squared Brownian path",
            )
        )

    return _timed("acceptance_12_linear_bsde_oracle", fill)


ACCEPTANCE_CHECKS = (
    ("riccati_exactness", check_riccati_exactness),
    ("singular_limit", check_singular_limit),
    ("deterministic_closed_form", check_deterministic_closed_form),
    ("gbm_value_identity", check_gbm_value_identity),
    ("mc_solver_consistency", check_mc_solver_consistency),
    ("counterexample", check_counterexample),
    ("l_monotonicity", check_l_monotonicity),
    ("optimality_tournament", check_optimality_tournament),
    ("max_principle_separation", check_max_principle_separation),
    ("umi_classification", check_umi_classification),
    ("convexity", check_convexity),
    ("linear_bsde_oracle", check_linear_bsde_oracle),
)


def z_growth_informational(seed: int = 71) -> VerificationReport:
    """Empirical growth of int (x^(p-1) Z)^2 dt near the horizon, GBM model.

    The square-integrability of x^(p-1) Z identifies the minimal solution, but
    no quantitative target exists; the ratio of the tail integral to the bulk
    is reported without a gate (the deterministic case, Z = 0, is checked
    exactly elsewhere).
    """

    def fill(report):
        grid = TimeGrid.build(1.0, 200, 2.0)
        ensemble = sample_paths(_GBM_FLAT, _ZERO, grid, seed=seed, n_paths=4000)
        params = bsde.PenalizedParams(L=1e3)
        fld = bsde.solve_penalized_mc(_GBM_FLAT, _ZERO, _P2, ensemble, params)
        fld = bsde.estimate_Z(fld, ensemble)
        traj = control.integrate_control(fld, ensemble, _P2, xi=1.0)
        integrand = (traj.x_values ** (_P2.p - 1.0) * fld.z_estimates) ** 2
        dt = grid.dt
        seg = 0.5 * (integrand[:, :-1] + integrand[:, 1:]) * dt[None, :]
        cum = seg.mean(axis=0).cumsum()
        half = int(np.argmin(np.abs(grid.nodes[:-1] - 0.5)))
        ratio = float(cum[-1] / cum[half]) if cum[half] > 0 else float("inf")
        report.checks.append(
            CheckRecord(
                "tail_to_bulk_ratio",
                None,
                ratio,
                None,
                True,
                "informational: no quantitative target",
            )
        )

    return _timed("z_integrability_informational", fill)


# ---------------------------------------------------------------------------
# Full suite
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    reports: list
    seconds: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def bundle(self) -> dict:
        """Flattened single-suite view: every record prefixed by its suite."""
        checks = []
        for rep in self.reports:
            for c in rep.checks:
                d = c.to_dict()
                d["name"] = f"{rep.suite}.{d['name']}"
                checks.append(d)
        return {
            "suite": "full",
            "checks": checks,
            "pass": self.passed,
            "seconds": self.seconds,
        }


def run_full_suite(
    impact: Optional[ImpactModel] = None,
    risk: Optional[RiskModel] = None,
    pq: Optional[PowerPair] = None,
    T: float = 1.0,
    seed: int = 0,
    paths: int = 10_000,
    threads: int = 1,
) -> SuiteResult:
    """Model-specific checks plus the full acceptance battery.

    The configured model is routed to :func:`cross_check` (and a martingale
    classification) in the integrable regime, or to
    :func:`counterexample_sweep` when the inverse-impact condition fails.
    Independent checks may run concurrently; the report list keeps the
    declared order regardless of completion order.
    """
    impact = impact if impact is not None else _GBM
    risk = risk if risk is not None else _ZERO
    pq = pq if pq is not None else _P2

    jobs: list = []
    gate = validate_integrability(impact, risk, pq, T)
    if not gate.passed and isinstance(impact, PowerSingularImpact):
        jobs.append(lambda: counterexample_sweep(impact.beta, (1.0, 0.5, 0.1, 0.01)))
    else:
        jobs.append(lambda: cross_check(impact, risk, pq, T, seed=seed))
        if not is_deterministic_impact(impact):
            def model_umi():
                grid = TimeGrid.build(T, 200, 1.0)
                ens = sample_paths(impact, risk, grid, seed, max(paths, 10_000))
                return umi_test(ens, impact)

            jobs.append(model_umi)
    for _, fn in ACCEPTANCE_CHECKS:
        jobs.append(fn)
    jobs.append(z_growth_informational)

    start = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(job) for job in jobs]
            reports = [f.result() for f in futures]
    else:
        reports = [job() for job in jobs]
    return SuiteResult(reports=reports, seconds=time.perf_counter() - start)
