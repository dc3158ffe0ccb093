"""Liquidation trajectories, cost functionals and optimality diagnostics.

A solution field Y feeds the position through the feedback relation
xdot = -(Y/eta)^(q-1) x, integrated pathwise in log space with trapezoidal
rate accumulation.  Rates are stored at construction (never recovered by
differencing positions) because the cost integrand raises them to the p-th
power, where differencing noise would dominate.

Singular-limit fields diverge at the horizon, so their trajectories stop the
feedback integral at the penultimate node, set x(T) = 0 exactly, and carry
the penultimate rate into the terminal slot; the cost trapezoid over the last
interval therefore uses the penultimate rate, while trajectories with
analytic rate functions over deterministic models are costed by adaptive
quadrature (exact tail included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .bsde import YField
from .closed_form import ClosedFormY, schedule_functions
from .errors import ArgumentError, CoverageError
from .model import (
    PathEnsemble,
    PowerPair,
    RiskModel,
    TimeGrid,
    impact_value,
    is_deterministic_impact,
    is_umi_impact,
    risk_value,
)
from .regression import flatness_statistic

_CI95 = 1.959964


@dataclass(frozen=True, eq=False)
class ControlTrajectory:
    """Per-path liquidation schedule with its trading rates.

    ``rate_values`` stores xdot = -(Y/eta)^(q-1) x nodewise.  For singular
    trajectories the terminal slot repeats the penultimate rate (the true
    terminal rate is infinite) and x at the horizon is exactly zero.
    """

    grid: TimeGrid
    initial_position: float
    x_values: np.ndarray
    rate_values: np.ndarray
    singular: bool
    analytic_x: Optional[Callable] = None
    analytic_rate: Optional[Callable] = None  # |xdot|(t) for deterministic schedules

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x_values, dtype=float))
        r = np.atleast_2d(np.asarray(self.rate_values, dtype=float))
        if x.shape != r.shape or x.shape[1] != self.grid.n_intervals + 1:
            raise ArgumentError("trajectory arrays must be (paths, nodes) and match the grid")
        if not np.allclose(x[:, 0], self.initial_position, rtol=0, atol=1e-12):
            raise ArgumentError("trajectory must start at the initial position")
        x.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "x_values", x)
        object.__setattr__(self, "rate_values", r)

    @property
    def n_rows(self) -> int:
        return self.x_values.shape[0]


@dataclass(frozen=True)
class CostReport:
    """Monte Carlo cost statistics with a 95% interval and term decomposition."""

    estimate: float
    std_error: float
    n_paths: int
    ci95_lo: float
    ci95_hi: float
    terms: dict

    @classmethod
    def from_terms(cls, trading, risk, terminal, std_error, n_paths):
        estimate = trading + risk + terminal
        return cls(
            estimate=estimate,
            std_error=std_error,
            n_paths=n_paths,
            ci95_lo=estimate - _CI95 * std_error,
            ci95_hi=estimate + _CI95 * std_error,
            terms={"trading": trading, "risk": risk, "terminal": terminal},
        )


@dataclass(frozen=True)
class MartingaleDiagnostic:
    """Flatness statistics of the optimality-certificate process between checkpoints."""

    checkpoints: tuple
    flatness_stats: tuple
    threshold: float

    @property
    def passed(self) -> bool:
        stats = np.asarray(self.flatness_stats)
        return bool(np.all(np.isfinite(stats)) and np.max(stats) < self.threshold)


@dataclass(frozen=True)
class IdentityReport:
    """Gap between a Monte Carlo cost and the predicted value Y_0 |xi|^p."""

    predicted: float
    observed: float
    gap: float
    tolerance: float
    normalized_gap: float
    passed: bool


@dataclass(frozen=True)
class TournamentEntry:
    name: str
    gap: float
    std_error: float
    not_better: bool          # candidate not significantly cheaper than the optimum
    significantly_worse: bool


@dataclass(frozen=True)
class TournamentReport:
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.not_better for e in self.entries)

    @property
    def n_significantly_worse(self) -> int:
        return sum(e.significantly_worse for e in self.entries)


# ---------------------------------------------------------------------------
# Trajectory construction
# ---------------------------------------------------------------------------


def _rate_factors(y_source, ensemble: PathEnsemble, pq: PowerPair):
    """(Y/eta)^(q-1) per node, plus whether the source is a singular limit."""
    grid = ensemble.grid
    eta = ensemble.eta_paths
    n = grid.n_intervals
    r = pq.q - 1.0

    deterministic = is_deterministic_impact(ensemble.impact)

    if isinstance(y_source, YField):
        if not np.array_equal(y_source.grid.nodes, grid.nodes):
            raise CoverageError("field does not cover the ensemble grid")
        covered = y_source.n_covered_nodes
        y = y_source.y_values
        if y.ndim == 2 and y.shape[0] not in (1, ensemble.n_paths):
            raise CoverageError("field rows do not align with ensemble paths")
        if y.ndim == 1 and deterministic:
            factors = (y / eta[0, :covered]) ** r  # one representative row suffices
            return factors[None, :], y_source.is_singular_limit
        factors = (y / eta[..., :covered]) ** r
        if factors.ndim == 1:
            factors = factors[None, :]
        return factors, y_source.is_singular_limit

    if isinstance(y_source, ClosedFormY):
        rows = 1 if deterministic else ensemble.n_paths
        cols = []
        for k in range(n):  # singular: the terminal value is infinite by design
            yk = y_source.evaluate(grid.nodes[k], eta[:rows, k])
            cols.append(np.broadcast_to(np.asarray(yk, dtype=float), (rows,)))
        y = np.column_stack(cols)
        return (y / eta[:rows, :n]) ** r, True

    raise ArgumentError(f"unsupported Y source {type(y_source).__name__}")


def integrate_control(y_source, ensemble: PathEnsemble, pq: PowerPair, xi: float) -> ControlTrajectory:
    """Integrate the feedback relation xdot = -(Y/eta)^(q-1) x pathwise.

    Log-space trapezoidal accumulation:
    x_{k+1} = x_k exp(-(r_k + r_{k+1}) dt_k / 2) with r = (Y/eta)^(q-1).
    Singular-limit sources force x(T) = 0 exactly; penalized fields leave the
    terminal position free.
    """
    grid = ensemble.grid
    dt = grid.dt
    n = grid.n_intervals
    factors, singular = _rate_factors(y_source, ensemble, pq)
    rows = factors.shape[0]

    x = np.empty((rows, n + 1))
    x[:, 0] = xi
    last_step = n - 1 if singular else n
    for k in range(last_step):
        x[:, k + 1] = x[:, k] * np.exp(-0.5 * (factors[:, k] + factors[:, k + 1]) * dt[k])
    rate = np.empty_like(x)
    rate[:, : factors.shape[1]] = -factors * x[:, : factors.shape[1]]
    if singular:
        x[:, n] = 0.0
        rate[:, n] = rate[:, n - 1]

    analytic_x = analytic_rate = None
    if isinstance(y_source, ClosedFormY) and is_umi_impact(ensemble.impact):
        x_fn, r_fn = schedule_functions(ensemble.impact, pq, grid.horizon)
        analytic_x = lambda s: xi * x_fn(s)
        analytic_rate = lambda s: abs(xi) * r_fn(s)

    return ControlTrajectory(
        grid=grid,
        initial_position=xi,
        x_values=x,
        rate_values=rate,
        singular=singular,
        analytic_x=analytic_x,
        analytic_rate=analytic_rate,
    )


def candidate_control(
    kind: str,
    grid: TimeGrid,
    xi: float,
    alpha: Optional[float] = None,
    rate_table=None,
) -> ControlTrajectory:
    """Benchmark schedules: linear/constant-rate closure, power closure, rate table.

    Power closures x = xi (1 - t/T)^alpha have an infinite terminal rate for
    alpha < 1; such trajectories are flagged singular and follow the
    penultimate-rate convention at the horizon.
    """
    t = grid.nodes
    T = grid.horizon
    if kind in ("linear", "constant_rate"):
        x = xi * (1.0 - t / T)
        rate = np.full_like(t, -xi / T)
        x_fn = lambda s: xi * (1.0 - s / T)
        r_fn = lambda s: abs(xi) / T
        singular = False
    elif kind == "power":
        if alpha is None or alpha <= 0:
            raise ArgumentError("power closure needs an exponent alpha > 0")
        base = 1.0 - t / T
        x = xi * base ** alpha
        with np.errstate(divide="ignore"):
            rate = -xi * (alpha / T) * base ** (alpha - 1.0)
        singular = alpha < 1.0
        if singular:
            rate[-1] = rate[-2]
        elif alpha == 1.0:
            rate[:] = -xi / T

        def x_fn(s, _a=alpha):
            return xi * max(1.0 - s / T, 0.0) ** _a

        def r_fn(s, _a=alpha):
            rem = max(1.0 - s / T, 0.0)
            if rem == 0.0:
                return 0.0 if _a >= 1.0 else math.inf
            return abs(xi) * (_a / T) * rem ** (_a - 1.0)

    elif kind == "deterministic_rate":
        if rate_table is None:
            raise ArgumentError("deterministic_rate needs a (breakpoints, values) table")
        bp, vals = rate_table
        w = np.interp(t, bp, vals)
        if np.any(w < 0):
            raise ArgumentError("rate table values must be >= 0")
        dt = grid.dt
        seg = 0.5 * (w[:-1] + w[1:]) * dt
        total = float(seg.sum())
        if total <= 0:
            raise ArgumentError("rate table must have positive total weight")
        tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        x = xi * tail / total
        rate = -xi * w / total
        x_fn = None
        r_fn = None
        singular = False
    else:
        raise ArgumentError(f"unknown candidate kind {kind!r}")

    return ControlTrajectory(
        grid=grid,
        initial_position=xi,
        x_values=x[None, :],
        rate_values=rate[None, :],
        singular=singular,
        analytic_x=x_fn,
        analytic_rate=r_fn,
    )


def monotone_envelope(traj: ControlTrajectory) -> ControlTrajectory:
    """Running minimum clipped at zero, pathwise.

    Never increases the cost: rates shrink in magnitude and positions shrink
    pointwise.  Rates are kept only where the envelope sticks to the original
    path (exact float equality, which holds by construction of the running
    minimum) and zeroed elsewhere.
    """
    if traj.initial_position <= 0:
        raise ArgumentError("envelope modification assumes a positive initial position")
    x = traj.x_values
    xbar = np.maximum(np.minimum.accumulate(x, axis=1), 0.0)
    rbar = np.where(xbar == x, traj.rate_values, 0.0)
    return ControlTrajectory(
        grid=traj.grid,
        initial_position=traj.initial_position,
        x_values=xbar,
        rate_values=rbar,
        singular=traj.singular,
    )


# ---------------------------------------------------------------------------
# Cost functionals
# ---------------------------------------------------------------------------


def _pathwise_terms(traj, ensemble, pq, risk_cap=None, terminal_level=None):
    """(trading_i, risk_i, terminal_i) per ensemble path, trapezoidal in time."""
    if not np.array_equal(traj.grid.nodes, ensemble.grid.nodes):
        raise ArgumentError("trajectory and ensemble live on different grids")
    if traj.n_rows not in (1, ensemble.n_paths):
        raise ArgumentError("trajectory rows do not align with ensemble paths")
    dt = ensemble.grid.dt
    f = ensemble.eta_paths * np.abs(traj.rate_values) ** pq.p
    trading = np.sum(0.5 * (f[:, :-1] + f[:, 1:]) * dt[None, :], axis=1)
    gamma = ensemble.gamma_paths
    if risk_cap is not None:
        gamma = np.minimum(gamma, risk_cap)
    g = gamma * np.abs(traj.x_values) ** pq.p
    risk_i = np.sum(0.5 * (g[:, :-1] + g[:, 1:]) * dt[None, :], axis=1)
    if terminal_level is None:
        terminal_i = np.zeros_like(trading)
    else:
        terminal_i = np.broadcast_to(
            terminal_level * np.abs(traj.x_values[:, -1]) ** pq.p, trading.shape
        )
    return trading, risk_i, terminal_i


def _quad_cost(f, a, b):
    """Adaptive quadrature that reports failure instead of silently degrading."""
    with np.errstate(all="ignore"):
        val, err = integrate.quad(f, a, b, epsabs=1e-14, epsrel=1e-10, limit=200, full_output=0)
    if not np.isfinite(val) or err > 1e-6 * max(abs(val), 1.0):
        raise ArgumentError("quadrature did not converge (non-integrable cost density?)")
    return val


def _analytic_cost_terms(traj, ensemble, risk, pq, risk_cap=None, terminal_level=None):
    T = traj.grid.horizon
    impact = ensemble.impact
    trading = _quad_cost(
        lambda s: impact_value(impact, s) * traj.analytic_rate(s) ** pq.p, 0.0, T
    )
    if risk_cap is None:
        gamma_fn = lambda s: risk_value(risk, s)
    else:
        gamma_fn = lambda s: min(risk_value(risk, s), risk_cap)
    risk_term = _quad_cost(lambda s: gamma_fn(s) * abs(traj.analytic_x(s)) ** pq.p, 0.0, T)
    terminal = 0.0
    if terminal_level is not None:
        terminal = terminal_level * abs(traj.analytic_x(T)) ** pq.p
    return trading, risk_term, terminal


def _cost_report(traj, ensemble, risk, pq, risk_cap=None, terminal_level=None) -> CostReport:
    analytic = (
        traj.analytic_rate is not None
        and traj.analytic_x is not None
        and is_deterministic_impact(ensemble.impact)
    )
    if analytic:
        try:
            trading, risk_term, terminal = _analytic_cost_terms(
                traj, ensemble, risk, pq, risk_cap, terminal_level
            )
            return CostReport.from_terms(trading, risk_term, terminal, 0.0, ensemble.n_paths)
        except ArgumentError:
            pass  # non-integrable analytic density: fall back to the grid trapezoid
    trading_i, risk_i, terminal_i = _pathwise_terms(traj, ensemble, pq, risk_cap, terminal_level)
    totals = trading_i + risk_i + terminal_i
    n = ensemble.n_paths
    se = float(totals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return CostReport.from_terms(
        float(trading_i.mean()), float(risk_i.mean()), float(terminal_i.mean()), se, n
    )


def cost(traj: ControlTrajectory, ensemble: PathEnsemble, risk: RiskModel, pq: PowerPair) -> CostReport:
    """Expected cost E int (eta |xdot|^p + gamma |x|^p) dt of a trajectory.

    Deterministic trajectories with analytic rate functions over a
    deterministic model are integrated by adaptive quadrature (zero standard
    error); everything else uses the pathwise trapezoid on the stored rates.
    """
    return _cost_report(traj, ensemble, risk, pq)


def penalized_cost(
    traj: ControlTrajectory,
    ensemble: PathEnsemble,
    risk: RiskModel,
    pq: PowerPair,
    L: float,
) -> CostReport:
    """Cost with the position penalty capped at L and the terminal charge L |x_T|^p."""
    return _cost_report(traj, ensemble, risk, pq, risk_cap=L, terminal_level=L)


def value_identity_check(
    impact,
    pq: PowerPair,
    xi: float,
    y0: float,
    cost_report: CostReport,
    abs_tol: float = 0.0,
) -> IdentityReport:
    """Compare a realised cost against the predicted value Y_0 |xi|^p.

    Passes when the gap is below max(3 standard errors, ``abs_tol``); the
    normalized gap is the ratio of the gap to that tolerance.
    """
    predicted = y0 * abs(xi) ** pq.p
    gap = abs(cost_report.estimate - predicted)
    tolerance = max(3.0 * cost_report.std_error, abs_tol)
    normalized = gap / tolerance if tolerance > 0 else math.inf if gap > 0 else 0.0
    return IdentityReport(
        predicted=predicted,
        observed=cost_report.estimate,
        gap=gap,
        tolerance=tolerance,
        normalized_gap=normalized,
        passed=gap <= tolerance,
    )


# ---------------------------------------------------------------------------
# Optimality diagnostics
# ---------------------------------------------------------------------------


def maximum_principle_diag(
    traj: ControlTrajectory,
    ensemble: PathEnsemble,
    risk: RiskModel,
    pq: PowerPair,
    checkpoints: Sequence[float],
    threshold: float = 4.0,
    basis_degree: int = 1,
) -> MartingaleDiagnostic:
    """Statistical martingale test of M = p eta |xdot|^(p-1) + p int gamma x^(p-1).

    The certificate process M is a martingale along an optimal nonincreasing
    control.  For each pair of consecutive checkpoints the increment is
    regressed on the impact state at the earlier checkpoint; the largest
    coefficient |t|-statistic is the flatness stat.  Pass iff every stat is
    below ``threshold``.
    """
    grid = traj.grid
    T = grid.horizon
    cps = sorted(float(c) for c in checkpoints)
    if len(cps) < 2:
        raise ArgumentError("need at least two checkpoints")
    if cps[0] <= 0.0 or cps[-1] >= T:
        raise ArgumentError("checkpoints must lie strictly inside (0, T)")
    if traj.initial_position <= 0:
        raise ArgumentError("diagnostic assumes a positive initial position")
    if np.any(np.diff(traj.x_values, axis=1) > 1e-10 * max(traj.initial_position, 1.0)):
        raise ArgumentError("trajectory is not nonincreasing; apply monotone_envelope first")

    idx = [int(np.argmin(np.abs(grid.nodes - c))) for c in cps]
    if len(set(idx)) != len(idx):
        raise ArgumentError("checkpoints collapse onto the same grid node")

    p = pq.p
    eta = ensemble.eta_paths
    rate_term = p * eta * np.abs(traj.rate_values) ** (p - 1.0)
    g = ensemble.gamma_paths * np.abs(traj.x_values) ** (p - 1.0)
    dt = grid.dt
    seg = 0.5 * (g[:, :-1] + g[:, 1:]) * dt[None, :]
    risk_accum = np.concatenate(
        [np.zeros((seg.shape[0], 1)), np.cumsum(seg, axis=1)], axis=1
    )
    m = rate_term + p * risk_accum
    if m.shape[0] == 1 and ensemble.n_paths > 1:
        m = np.broadcast_to(m, (ensemble.n_paths, m.shape[1]))

    stats = []
    for ka, kb in zip(idx[:-1], idx[1:]):
        increments = m[:, kb] - m[:, ka]
        stats.append(
            flatness_statistic(eta[:, ka], increments, degree=basis_degree, log_state=False)
        )
    return MartingaleDiagnostic(
        checkpoints=tuple(grid.nodes[i] for i in idx),
        flatness_stats=tuple(stats),
        threshold=threshold,
    )


def optimality_tournament(
    pq: PowerPair,
    xi: float,
    optimal: ControlTrajectory,
    candidates: dict,
    ensemble: PathEnsemble,
    risk: RiskModel,
    se_multiple: float = 3.0,
) -> TournamentReport:
    """Common-random-numbers comparison of candidate schedules against the optimum.

    Costs are computed pathwise on the shared ensemble so the per-path gap
    J_i(candidate) - J_i(optimal) is a paired estimator; its standard error is
    far smaller than either absolute cost's.  Passes when no candidate beats
    the optimum by more than ``se_multiple`` paired standard errors.
    """
    ot, orr, _ = _pathwise_terms(optimal, ensemble, pq)
    opt_tot = ot + orr
    entries = []
    n = ensemble.n_paths
    for name, traj in candidates.items():
        ct, cr, _ = _pathwise_terms(traj, ensemble, pq)
        diff = (ct + cr) - opt_tot
        gap = float(diff.mean())
        se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        entries.append(
            TournamentEntry(
                name=name,
                gap=gap,
                std_error=se,
                not_better=gap >= -se_multiple * se,
                significantly_worse=gap > se_multiple * se,
            )
        )
    return TournamentReport(entries=tuple(entries))
