"""Problem primitives: exponent pair, time grids, impact/risk families, path sampling.

The liquidation problem is parametrised by a cost exponent p > 1 (with Holder
conjugate q = p/(p-1)), a price-impact process eta weighting |xdot|^p, and a
risk process gamma weighting |x|^p.  This module defines the parametric
families for eta and gamma, the discretisation grid, the integrability
screening, and the seeded Monte Carlo ensemble of paths that every downstream
solver consumes.

Random numbers come from numpy's counter-based Philox generator.  Paths are
generated in fixed-size blocks, each block keyed by ``(seed, block_index)``,
so the ensemble is bit-identical whether blocks are produced serially or by a
thread pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ArgumentError, DomainError, PositivityError

#: Paths per RNG substream.  Each block b draws from Philox keyed by (seed, b).
BLOCK_SIZE = 1024

_CONJUGACY_TOL = 1e-12


def conjugate(p: float) -> float:
    """Holder conjugate q = p/(p-1) of the cost exponent p.

    Raises :class:`DomainError` for p <= 1: the problem is ill posed there
    (the p = 1 limit calls for singular controls, which are out of scope).
    """
    if not p > 1.0:
        raise DomainError(f"cost exponent must satisfy p > 1, got p={p}")
    return p / (p - 1.0)


@dataclass(frozen=True)
class PowerPair:
    """Cost exponent p and its Holder conjugate q, with 1/p + 1/q = 1."""

    p: float
    q: float

    def __post_init__(self):
        if not self.p > 1.0:
            raise DomainError(f"cost exponent must satisfy p > 1, got p={self.p}")
        if abs(1.0 / self.p + 1.0 / self.q - 1.0) > _CONJUGACY_TOL:
            raise ArgumentError(
                f"q={self.q} is not the Holder conjugate of p={self.p}"
            )

    @classmethod
    def from_p(cls, p: float) -> "PowerPair":
        return cls(p, conjugate(p))


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ascending nodes t_0 = 0 < ... < t_N = horizon.

    ``cluster_exponent`` g >= 1 records the stretching used by :meth:`build`:
    t_k = T * (1 - (1 - k/N)^g).  g = 1 is uniform; g > 1 clusters nodes
    toward the horizon, where the solution fields steepen.
    """

    horizon: float
    nodes: np.ndarray
    cluster_exponent: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ArgumentError("grid needs at least two nodes")
        if nodes[0] != 0.0 or not np.isclose(nodes[-1], self.horizon, rtol=0, atol=0):
            raise ArgumentError("grid must start at 0 and end at the horizon")
        if not np.all(np.diff(nodes) > 0):
            raise ArgumentError("grid nodes must be strictly increasing")
        if self.cluster_exponent < 1.0:
            raise ArgumentError("cluster exponent must be >= 1")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def build(cls, horizon: float, n: int, cluster: float = 1.0) -> "TimeGrid":
        """Grid with N = ``n`` intervals and stretching exponent ``cluster``."""
        if horizon <= 0:
            raise ArgumentError(f"horizon must be positive, got {horizon}")
        if n < 1:
            raise ArgumentError(f"need at least one interval, got n={n}")
        k = np.arange(n + 1, dtype=float)
        nodes = horizon * (1.0 - (1.0 - k / n) ** cluster)
        nodes[0] = 0.0
        nodes[-1] = horizon
        return cls(horizon=horizon, nodes=nodes, cluster_exponent=cluster)

    @property
    def n_intervals(self) -> int:
        return len(self.nodes) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)


# ---------------------------------------------------------------------------
# Impact families (price impact process eta)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantImpact:
    """eta_t = eta0 > 0."""

    eta0: float

    def __post_init__(self):
        if not self.eta0 > 0:
            raise PositivityError(f"constant impact must be positive, got {self.eta0}")


@dataclass(frozen=True)
class TableImpact:
    """Deterministic eta given by piecewise-linear interpolation of (breakpoints, values).

    Breakpoints need not coincide with grid nodes.  Outside the breakpoint
    range the boundary values are held flat.
    """

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) != len(vals) or len(bp) < 2:
            raise ArgumentError("table needs matching breakpoints/values, at least two")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ArgumentError("table breakpoints must be strictly increasing")
        if any(v <= 0 for v in vals):
            raise PositivityError("table impact values must be strictly positive")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class PowerSingularImpact:
    """eta_t = (horizon - t)^beta, vanishing at the horizon for beta > 0.

    Only admissible for solving when beta*(q-1) < 1; the complementary regime
    exists solely to exercise the no-optimal-control counterexample suite.
    """

    beta: float
    horizon: float

    def __post_init__(self):
        if self.beta < 0:
            raise ArgumentError(f"beta must be >= 0, got {self.beta}")
        if self.horizon <= 0:
            raise ArgumentError(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class GBMImpact:
    """Geometric Brownian motion: d eta = mu eta dt + sigma eta dW, eta_0 = eta0."""

    eta0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.eta0 > 0:
            raise PositivityError(f"initial impact must be positive, got {self.eta0}")
        if self.sigma < 0:
            raise ArgumentError(f"volatility must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class BrownianSquareImpact:
    """eta_t = 1 + W_t^2: strictly positive but with correlated multiplicative increments.

    Test-only family used to exercise the martingale-diagnostic failure path;
    no solver supports it.
    """


ImpactModel = Union[
    ConstantImpact, TableImpact, PowerSingularImpact, GBMImpact, BrownianSquareImpact
]

# ---------------------------------------------------------------------------
# Risk families (position penalty process gamma)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZeroRisk:
    """gamma = 0."""


@dataclass(frozen=True)
class ConstantRisk:
    """gamma_t = c >= 0."""

    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ArgumentError(f"risk weight must be >= 0, got {self.c}")


@dataclass(frozen=True)
class TableRisk:
    """Deterministic gamma by piecewise-linear interpolation, held flat outside."""

    breakpoints: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) != len(vals) or len(bp) < 2:
            raise ArgumentError("table needs matching breakpoints/values, at least two")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ArgumentError("table breakpoints must be strictly increasing")
        if any(v < 0 for v in vals):
            raise ArgumentError("table risk values must be >= 0")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)


RiskModel = Union[ZeroRisk, ConstantRisk, TableRisk]


# ---------------------------------------------------------------------------
# Pointwise evaluation and moments
# ---------------------------------------------------------------------------


def is_deterministic_impact(impact: ImpactModel) -> bool:
    """True when eta is a deterministic function of time."""
    if isinstance(impact, (ConstantImpact, TableImpact, PowerSingularImpact)):
        return True
    return isinstance(impact, GBMImpact) and impact.sigma == 0.0


def is_umi_impact(impact: ImpactModel) -> bool:
    """True when eta has uncorrelated multiplicative increments.

    Deterministic families qualify trivially; GBM does because eta_t/eta_s is
    independent of the past.  The Brownian-square counter-model does not.
    """
    return not isinstance(impact, BrownianSquareImpact)


def impact_value(impact: ImpactModel, t):
    """Deterministic eta(t); raises for stochastic families."""
    from .errors import UnsupportedModelError

    t = np.asarray(t, dtype=float)
    if isinstance(impact, ConstantImpact):
        out = np.full_like(t, impact.eta0)
    elif isinstance(impact, TableImpact):
        out = np.interp(t, impact.breakpoints, impact.values)
    elif isinstance(impact, PowerSingularImpact):
        out = np.maximum(impact.horizon - t, 0.0) ** impact.beta
    elif isinstance(impact, GBMImpact) and impact.sigma == 0.0:
        out = impact.eta0 * np.exp(impact.mu * t)
    else:
        raise UnsupportedModelError(
            f"{type(impact).__name__} has no deterministic value function"
        )
    return out if out.ndim else float(out)


def risk_value(risk: RiskModel, t):
    """Deterministic gamma(t)."""
    t = np.asarray(t, dtype=float)
    if isinstance(risk, ZeroRisk):
        out = np.zeros_like(t)
    elif isinstance(risk, ConstantRisk):
        out = np.full_like(t, risk.c)
    elif isinstance(risk, TableRisk):
        out = np.interp(t, risk.breakpoints, risk.values)
    else:
        raise ArgumentError(f"unknown risk model {type(risk).__name__}")
    return out if out.ndim else float(out)


def expected_impact(impact: ImpactModel, t):
    """E[eta_t] in closed form for every family.

    GBM: eta0 * exp(mu t) (the sigma-dependence cancels in the mean).
    Brownian-square counter-model: E[1 + W_t^2] = 1 + t.
    Deterministic families return their own value.
    """
    t = np.asarray(t, dtype=float)
    if isinstance(impact, GBMImpact):
        out = impact.eta0 * np.exp(impact.mu * t)
    elif isinstance(impact, BrownianSquareImpact):
        out = 1.0 + t
    else:
        out = np.asarray(impact_value(impact, t), dtype=float)
    return out if out.ndim else float(out)


def gbm_lognormal_moment(impact: GBMImpact, r: float, t: float) -> float:
    """E[eta_t^r] = eta0^r * exp(r mu t + r (r-1) sigma^2 t / 2) for GBM."""
    if not isinstance(impact, GBMImpact):
        raise ArgumentError("lognormal moments are defined for the GBM family only")
    return impact.eta0 ** r * math.exp(r * impact.mu * t + 0.5 * r * (r - 1.0) * impact.sigma ** 2 * t)


# ---------------------------------------------------------------------------
# Integrability screening
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    reason: str


@dataclass(frozen=True)
class IntegrabilityReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_integrability(
    impact: ImpactModel, risk: RiskModel, pq: PowerPair, T: float
) -> IntegrabilityReport:
    """Screen the model against the well-posedness conditions.

    Three named checks are produced:

    * ``impact_square`` - eta square integrable in time and probability,
    * ``impact_inverse`` - 1/eta^(q-1) integrable on [0, T],
    * ``risk_weighted`` - (T-s)^p gamma_s integrable.

    The only family that can fail is the power-singular one, whose inverse
    check fails exactly when beta * (q-1) >= 1; in that regime no admissible
    control attains the infimum and only the counterexample suite applies.
    """
    q = pq.q
    checks = []

    if isinstance(impact, ConstantImpact):
        checks.append(ConditionCheck("impact_square", True, "constant eta is bounded"))
        checks.append(
            ConditionCheck("impact_inverse", True, "constant eta is bounded away from zero")
        )
    elif isinstance(impact, TableImpact):
        checks.append(ConditionCheck("impact_square", True, "table eta is bounded"))
        checks.append(
            ConditionCheck(
                "impact_inverse",
                True,
                "strictly positive piecewise-linear eta is bounded away from zero",
            )
        )
    elif isinstance(impact, PowerSingularImpact):
        checks.append(
            ConditionCheck(
                "impact_square",
                True,
                f"(T-t)^(2 beta) with beta={impact.beta} >= 0 is integrable",
            )
        )
        exponent = impact.beta * (q - 1.0)
        ok = exponent < 1.0
        checks.append(
            ConditionCheck(
                "impact_inverse",
                ok,
                f"(T-t)^(-beta (q-1)) integrable iff beta (q-1) < 1; here beta (q-1) = {exponent:g}",
            )
        )
    elif isinstance(impact, GBMImpact):
        checks.append(
            ConditionCheck(
                "impact_square",
                True,
                "lognormal second moment eta0^2 exp((2 mu + sigma^2) t) is finite",
            )
        )
        checks.append(
            ConditionCheck(
                "impact_inverse",
                True,
                "lognormal moments of every order are finite, including order -(q-1)",
            )
        )
    elif isinstance(impact, BrownianSquareImpact):
        checks.append(
            ConditionCheck("impact_square", True, "E[(1 + W_t^2)^2] = 1 + 2t + 3t^2 is finite")
        )
        checks.append(
            ConditionCheck("impact_inverse", True, "1/(1 + W_t^2)^(q-1) <= 1")
        )
    else:
        raise ArgumentError(f"unknown impact model {type(impact).__name__}")

    if isinstance(risk, ZeroRisk):
        checks.append(ConditionCheck("risk_weighted", True, "gamma = 0"))
    elif isinstance(risk, (ConstantRisk, TableRisk)):
        checks.append(
            ConditionCheck(
                "risk_weighted", True, "bounded deterministic gamma against (T-s)^p is integrable"
            )
        )
    else:
        raise ArgumentError(f"unknown risk model {type(risk).__name__}")

    return IntegrabilityReport(checks=tuple(checks))


# ---------------------------------------------------------------------------
# Path ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Seeded Monte Carlo sample of Brownian increments and eta/gamma node values.

    Shapes: increments (n_paths, N), node values (n_paths, N+1).  Impact
    values are strictly positive at interior nodes; the power-singular family
    is allowed to reach zero at the horizon itself.
    """

    seed: int
    n_paths: int
    grid: TimeGrid
    brownian_increments: np.ndarray
    eta_paths: np.ndarray
    gamma_paths: np.ndarray
    impact: ImpactModel
    risk: RiskModel

    def __post_init__(self):
        n, nn = self.n_paths, self.grid.n_intervals
        if self.brownian_increments.shape != (n, nn):
            raise ArgumentError("brownian increment shape mismatch")
        if self.eta_paths.shape != (n, nn + 1) or self.gamma_paths.shape != (n, nn + 1):
            raise ArgumentError("node value shape mismatch")
        if np.any(self.eta_paths[:, :-1] <= 0) or np.any(self.eta_paths[:, -1] < 0):
            raise PositivityError("impact paths must be positive before the horizon")
        if np.any(self.gamma_paths < 0):
            raise ArgumentError("risk paths must be nonnegative")
        for arr in (self.brownian_increments, self.eta_paths, self.gamma_paths):
            arr.setflags(write=False)


def _philox(seed: int, block: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(block)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _block_increments(seed: int, block: int, n_rows: int, dt: np.ndarray) -> np.ndarray:
    rng = _philox(seed, block)
    return rng.standard_normal((n_rows, len(dt))) * np.sqrt(dt)[None, :]


def sample_paths(
    impact: ImpactModel,
    risk: RiskModel,
    grid: TimeGrid,
    seed: int,
    n_paths: int,
    max_workers: int = 1,
) -> PathEnsemble:
    """Sample a :class:`PathEnsemble` on ``grid``.

    GBM paths use the exact lognormal transition
    eta_{k+1} = eta_k * exp((mu - sigma^2/2) dt + sigma dW), so there is no
    Euler bias to confound the backward solvers.  Deterministic families
    produce identical rows.  Blocks of :data:`BLOCK_SIZE` paths come from
    independent Philox substreams keyed by (seed, block), so any worker count
    yields the same ensemble.
    """
    if n_paths < 1:
        raise ArgumentError(f"need at least one path, got {n_paths}")
    n_steps = grid.n_intervals
    if n_steps < 1:
        raise ArgumentError("grid has no intervals")
    dt = grid.dt

    n_blocks = (n_paths + BLOCK_SIZE - 1) // BLOCK_SIZE
    sizes = [min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE) for b in range(n_blocks)]

    if max_workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            parts = list(
                pool.map(lambda b: _block_increments(seed, b, sizes[b], dt), range(n_blocks))
            )
    else:
        parts = [_block_increments(seed, b, sizes[b], dt) for b in range(n_blocks)]
    increments = np.concatenate(parts, axis=0)

    nodes = grid.nodes
    if isinstance(impact, GBMImpact):
        log_steps = (impact.mu - 0.5 * impact.sigma ** 2) * dt[None, :] + impact.sigma * increments
        log_eta = math.log(impact.eta0) + np.concatenate(
            [np.zeros((n_paths, 1)), np.cumsum(log_steps, axis=1)], axis=1
        )
        eta = np.exp(log_eta)
    elif isinstance(impact, BrownianSquareImpact):
        w = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(increments, axis=1)], axis=1)
        eta = 1.0 + w ** 2
    else:
        eta = np.broadcast_to(impact_value(impact, nodes), (n_paths, n_steps + 1)).copy()

    gamma = np.broadcast_to(risk_value(risk, nodes), (n_paths, n_steps + 1)).copy()

    return PathEnsemble(
        seed=seed,
        n_paths=n_paths,
        grid=grid,
        brownian_increments=increments,
        eta_paths=eta,
        gamma_paths=gamma,
        impact=impact,
        risk=risk,
    )
