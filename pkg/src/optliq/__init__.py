"""Constrained optimal liquidation via penalized backward stochastic equations.

The library solves min E[ int_0^T (eta_t |xdot_t|^p + gamma_t |x_t|^p) dt ]
over adapted absolutely continuous positions with x_0 = xi and x_T = 0, by
constructing the minimal solution of the associated backward equation with a
singular terminal value through penalization, integrating the feedback
control xdot = -(Y/eta)^(q-1) x, and verifying every closed form, bound and
optimality certificate numerically.
"""

from .errors import (
    ArgumentError,
    BasisError,
    ConfigError,
    CoverageError,
    DomainError,
    IntegrabilityError,
    NumericalError,
    OptliqError,
    PositivityError,
    SolverInconsistencyError,
    UnsupportedModelError,
)
from .model import (
    BrownianSquareImpact,
    ConstantImpact,
    ConstantRisk,
    GBMImpact,
    ImpactModel,
    PathEnsemble,
    PowerPair,
    PowerSingularImpact,
    RiskModel,
    TableImpact,
    TableRisk,
    TimeGrid,
    ZeroRisk,
    conjugate,
    expected_impact,
    impact_value,
    is_deterministic_impact,
    is_umi_impact,
    risk_value,
    sample_paths,
    validate_integrability,
)
from .closed_form import (
    ClosedFormY,
    closed_form_y,
    counterexample_cost,
    counterexample_cost_quadrature,
    schedule_functions,
    x_deterministic,
    x_uncorrelated,
    y_deterministic,
    y_gbm,
    y_martingale,
    y_uncorrelated,
)
from .bsde import (
    LSchedule,
    LimitResult,
    PenalizedParams,
    SandwichReport,
    YField,
    bounds_sandwich_check,
    driver,
    estimate_Z,
    l_schedule_limit,
    linear_bsde_mc,
    lower_bound_singular,
    penalized_lower_bound,
    penalized_upper_bound,
    solve_penalized_deterministic,
    solve_penalized_mc,
    upper_bound_singular,
)
from .control import (
    ControlTrajectory,
    CostReport,
    MartingaleDiagnostic,
    candidate_control,
    cost,
    integrate_control,
    maximum_principle_diag,
    monotone_envelope,
    optimality_tournament,
    penalized_cost,
    value_identity_check,
)
from .verify import (
    VerificationReport,
    counterexample_sweep,
    cross_check,
    run_full_suite,
    umi_test,
)

__version__ = "0.1.0"
