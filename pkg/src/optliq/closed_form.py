"""Closed-form solution fields and schedules for the analytically solvable families.

Every formula here serves double duty: it is the fast path for those model
families and the ground-truth oracle against which the numerical solvers are
verified.  The three building blocks are

* deterministic impact:   Y_t = (1 / int_t^T eta_s^-(q-1) ds)^(p-1),
* positive martingale:    Y_t = eta_t / (T-t)^(p-1),
* uncorrelated multiplicative increments (UMI):
      Y_t = (eta_t / E[eta_t]) * (1 / int_t^T E[eta_s]^-(q-1) ds)^(p-1),

with the GBM family admitting the fully explicit specialisation

      Y_t = (mu (q-1))^(p-1) * eta_t / (1 - exp(-mu (q-1) (T-t)))^(p-1).

Note the prefactor: substituting E[eta_s] = eta0 exp(mu s) into the UMI
formula forces (mu (q-1))^(p-1) as a whole; the alternative parenthesisation
mu * (q-1)^(p-1) coincides only at p = 2 and is kept available purely for
cross-reporting (see :func:`y_gbm_alt_prefactor`).

Time integrals are evaluated by adaptive quadrature at relative tolerance
1e-10; integrands with an algebraic endpoint singularity are transformed to a
bounded integrand first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import (
    ArgumentError,
    DomainError,
    IntegrabilityError,
    UnsupportedModelError,
)
from .model import (
    ConstantImpact,
    GBMImpact,
    ImpactModel,
    PowerPair,
    PowerSingularImpact,
    RiskModel,
    TableImpact,
    ZeroRisk,
    expected_impact,
    impact_value,
    is_deterministic_impact,
    is_umi_impact,
    risk_value,
)

QUAD_REL_TOL = 1e-10

#: below this value of |mu (q-1) (T-t)| the GBM formula switches to a series
#: expansion of (1 - exp(-z))/z to avoid catastrophic cancellation
GBM_SMALL_Z = 1e-6


def _quad(f, a: float, b: float, points=None) -> float:
    if b <= a:
        return 0.0
    kwargs = {"epsabs": 1e-14, "epsrel": QUAD_REL_TOL, "limit": 200}
    if points is not None:
        pts = [x for x in points if a < x < b]
        if pts:
            kwargs["points"] = pts
    val, _ = integrate.quad(f, a, b, **kwargs)
    return val


def _power_tail_integral(T: float, e: float, a: float, b: float) -> float:
    """int_a^b (T-s)^(-e) ds via the antiderivative in u = (T-s)^(1-e).

    The substitution turns the algebraically singular integrand into a
    constant, so the value is exact.  Reaching b = T with e >= 1 is a
    non-integrable singularity.
    """
    if b >= T:
        if e >= 1.0:
            raise IntegrabilityError(
                f"(T-s)^(-{e:g}) is not integrable up to the horizon"
            )
        b = T
    if abs(e - 1.0) < 1e-14:
        return math.log(T - a) - math.log(T - b)
    return ((T - a) ** (1.0 - e) - (T - b) ** (1.0 - e)) / (1.0 - e)


def inverse_impact_integral(
    impact: ImpactModel, pq: PowerPair, T: float, a: float, b: float
) -> float:
    """int_a^b eta(s)^-(q-1) ds for a deterministic impact family."""
    if not is_deterministic_impact(impact):
        raise UnsupportedModelError("pathwise inverse integral needs deterministic eta")
    r = pq.q - 1.0
    if isinstance(impact, ConstantImpact):
        return (min(b, T) - a) * impact.eta0 ** (-r)
    if isinstance(impact, PowerSingularImpact):
        if abs(impact.horizon - T) > 1e-12:
            raise ArgumentError("horizon mismatch between impact model and problem")
        return _power_tail_integral(T, impact.beta * r, a, b)
    if isinstance(impact, GBMImpact):  # sigma == 0: eta(s) = eta0 exp(mu s)
        if impact.mu == 0.0:
            return (b - a) * impact.eta0 ** (-r)
        lam = r * impact.mu
        return impact.eta0 ** (-r) * (math.exp(-lam * a) - math.exp(-lam * b)) / lam
    return _quad(lambda s: impact_value(impact, s) ** (-r), a, b, points=impact.breakpoints)


def expected_inverse_impact_integral(
    impact: ImpactModel, pq: PowerPair, T: float, a: float, b: float
) -> float:
    """int_a^b E[eta_s]^-(q-1) ds for a UMI family."""
    if not is_umi_impact(impact):
        raise UnsupportedModelError(
            f"{type(impact).__name__} lacks uncorrelated multiplicative increments"
        )
    if isinstance(impact, GBMImpact):
        r = pq.q - 1.0
        if impact.mu == 0.0:
            return (b - a) * impact.eta0 ** (-r)
        lam = r * impact.mu
        return impact.eta0 ** (-r) * (math.exp(-lam * a) - math.exp(-lam * b)) / lam
    return inverse_impact_integral(impact, pq, T, a, b)


def conditional_inverse_impact_integral(
    impact: ImpactModel, pq: PowerPair, T: float, t: float, eta_t=None
):
    """E[ int_t^T eta_s^-(q-1) ds | state eta_t ] in closed form.

    Deterministic families ignore the state.  For GBM the conditional moment
    E[eta_s^-(q-1) | eta_t] = eta_t^-(q-1) exp(a (s-t)) with
    a = -(q-1) mu + q (q-1) sigma^2 / 2 integrates to an explicit exponential.
    """
    r = pq.q - 1.0
    if isinstance(impact, GBMImpact) and impact.sigma > 0.0:
        if eta_t is None:
            raise ArgumentError("conditional integral for GBM needs the state eta_t")
        a = -r * impact.mu + 0.5 * pq.q * r * impact.sigma ** 2
        span = T - t
        if abs(a) < 1e-14:
            factor = span
        else:
            factor = math.expm1(a * span) / a
        return np.asarray(eta_t, dtype=float) ** (-r) * factor
    return inverse_impact_integral(impact, pq, T, t, T)


def conditional_impact_integral(impact: ImpactModel, T: float, t: float, eta_t=None):
    """E[ int_t^T eta_s ds | state eta_t ] in closed form."""
    if isinstance(impact, GBMImpact) and impact.sigma > 0.0:
        if eta_t is None:
            raise ArgumentError("conditional integral for GBM needs the state eta_t")
        span = T - t
        factor = span if impact.mu == 0.0 else math.expm1(impact.mu * span) / impact.mu
        return np.asarray(eta_t, dtype=float) * factor
    if is_deterministic_impact(impact):
        if isinstance(impact, ConstantImpact):
            return impact.eta0 * (T - t)
        points = impact.breakpoints if isinstance(impact, TableImpact) else None
        return _quad(lambda s: impact_value(impact, s), t, T, points=points)
    raise UnsupportedModelError(
        f"no closed-form conditional impact integral for {type(impact).__name__}"
    )


def risk_weighted_integral(risk: RiskModel, p: float, T: float, t: float) -> float:
    """int_t^T (T-s)^p gamma_s ds for a deterministic risk family."""
    if isinstance(risk, ZeroRisk):
        return 0.0
    points = getattr(risk, "breakpoints", None)
    return _quad(lambda s: (T - s) ** p * risk_value(risk, s), t, T, points=points)


def capped_risk_integral(risk: RiskModel, cap: float, a: float, b: float) -> float:
    """int_a^b (gamma_s ^ cap) ds with ^ the pointwise minimum."""
    if isinstance(risk, ZeroRisk):
        return 0.0
    points = getattr(risk, "breakpoints", None)
    return _quad(lambda s: min(risk_value(risk, s), cap), a, b, points=points)


# ---------------------------------------------------------------------------
# Solution fields
# ---------------------------------------------------------------------------


def _check_interior(t: float, T: float):
    if t >= T:
        raise DomainError(f"t={t} is at or past the horizon T={T}; Y diverges there")
    if t < 0:
        raise DomainError(f"t={t} is before the start of trading")


def y_deterministic(impact: ImpactModel, pq: PowerPair, T: float, t: float) -> float:
    """Y_t = (1 / int_t^T eta_s^-(q-1) ds)^(p-1) for deterministic eta."""
    _check_interior(t, T)
    integral = inverse_impact_integral(impact, pq, T, t, T)
    return integral ** (-(pq.p - 1.0))


def x_deterministic(impact: ImpactModel, pq: PowerPair, T: float, t: float) -> float:
    """Normalised optimal schedule int_t^T eta^-(q-1) / int_0^T eta^-(q-1)."""
    if t >= T:
        return 0.0
    if t < 0:
        raise DomainError(f"t={t} is before the start of trading")
    return inverse_impact_integral(impact, pq, T, t, T) / inverse_impact_integral(
        impact, pq, T, 0.0, T
    )


def y_martingale(eta_t: float, pq: PowerPair, T: float, t: float) -> float:
    """Y_t = eta_t / (T-t)^(p-1): the field when eta is a positive martingale."""
    _check_interior(t, T)
    if eta_t <= 0:
        raise DomainError(f"impact state must be positive, got {eta_t}")
    return eta_t / (T - t) ** (pq.p - 1.0)


def y_uncorrelated(
    impact: ImpactModel, pq: PowerPair, T: float, t: float, eta_t: float
) -> float:
    """UMI field: (eta_t / E[eta_t]) times the deterministic mean-impact factor."""
    _check_interior(t, T)
    if not is_umi_impact(impact):
        raise UnsupportedModelError(
            f"{type(impact).__name__} lacks uncorrelated multiplicative increments"
        )
    m = eta_t / expected_impact(impact, t)
    d = expected_inverse_impact_integral(impact, pq, T, t, T)
    return m * d ** (-(pq.p - 1.0))


def x_uncorrelated(impact: ImpactModel, pq: PowerPair, T: float, t: float) -> float:
    """Deterministic UMI schedule int_t^T E[eta]^-(q-1) / int_0^T E[eta]^-(q-1)."""
    if t >= T:
        return 0.0
    if t < 0:
        raise DomainError(f"t={t} is before the start of trading")
    return expected_inverse_impact_integral(impact, pq, T, t, T) / (
        expected_inverse_impact_integral(impact, pq, T, 0.0, T)
    )


def y_gbm(impact: GBMImpact, pq: PowerPair, T: float, t: float, eta_t: float) -> float:
    """Explicit GBM field (mu (q-1))^(p-1) eta_t / (1 - exp(-mu (q-1)(T-t)))^(p-1).

    mu = 0 is not a failure: the field degenerates to the martingale variant
    eta_t / (T-t)^(p-1), which is returned directly.  For small
    |mu (q-1) (T-t)| the ratio (1 - exp(-z))/z is evaluated by its
    second-order expansion so the mu -> 0 limit is smooth in floating point.
    """
    _check_interior(t, T)
    if impact.mu == 0.0:
        return y_martingale(eta_t, pq, T, t)
    z = impact.mu * (pq.q - 1.0) * (T - t)
    if abs(z) < GBM_SMALL_Z:
        ratio = 1.0 / (1.0 - z / 2.0 + z * z / 6.0)  # z / (1 - exp(-z)) to O(z^3)
        return eta_t * (ratio / (T - t)) ** (pq.p - 1.0)
    base = impact.mu * (pq.q - 1.0) / (-math.expm1(-z))
    return eta_t * base ** (pq.p - 1.0)


def y_gbm_alt_prefactor(
    impact: GBMImpact, pq: PowerPair, T: float, t: float, eta_t: float
) -> float:
    """Alternative parenthesisation mu (q-1)^(p-1) of the GBM prefactor.

    Coincides with :func:`y_gbm` only at p = 2; kept so verification reports
    can show both readings side by side.  Requires mu > 0.
    """
    _check_interior(t, T)
    if impact.mu <= 0.0:
        raise ArgumentError("alternative prefactor comparison is defined for mu > 0")
    z = impact.mu * (pq.q - 1.0) * (T - t)
    return impact.mu * (pq.q - 1.0) ** (pq.p - 1.0) * eta_t / (-math.expm1(-z)) ** (
        pq.p - 1.0
    )


@dataclass(frozen=True)
class ClosedFormY:
    """Evaluator (t, eta_t) -> Y_t with the family tag of the formula used.

    All families here are singular limits: Y diverges at the horizon, so the
    evaluator refuses t >= T.
    """

    family: str
    evaluate: Callable


def closed_form_y(impact: ImpactModel, pq: PowerPair, T: float) -> ClosedFormY:
    """Dispatch to the applicable closed-form field.

    Deterministic families use the deterministic formula; GBM with mu = 0 is
    tagged as the martingale variant; GBM with drift uses the explicit GBM
    form.  Families without a closed form raise.
    """
    if is_deterministic_impact(impact):
        return ClosedFormY(
            family="deterministic",
            evaluate=lambda t, eta_t=None: y_deterministic(impact, pq, T, t),
        )
    if isinstance(impact, GBMImpact):
        if impact.mu == 0.0:
            return ClosedFormY(
                family="martingale",
                evaluate=lambda t, eta_t: y_martingale(eta_t, pq, T, t),
            )
        return ClosedFormY(
            family="gbm", evaluate=lambda t, eta_t: y_gbm(impact, pq, T, t, eta_t)
        )
    raise UnsupportedModelError(f"no closed-form field for {type(impact).__name__}")


def schedule_functions(impact: ImpactModel, pq: PowerPair, T: float):
    """Deterministic UMI schedule as callables (x(t), |xdot|(t)) for unit position.

    The absolute trading rate is E[eta_t]^-(q-1) / int_0^T E[eta_s]^-(q-1) ds,
    inversely proportional to the conjugate power of the expected impact.
    """
    if not is_umi_impact(impact):
        raise UnsupportedModelError(
            f"{type(impact).__name__} has no deterministic optimal schedule"
        )
    total = expected_inverse_impact_integral(impact, pq, T, 0.0, T)
    r = pq.q - 1.0

    def x_fn(t: float) -> float:
        if t >= T:
            return 0.0
        return expected_inverse_impact_integral(impact, pq, T, t, T) / total

    def rate_fn(t: float) -> float:
        return expected_impact(impact, min(t, T)) ** (-r) / total

    return x_fn, rate_fn


# ---------------------------------------------------------------------------
# No-optimal-control counterexample (eta = (1-t)^beta with beta >= 1, p = 2)
# ---------------------------------------------------------------------------


def counterexample_cost(alpha: float, beta: float) -> float:
    """Cost alpha^2 / (2 alpha + beta - 1) of the schedule x_t = (1-t)^alpha.

    Valid in the non-integrable regime beta >= 1 at p = 2, where the infimum
    over alpha > 0 is zero but no admissible control attains it.
    """
    if alpha <= 0:
        raise ArgumentError(f"schedule exponent must be positive, got alpha={alpha}")
    if beta < 1:
        raise ArgumentError(
            f"counterexample regime needs beta >= 1, got beta={beta}"
        )
    return alpha * alpha / (2.0 * alpha + beta - 1.0)


def unit_power_integral(exponent: float) -> float:
    """int_0^1 (1-t)^e dt by quadrature, e > -1.

    For e < 0 the substitution u = (1-t)^(1+e) makes the integrand constant,
    removing the endpoint singularity before quadrature.
    """
    if exponent <= -1.0:
        raise IntegrabilityError(f"(1-t)^{exponent:g} is not integrable on [0,1]")
    if exponent >= 0.0:
        return _quad(lambda t: (1.0 - t) ** exponent, 0.0, 1.0)
    scale = 1.0 / (1.0 + exponent)
    return _quad(lambda u: scale, 0.0, 1.0)


def counterexample_cost_quadrature(alpha: float, beta: float) -> float:
    """Quadrature evaluation of int_0^1 eta_t xdot_t^2 dt for x_t = (1-t)^alpha."""
    if alpha <= 0:
        raise ArgumentError(f"schedule exponent must be positive, got alpha={alpha}")
    return alpha * alpha * unit_power_integral(2.0 * alpha + beta - 2.0)
