"""Least-squares projection machinery for conditional expectations.

Conditional expectations given the Markov state are estimated by projecting
cross-sectional targets onto a polynomial basis in the (optionally
log-transformed) state.  The regressor is standardised before the Vandermonde
matrix is formed, which keeps the normal equations well conditioned and makes
the degenerate case (all paths in the same state, e.g. zero volatility)
collapse gracefully to the cross-sectional mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BasisError

_DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class BasisSpec:
    """Monomial basis in the (log) state up to ``degree``."""

    degree: int
    log_state: bool = True

    def describe(self) -> str:
        var = "log eta" if self.log_state else "eta"
        return f"poly({var}, degree={self.degree})"


def design_matrix(state: np.ndarray, degree: int, log_state: bool = True) -> np.ndarray:
    """Standardised Vandermonde matrix [1, z, ..., z^degree].

    Falls back to the intercept-only column when the state carries no
    cross-sectional variation.
    """
    z = np.log(state) if log_state else np.asarray(state, dtype=float)
    sd = z.std()
    if sd < _DEGENERATE_STD or degree == 0:
        return np.ones((len(z), 1))
    z = (z - z.mean()) / sd
    return np.column_stack([z ** d for d in range(degree + 1)])


def conditional_mean(
    state: np.ndarray, target: np.ndarray, degree: int, log_state: bool = True
) -> np.ndarray:
    """Fitted values of the least-squares projection of ``target`` on the basis.

    Raises :class:`BasisError` when the design matrix is rank deficient for a
    non-degenerate state (too few distinct state values for the degree).
    """
    x = design_matrix(state, degree, log_state)
    coef, _, rank, _ = np.linalg.lstsq(x, target, rcond=None)
    if rank < x.shape[1]:
        raise BasisError(
            f"rank {rank} design for {x.shape[1]} basis functions; lower the degree"
        )
    return x @ coef


def flatness_statistic(
    state: np.ndarray, increments: np.ndarray, degree: int = 1, log_state: bool = False
) -> float:
    """Largest |t|-statistic of the regression of increments on the state basis.

    Under a martingale null every coefficient (intercept included) has mean
    zero, so the statistic is approximately the maximum of standard normals.
    A systematic conditional drift aligned with the state shows up as a large
    coefficient t-value.  Exactly vanishing residual variance (deterministic
    increments that the basis reproduces) returns 0.
    """
    x = design_matrix(state, degree, log_state)
    coef, _, rank, _ = np.linalg.lstsq(x, increments, rcond=None)
    if rank < x.shape[1]:
        raise BasisError("rank-deficient design in flatness test; lower the degree")
    resid = increments - x @ coef
    n, k = x.shape
    if n <= k:
        raise BasisError("not enough paths for the requested basis degree")
    scale = max(float(np.abs(increments).max()), 1.0)
    sigma2 = float(resid @ resid) / (n - k)
    if sigma2 <= (1e-14 * scale) ** 2:
        return 0.0
    cov = sigma2 * np.linalg.inv(x.T @ x)
    tstats = coef / np.sqrt(np.diag(cov))
    return float(np.abs(tstats).max())
