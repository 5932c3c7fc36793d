"""Semi-analytic valuation of proportional policies through second moments.

Under u1 = K(i) x the discounted second moments obey the linear system
v' = H v + c, so the value of a quadratic payoff rate c(i) x^2 accrued up to
time T is v_T(i) x^2 with v_T = int_0^T exp(H s) c ds. This module is used to
cross-check the closed-form equilibrium and as the Monte Carlo reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .equilibrium import fk_matrix, payoff_rate_coeffs, stability_abscissa
from .errors import UnstableSystem
from .model import Contract, MarketModel


@dataclass(frozen=True, eq=False)
class TruncatedValue:
    horizon: float
    coeffs: np.ndarray
    tail_bound: float
    tail_valid: bool


def truncated_value(h, c, T: float, tol: float = 1e-10) -> TruncatedValue:
    """Integrate v' = H v + c from v(0) = 0 to T with an 8th-order Runge-Kutta method.

    ``tail_bound`` is |exp(H T) (-H)^{-1} c|_inf, the distance to the
    stationary value; it is only meaningful (``tail_valid``) when H has
    negative spectral abscissa.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if not 0 < tol <= 1e-4:
        raise ValueError("tol must lie in (0, 1e-4]")
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    m = len(c)
    if T == 0:
        v = np.zeros(m)
    else:
        sol = solve_ivp(
            lambda _t, v: h @ v + c,
            (0.0, T),
            np.zeros(m),
            method="DOP853",
            rtol=tol,
            atol=tol * 1e-3,
        )
        if not sol.success:
            raise ArithmeticError(sol.message)
        v = sol.y[:, -1]
    if stability_abscissa(h) < 0:
        tail = float(np.max(np.abs(expm(h * T) @ np.linalg.solve(-h, c)))) if m else 0.0
        return TruncatedValue(T, v, tail, True)
    return TruncatedValue(T, v, math.nan, False)


def stationary_value(h, c) -> np.ndarray:
    """T -> infinity limit, (-H)^{-1} c.

    Raises:
        UnstableSystem: spectral abscissa of H is >= 0.
    """
    h = np.asarray(h, dtype=float)
    absc = stability_abscissa(h)
    if not absc < 0:
        raise UnstableSystem(f"spectral abscissa {absc:.6g} >= 0; discounted value diverges")
    return np.linalg.solve(-h, np.asarray(c, dtype=float))


def propagator(h, T: float, tol: float = 1e-10) -> np.ndarray:
    """exp(H T), obtained by integrating Phi' = H Phi column by column."""
    h = np.asarray(h, dtype=float)
    m = h.shape[0]
    if T == 0:
        return np.eye(m)
    sol = solve_ivp(
        lambda _t, y: (h @ y.reshape(m, m)).ravel(),
        (0.0, T),
        np.eye(m).ravel(),
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-3,
    )
    if not sol.success:
        raise ArithmeticError(sol.message)
    return sol.y[:, -1].reshape(m, m)


def second_moments(model: MarketModel, contract: Contract, k, x0: float, i0: int, T: float) -> np.ndarray:
    """E[X_T^2 1{alpha_T = j}] for j = 1..m, starting from (x0, regime i0 (1-based))."""
    h0 = fk_matrix(k, None, model, contract) + contract.r * np.eye(model.m)
    return x0**2 * propagator(h0, T)[i0 - 1]


@dataclass(frozen=True, eq=False)
class PolicyValue:
    """Stationary coefficients of both players for a proportional policy pair."""

    h: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray


def policy_value(model: MarketModel, contract: Contract, k, u2) -> PolicyValue:
    h = fk_matrix(k, u2, model, contract)
    c1, c2 = payoff_rate_coeffs(k, u2, contract)
    return PolicyValue(h, c1, c2, stationary_value(h, c1), stationary_value(h, c2))
