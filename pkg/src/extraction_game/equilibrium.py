"""Closed-form Nash equilibrium of the extraction/taxation game.

Both value functions are quadratic in the price, V_j(x, i) = A_j(i) x^2.
The company's coefficients solve a coupled system of quadratics (one per
regime), the extraction policy is linear, u1 = K(i) x, and the government's
tax is bang-bang in the sign of K - a K^2. Once K is fixed, the government's
coefficients solve a linear system built on the Feynman-Kac matrix H.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTax, NoEquilibrium, NoRealRoot, SingularSystem
from .levy import jump_integral
from .model import Contract, MarketModel

log = logging.getLogger(__name__)

ROOT_TOL = 1e-10
DEDUP_TOL = 1e-8
IMAG_TOL = 1e-6
MULTISTART_SCALES = (0.5, 1.0, 2.0, 4.0)
FK_TOL = 1e-8


@dataclass(frozen=True)
class TaxAssignment:
    """Open-loop, regime-dependent tax rates, each at one of the two bounds."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @classmethod
    def uniform(cls, value: float, m: int) -> "TaxAssignment":
        return cls((value,) * m)


@dataclass(frozen=True, eq=False)
class RootCandidate:
    """One real solution of the company's system together with its verdict."""

    u2: TaxAssignment
    a1: np.ndarray
    k: np.ndarray
    abscissa: float
    reasons: tuple[str, ...] = ()

    @property
    def admissible(self) -> bool:
        return not self.reasons


@dataclass(frozen=True, eq=False)
class Equilibrium:
    a1: np.ndarray
    a2: np.ndarray
    k: np.ndarray
    u2: TaxAssignment
    abscissa: float
    all_roots: list[np.ndarray]
    warnings: list[str] = field(default_factory=list)
    candidates: list[RootCandidate] = field(default_factory=list)
    h: np.ndarray | None = None
    fk_residual: float = 0.0


def _tax_array(u2) -> np.ndarray:
    u = np.asarray(u2, dtype=float)
    if np.any(u >= 1.0):
        raise DegenerateTax(f"tax rates must be < 1, got {u.tolist()}")
    return u


def _offdiag(q: np.ndarray) -> np.ndarray:
    return q - np.diag(np.diag(q))


def jump_terms(model: MarketModel) -> np.ndarray:
    return np.array([jump_integral(model.levy, g) for g in model.gamma])


def a1_coefficients(u2, model: MarketModel, contract: Contract):
    """Per-regime (quadratic, linear, constant) coefficients of the company's system.

    Regime i reads ``quad[i] a(i)^2 + lin[i] a(i) + const[i] + sum_{j!=i} q_ij a(j) = 0``.
    """
    u = _tax_array(u2)
    c = contract
    share = c.theta * (1.0 - u)
    quad = c.rho**2 / (c.a * share)
    lin = model.sigma**2 - c.r + 2.0 * model.mu - model.exit_rates - c.rho / c.a + jump_terms(model)
    const = share / (4.0 * c.a)
    return quad, lin, const


def a1_residual(a1, u2, model: MarketModel, contract: Contract) -> np.ndarray:
    quad, lin, const = a1_coefficients(u2, model, contract)
    a1 = np.asarray(a1, dtype=float)
    return quad * a1**2 + lin * a1 + const + _offdiag(model.q) @ a1


def _a1_jacobian(a1, quad, lin, q_off):
    return q_off + np.diag(2.0 * quad * a1 + lin)


def _converged(res, a1) -> bool:
    return np.max(np.abs(res)) <= ROOT_TOL * (1.0 + np.max(np.abs(a1)))


def _newton(a1, quad, lin, const, q_off, max_iter=100):
    """Damped Newton with backtracking on the sup-norm of the residual."""

    def resid(x):
        return quad * x**2 + lin * x + const + q_off @ x

    x = np.array(a1, dtype=float)
    r = resid(x)
    for _ in range(max_iter):
        if _converged(r, x):
            return x, True
        try:
            step = np.linalg.solve(_a1_jacobian(x, quad, lin, q_off), -r)
        except np.linalg.LinAlgError:
            return x, False
        norm0 = np.max(np.abs(r))
        t = 1.0
        while t > 1e-10:
            xn = x + t * step
            rn = resid(xn)
            if np.all(np.isfinite(rn)) and np.max(np.abs(rn)) < norm0:
                break
            t *= 0.5
        else:
            # no decrease possible: accept the full step once and let the
            # convergence test decide
            xn = x + step
            rn = resid(xn)
        x, r = xn, rn
    return x, bool(np.all(np.isfinite(r)) and _converged(r, x))


def companion_roots(coeffs) -> np.ndarray:
    """All roots of ``sum_k coeffs[k] z^k`` as eigenvalues of the companion matrix."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    deg = len(c) - 1
    if deg < 1:
        return np.empty(0, dtype=complex)
    mat = np.zeros((deg, deg))
    mat[1:, :-1] = np.eye(deg - 1)
    mat[:, -1] = -c[:-1] / c[-1]
    return np.linalg.eigvals(mat)


def _real_parts(roots) -> list[float]:
    return [float(z.real) for z in roots if abs(z.imag) <= IMAG_TOL * max(1.0, abs(z))]


def _two_regime_starts(quad, lin, const, q_off) -> list[np.ndarray]:
    """Seeds from eliminating one unknown and solving the resulting quartic."""
    q12, q21 = q_off[0, 1], q_off[1, 0]
    P = np.polynomial.polynomial
    if q12 == 0 and q21 == 0:
        r1 = _real_parts(companion_roots([const[0], lin[0], quad[0]]))
        r2 = _real_parts(companion_roots([const[1], lin[1], quad[1]]))
        return [np.array([x, y]) for x in r1 for y in r2]
    swap = q12 == 0
    if swap:
        quad, lin, const = quad[::-1], lin[::-1], const[::-1]
        q12, q21 = q21, q12
    # from regime 1: y = -(quad0 x^2 + lin0 x + const0) / q12
    y = -np.array([const[0], lin[0], quad[0]]) / q12
    quartic = P.polyadd(P.polyadd(quad[1] * P.polymul(y, y), lin[1] * y), [const[1], q21])
    starts = []
    for x in _real_parts(companion_roots(quartic)):
        pair = np.array([x, P.polyval(x, y)])
        starts.append(pair[::-1] if swap else pair)
    return starts


def _dedupe(roots):
    out: list[np.ndarray] = []
    for x in sorted(roots, key=lambda v: tuple(v)):
        if not any(np.max(np.abs(x - y)) <= DEDUP_TOL * max(1.0, np.max(np.abs(y))) for y in out):
            out.append(x)
    return out


def solve_a1(u2, model: MarketModel, contract: Contract) -> list[np.ndarray]:
    """All real solution vectors of the company's coefficient system.

    rho = 0 makes the system linear and the solution unique. For two regimes
    the system is reduced to a quartic whose roots come from the companion
    matrix; for more regimes a damped Newton iteration runs from the rho = 0
    solution scaled by +-{0.5, 1, 2, 4}. Every returned vector is polished so
    that its sup-norm residual is at most 1e-10 (1 + |a1|_inf). The result is
    sorted by the first component.

    Raises:
        NoRealRoot: no real solution was found.
        DegenerateTax: some tax rate is 1 or larger.
    """
    quad, lin, const = a1_coefficients(u2, model, contract)
    q_off = _offdiag(model.q)
    m = model.m
    linear = q_off + np.diag(lin)
    if contract.rho == 0:
        try:
            return [np.linalg.solve(linear, -const)]
        except np.linalg.LinAlgError as exc:
            raise NoRealRoot("linear coefficient system is singular") from exc

    if m == 1:
        starts = [np.array([x]) for x in _real_parts(companion_roots([const[0], lin[0], quad[0]]))]
    elif m == 2:
        starts = _two_regime_starts(quad, lin, const, q_off)
    else:
        try:
            base = np.linalg.solve(linear, -const)
        except np.linalg.LinAlgError:
            base = np.ones(m)
        starts = [s * sign * base for sign in (1.0, -1.0) for s in MULTISTART_SCALES]

    roots = []
    for x0 in starts:
        x, ok = _newton(x0, quad, lin, const, q_off)
        if ok:
            roots.append(x)
    roots = sorted(_dedupe(roots), key=lambda v: (v[0], tuple(v)))
    if not roots:
        raise NoRealRoot(f"no real solution for tax assignment {np.asarray(u2).tolist()}")
    return roots


def extraction_gain(a1, u2, contract: Contract) -> np.ndarray:
    """K(i) = 1/(2a) - rho A1(i) / (a theta (1 - u2(i)))."""
    u = _tax_array(u2)
    c = contract
    return 1.0 / (2.0 * c.a) - c.rho * np.asarray(a1, dtype=float) / (c.a * c.theta * (1.0 - u))


def profit_factor(k, contract: Contract) -> np.ndarray:
    """K - a K^2: profit rate per unit x^2 under u1 = K x."""
    k = np.asarray(k, dtype=float)
    return k * (1.0 - contract.a * k)


def tax_best_response(k, contract: Contract) -> TaxAssignment:
    """Bang-bang tax: the upper bound where extraction is profitable, else the lower.

    A profit factor within 1e-12 |K| of zero counts as a tie and picks the
    upper bound.
    """
    k = np.asarray(k, dtype=float)
    s = profit_factor(k, contract)
    tie = np.abs(s) <= 1e-12 * np.abs(k)
    pick_max = (s > 0) | tie
    return TaxAssignment(tuple(contract.u2_max if p else contract.u2_min for p in pick_max))


def fk_matrix(k, u2, model: MarketModel, contract: Contract) -> np.ndarray:
    """Generator of discounted second moments under u1 = K x (u2 is not used)."""
    k = np.asarray(k, dtype=float)
    p = (
        model.sigma**2
        - contract.r
        + 2.0 * (model.mu - contract.rho * k)
        - model.exit_rates
        + jump_terms(model)
    )
    return _offdiag(model.q) + np.diag(p)


def stability_abscissa(h) -> float:
    return float(np.max(np.linalg.eigvals(np.asarray(h, dtype=float)).real))


def payoff_rate_coeffs(k, u2, contract: Contract) -> tuple[np.ndarray, np.ndarray]:
    """Payoff rates along u1 = K x: L1 = c1(i) x^2 and L2 = c2(i) x^2."""
    u = np.asarray(u2, dtype=float)
    s = profit_factor(k, contract)
    th = contract.theta
    return th * (1.0 - u) * s, (1.0 - th + th * u) * s


def _check_nonsingular(h):
    scale = np.max(np.abs(h)) if h.size else 0.0
    if scale == 0 or abs(np.linalg.det(h)) <= 1e-14 * scale ** h.shape[0]:
        raise SingularSystem("Feynman-Kac matrix is singular")


def solve_a2(k, u2, model: MarketModel, contract: Contract) -> np.ndarray:
    """Government coefficients: solve H a2 = -c2."""
    h = fk_matrix(k, u2, model, contract)
    _check_nonsingular(h)
    _, c2 = payoff_rate_coeffs(k, u2, contract)
    return np.linalg.solve(-h, c2)


def a2_two_state(h, c2) -> np.ndarray:
    """Determinant formulas for two regimes with P = diag(H) and R = -c2."""
    h = np.asarray(h, dtype=float)
    p1, p2, q12, q21 = h[0, 0], h[1, 1], h[0, 1], h[1, 0]
    r1, r2 = -np.asarray(c2, dtype=float)
    det = p1 * p2 - q12 * q21
    return np.array([(r1 * p2 - q12 * r2) / det, (p1 * r2 - q21 * r1) / det])


def _fmt(v) -> str:
    return "(" + ", ".join(f"{x:.6g}" for x in v) + ")"


def _assess(a1, u2: TaxAssignment, model, contract) -> RootCandidate:
    k = extraction_gain(a1, u2, contract)
    h = fk_matrix(k, u2, model, contract)
    absc = stability_abscissa(h)
    reasons = []
    for i, v in enumerate(a1, start=1):
        if v < 0:
            reasons.append(f"A1({i}) < 0")
    for i, v in enumerate(k, start=1):
        if v < 0:
            reasons.append(f"K({i}) < 0")
    if not absc < 0:
        reasons.append(f"spectral abscissa {absc:.6g} >= 0")
    br = tax_best_response(k, contract)
    if br != u2:
        reasons.append(f"tax best response {_fmt(br)} differs from assumed {_fmt(u2)}")
    return RootCandidate(u2, np.asarray(a1, dtype=float), k, absc, tuple(reasons))


def find_equilibrium(model: MarketModel, contract: Contract, x_ref: float | None = None) -> Equilibrium:
    """Enumerate bang-bang tax assignments and keep the self-consistent admissible roots.

    A root is admissible when A1 >= 0, K >= 0 and the Feynman-Kac matrix has
    negative spectral abscissa; it is kept only if the tax best response to
    its K reproduces the assumed assignment. With several survivors the one
    with the largest A1(1) is returned and a warning lists the rest.

    Raises:
        NoEquilibrium: no (assignment, root) pair survives.
    """
    m = model.m
    candidates: list[RootCandidate] = []
    warnings: list[str] = []
    for combo in itertools.product((contract.u2_min, contract.u2_max), repeat=m):
        u2 = TaxAssignment(combo)
        try:
            roots = solve_a1(u2, model, contract)
        except NoRealRoot as exc:
            log.debug("assignment %s: %s", combo, exc)
            continue
        candidates.extend(_assess(a1, u2, model, contract) for a1 in roots)

    survivors = [c for c in candidates if c.admissible]
    if not survivors:
        raise NoEquilibrium("no self-consistent admissible (tax assignment, root) pair")
    survivors.sort(key=lambda c: -c.a1[0])
    best = survivors[0]
    if len(survivors) > 1:
        others = ", ".join(f"u2={_fmt(c.u2)} A1={_fmt(c.a1)}" for c in survivors[1:])
        warnings.append(f"{len(survivors)} admissible equilibria; selected the largest A1(1); others: {others}")

    u2, k = best.u2, best.k
    h = fk_matrix(k, u2, model, contract)
    c1, _ = payoff_rate_coeffs(k, u2, contract)
    a2 = solve_a2(k, u2, model, contract)
    fk_res = float(np.max(np.abs(h @ best.a1 + c1)))
    fk_a1 = np.linalg.solve(-h, c1)
    if np.max(np.abs(fk_a1 - best.a1)) > FK_TOL * max(1.0, np.max(np.abs(best.a1))):
        warnings.append(f"Feynman-Kac identity violated: (-H)^-1 c1 = {_fmt(fk_a1)} vs A1 = {_fmt(best.a1)}")
    if x_ref is not None:
        for i, kv in enumerate(k, start=1):
            if kv * x_ref > contract.u1_max:
                warnings.append(
                    f"extraction K({i}) x_ref = {kv * x_ref:.6g} exceeds u1_max = {contract.u1_max:.6g}"
                )
    for w in warnings:
        log.warning(w)
    return Equilibrium(
        a1=best.a1,
        a2=a2,
        k=k,
        u2=u2,
        abscissa=best.abscissa,
        all_roots=[c.a1 for c in candidates],
        warnings=warnings,
        candidates=candidates,
        h=h,
        fk_residual=fk_res,
    )
