"""Jump integrals of the supported Lévy measures and jump-sampling plans.

The second-moment generator of the price needs

    J(gamma) = integral over R of (2 gamma z + gamma^2 z^2 - 1{|z|<1} 2 gamma z) nu(dz),

which is available in closed form for both supported measures. The quadrature
routine evaluates the same integral straight from the density and serves as an
independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import QuadratureFailure, ValidationError
from .model import EXPONENTIAL, HEAVY_SYMMETRIC, NO_JUMPS, LevyMeasureSpec, ValidationIssue

TABLE_NODES = 4096
TABLE_ZMAX = 50.0


def jump_integral(levy: LevyMeasureSpec, gamma: float) -> float:
    """Closed-form jump contribution to the second-moment growth rate."""
    if gamma == 0 or levy.kind == NO_JUMPS:
        return 0.0
    if levy.kind == EXPONENTIAL:
        eta = levy.eta
        return 2.0 * gamma * (gamma + (1.0 + eta) * eta * math.exp(-eta)) / eta**2
    if levy.kind == HEAVY_SYMMETRIC:
        # odd part vanishes by symmetry; z^2 nu(dz) = exp(-|z|) dz integrates to 2
        return 2.0 * gamma**2
    raise ValueError(f"unknown Lévy measure kind {levy.kind!r}")


def jump_integral_quadrature(levy: LevyMeasureSpec, gamma: float, tol: float = 1e-8) -> float:
    """Adaptive quadrature of the jump integral directly from the Lévy density.

    The odd part is integrated as a symmetric principal value,
    int_1^inf 2 gamma z (nu(z) - nu(-z)) dz, and the even part as
    int_0^inf gamma^2 z^2 (nu(z) + nu(-z)) dz.

    Raises:
        QuadratureFailure: the error estimate exceeds ``tol * max(1, |J|)``.
    """
    if not 0 < tol <= 1e-3:
        raise ValueError("tol must lie in (0, 1e-3]")
    if gamma == 0 or levy.kind == NO_JUMPS:
        return 0.0
    dens = levy.density

    def even(z):
        return gamma**2 * z * z * (dens(z) + dens(-z))

    def odd(z):
        return 2.0 * gamma * z * (dens(z) - dens(-z))

    pieces = [
        integrate.quad(even, 0.0, 1.0, epsabs=tol * 1e-3, epsrel=tol, limit=200),
        integrate.quad(even, 1.0, np.inf, epsabs=tol * 1e-3, epsrel=tol, limit=200),
        integrate.quad(odd, 1.0, np.inf, epsabs=tol * 1e-3, epsrel=tol, limit=200),
    ]
    value = math.fsum(p[0] for p in pieces)
    err = sum(p[1] for p in pieces)
    if not err <= tol * max(1.0, abs(value)):
        raise QuadratureFailure(f"error estimate {err:.3g} exceeds tolerance {tol:.3g}")
    return value


def small_jump_compensator(levy: LevyMeasureSpec, gamma: float) -> float:
    """gamma * int_{|z|<1} z nu(dz): drift removed because small jumps enter compensated."""
    if gamma == 0 or levy.kind != EXPONENTIAL:
        return 0.0
    return gamma * _exp_small_mean(levy.eta)


def _exp_small_mean(eta: float) -> float:
    # int_0^1 z eta e^{-eta z} dz
    return (1.0 - (1.0 + eta) * math.exp(-eta)) / eta


def heavy_tail_mass(z):
    """int_z^inf exp(-s)/s^2 ds for z > 0."""
    z = np.asarray(z, dtype=float)
    return np.exp(-z) / z - special.exp1(z)


def heavy_truncated_cdf(z, eps: float):
    """CDF of |jump| for the heavy symmetric measure restricted to [eps, TABLE_ZMAX]."""
    z = np.clip(np.asarray(z, dtype=float), eps, TABLE_ZMAX)
    g_eps = heavy_tail_mass(eps)
    return (g_eps - heavy_tail_mass(z)) / (g_eps - heavy_tail_mass(TABLE_ZMAX))


@dataclass(frozen=True, eq=False)
class JumpSizeSampler:
    """Named jump-size family, or a tabulated inverse CDF for ``symmetric_table``."""

    family: str
    eta: float | None = None
    cdf_nodes: np.ndarray | None = None
    z_nodes: np.ndarray | None = None

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n == 0 or self.family == "none":
            return np.zeros(n)
        if self.family == "exponential":
            return rng.standard_exponential(n) / self.eta
        if self.family == "symmetric_table":
            mag = np.interp(rng.random(n), self.cdf_nodes, self.z_nodes)
            sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            return sign * mag
        raise ValueError(f"unknown family {self.family!r}")


@dataclass(frozen=True)
class JumpPlan:
    """How to sample the jump component of a Lévy measure.

    ``rate`` is the intensity of sampled jumps per year. ``gauss_var`` and
    ``drift_comp`` are gamma-independent bases: the simulator adds
    ``gamma**2 * gauss_var`` to the diffusion variance (small jumps replaced
    by a Gaussian) and subtracts ``gamma * drift_comp`` from the drift (the
    compensation of jumps with |z| < 1 that are sampled explicitly).
    """

    rate: float
    size_sampler: JumpSizeSampler
    gauss_var: float
    drift_comp: float


def jump_sampler_plan(levy: LevyMeasureSpec, eps: float | None = None) -> JumpPlan:
    if eps is not None and not 0 < eps < 1:
        raise ValidationError([ValidationIssue("sim.trunc_eps", f"must lie in (0, 1), got {eps!r}")])
    if levy.kind == NO_JUMPS:
        return JumpPlan(0.0, JumpSizeSampler("none"), 0.0, 0.0)
    if levy.kind == EXPONENTIAL:
        return JumpPlan(1.0, JumpSizeSampler("exponential", eta=levy.eta), 0.0, _exp_small_mean(levy.eta))
    if levy.kind == HEAVY_SYMMETRIC:
        if eps is None:
            raise ValidationError([ValidationIssue("sim.trunc_eps", "required for heavy_symmetric jumps")])
        z = np.geomspace(eps, TABLE_ZMAX, TABLE_NODES)
        cdf = heavy_truncated_cdf(z, eps)
        cdf[0], cdf[-1] = 0.0, 1.0
        z.setflags(write=False)
        cdf.setflags(write=False)
        one_side = float(heavy_tail_mass(eps) - heavy_tail_mass(TABLE_ZMAX))
        return JumpPlan(
            rate=2.0 * one_side,
            size_sampler=JumpSizeSampler("symmetric_table", cdf_nodes=cdf, z_nodes=z),
            gauss_var=2.0 * -math.expm1(-eps),
            drift_comp=0.0,
        )
    raise ValueError(f"unknown Lévy measure kind {levy.kind!r}")
