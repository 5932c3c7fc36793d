"""Monte Carlo simulation of the controlled regime-switching jump-diffusion.

Each path owns three counter-based Philox streams keyed by (seed, path index,
purpose): regime switches, Gaussian increments and jumps. Paths are therefore
independent of evaluation order and worker count, and different policies
simulated with the same seed see identical noise (common random numbers).

Scheme per path:

* regime switches are drawn exactly (exponential holding times, embedded
  jump chain) and the Euler grid of step ``dt`` is split at switch times;
* on each sub-step of length tau in regime i
  ``X <- X (1 + (mu_i - gamma_i d) tau + v_i sqrt(tau) Z) - rho u1 tau``, where
  d is the small-jump compensator base and v_i^2 = sigma_i^2 + gamma_i^2 g adds
  the Gaussian substitute for jumps below the truncation level;
* sampled jumps inside the sub-step multiply X by (1 + gamma_i z);
* a non-positive price is absorbed at 0;
* discounted payoff rates are accumulated with the left-point rule.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Sequence

import numpy as np

from . import _kernel
from .equilibrium import Equilibrium, fk_matrix, payoff_rate_coeffs, stability_abscissa
from .errors import ValidationError
from .levy import JumpPlan, jump_sampler_plan
from .model import Contract, MarketModel, SimConfig, ValidationIssue, validate_model
from .oracle import stationary_value, truncated_value

log = logging.getLogger(__name__)

TAG_REGIME = 0
TAG_DIFFUSION = 1
TAG_JUMP = 2

CSV_HEADER = "t,x,regime,u1,u2,disc_L1,disc_L2"


def stream(seed: int, path_index: int, tag: int) -> np.random.Generator:
    """Philox generator keyed by (seed, path_index, tag); counter starts at 0."""
    key = (seed & 0xFFFFFFFFFFFFFFFF) | ((path_index * 4 + tag) << 64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True, eq=False)
class Policy:
    """Proportional extraction u1 = clip(K(i) x, 0, u1_max) and open-loop tax u2(i)."""

    gain: np.ndarray
    tax: np.ndarray
    u1_max: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "gain", np.asarray(self.gain, dtype=float))
        object.__setattr__(self, "tax", np.asarray(self.tax, dtype=float))

    @classmethod
    def from_equilibrium(cls, eq: Equilibrium, contract: Contract) -> "Policy":
        return cls(eq.k, np.asarray(eq.u2), contract.u1_max)

    def extraction(self, x: float, regime: int) -> float:
        """Extraction rate at price x in (1-based) regime."""
        return float(min(max(self.gain[regime - 1] * x, 0.0), self.u1_max))

    def tax_rate(self, regime: int) -> float:
        return float(self.tax[regime - 1])


@dataclass(frozen=True, eq=False)
class Path:
    """One simulated path on the refined grid; regimes are 1-based."""

    times: np.ndarray
    prices: np.ndarray
    regimes: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    discounted_payoffs: np.ndarray  # (n, 2) running int_0^t e^{-rs} L_j ds

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for t, x, reg, u1, u2, (l1, l2) in zip(
            self.times, self.prices, self.regimes, self.u1, self.u2, self.discounted_payoffs
        ):
            lines.append(f"{t:.17g},{x:.17g},{int(reg)},{u1:.17g},{u2:.17g},{l1:.17g},{l2:.17g}")
        return "\n".join(lines) + "\n"

    def write_csv(self, file: str | FilePath) -> None:
        FilePath(file).write_text(self.to_csv())


@dataclass(frozen=True, eq=False)
class PayoffEstimate:
    mean: np.ndarray
    std_error: np.ndarray
    n_paths: int
    horizon: float

    @classmethod
    def from_samples(cls, samples: np.ndarray, horizon: float) -> "PayoffEstimate":
        """samples: (n_paths, 2) per-path discounted payoffs."""
        n = samples.shape[0]
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(2)
        return cls(mean, se, n, horizon)


@dataclass(frozen=True, eq=False)
class SimulationBatch:
    """Per-path results for several policies sharing the same random inputs."""

    payoffs: np.ndarray  # (n_paths, n_policies, 2)
    terminal_x: np.ndarray  # (n_paths, n_policies)
    terminal_regime: np.ndarray  # (n_paths,), 1-based
    absorbed: int
    horizon: float

    def estimate(self, policy_index: int = 0) -> PayoffEstimate:
        return PayoffEstimate.from_samples(self.payoffs[:, policy_index, :], self.horizon)


@dataclass(frozen=True)
class _Setup:
    x0: float
    reg0: int
    horizon: float
    dt: float
    n_steps: int
    drift: np.ndarray
    vol: np.ndarray
    gam: np.ndarray
    exit_rates: np.ndarray
    jump_probs: np.ndarray
    last_target: np.ndarray
    plan: JumpPlan
    r: float
    theta: float
    a: float
    rho: float
    u1_max: float
    gains: np.ndarray
    taxes: np.ndarray
    seed: int
    block: int = 32


def _prepare(model: MarketModel, contract: Contract, policies: Sequence[Policy], sim: SimConfig) -> _Setup:
    report = validate_model(model, contract, sim)
    m = model.m
    for n, pol in enumerate(policies):
        if pol.gain.shape != (m,) or pol.tax.shape != (m,):
            report.add(f"policy[{n}]", f"gain and tax must have length {m}")
        elif np.any(pol.tax < contract.u2_min) or np.any(pol.tax > contract.u2_max):
            report.add(f"policy[{n}].tax", "tax rates must lie within [u2_min, u2_max]")
        if pol.u1_max != policies[0].u1_max:
            report.add(f"policy[{n}].u1_max", "all policies in a batch must share u1_max")
    report.raise_if_invalid()

    plan = jump_sampler_plan(model.levy, sim.trunc_eps)
    gam = model.gamma
    exit_rates = model.exit_rates
    off = model.q - np.diag(np.diag(model.q))
    with np.errstate(divide="ignore", invalid="ignore"):
        probs = np.where(exit_rates[:, None] > 0, off / exit_rates[:, None], 0.0)
    n_steps = max(1, math.ceil(sim.horizon / sim.dt - 1e-9))
    expected_switches = float(np.max(exit_rates)) * sim.horizon if m > 1 else 0.0
    return _Setup(
        x0=float(sim.x0),
        reg0=sim.i0 - 1,
        horizon=float(sim.horizon),
        dt=float(sim.dt),
        n_steps=n_steps,
        drift=model.mu - gam * plan.drift_comp,
        vol=np.sqrt(model.sigma**2 + gam**2 * plan.gauss_var),
        gam=gam,
        exit_rates=exit_rates,
        jump_probs=np.cumsum(probs, axis=1),
        last_target=np.array([np.flatnonzero(row > 0)[-1] if np.any(row > 0) else -1 for row in probs]),
        plan=plan,
        r=contract.r,
        theta=contract.theta,
        a=contract.a,
        rho=contract.rho,
        u1_max=float(policies[0].u1_max),
        gains=np.array([p.gain for p in policies]),
        taxes=np.array([p.tax for p in policies]),
        seed=sim.seed,
        block=max(32, int(2 * expected_switches) + 8),
    )


def _regime_switches(s: _Setup, gen: np.random.Generator):
    times: list[float] = []
    states: list[int] = []
    t = 0.0
    i = s.reg0
    rates = s.exit_rates.tolist()
    hold: list[float] = []
    pick: list[float] = []
    while rates[i] > 0:
        if not hold:
            hold = gen.standard_exponential(s.block).tolist()[::-1]
            pick = gen.random(s.block).tolist()[::-1]
        t += hold.pop() / rates[i]
        u = pick.pop()
        if t >= s.horizon:
            break
        j = int(np.searchsorted(s.jump_probs[i], u, side="right"))
        if j >= len(rates) or j == i:
            j = int(s.last_target[i])  # u beyond the rounded row total
        times.append(t)
        states.append(j)
        i = j
    return np.array(times, dtype=float), np.array(states, dtype=np.int64)


def _jumps(s: _Setup, gen: np.random.Generator):
    plan = s.plan
    if plan.rate == 0:
        return np.zeros(0), np.zeros(0)
    n = int(gen.poisson(plan.rate * s.horizon))
    # sorted uniform arrival times from normalized exponential spacings
    spacings = gen.standard_exponential(n + 1)
    times = s.horizon * np.cumsum(spacings[:n]) / spacings.sum()
    sizes = plan.size_sampler.sample(gen, n)
    return times, sizes


def _run(s: _Setup, path_index: int, out_pay, out_x, record=False, rec=None):
    sw_times, sw_states = _regime_switches(s, stream(s.seed, path_index, TAG_REGIME))
    normals = stream(s.seed, path_index, TAG_DIFFUSION).standard_normal(s.n_steps + len(sw_times))
    jump_times, jump_sizes = _jumps(s, stream(s.seed, path_index, TAG_JUMP))
    if rec is None:
        rec = _kernel.empty_record()
    return _kernel.run_path(
        s.x0, s.reg0, s.horizon, s.dt, s.n_steps,
        sw_times, sw_states, normals, jump_times, jump_sizes,
        s.drift, s.vol, s.gam, s.r, s.theta, s.a, s.rho, s.u1_max,
        s.gains, s.taxes, out_pay, out_x, record, rec,
    ), len(sw_times)


def simulate_batch(
    model: MarketModel,
    contract: Contract,
    policies: Sequence[Policy],
    sim: SimConfig,
    workers: int = 1,
    path_offset: int = 0,
) -> SimulationBatch:
    """Simulate ``sim.n_paths`` paths under every policy with shared randomness.

    The result does not depend on ``workers``: each path writes to its own
    slot and the streams are keyed by path index.
    """
    s = _prepare(model, contract, policies, sim)
    n, n_pol = sim.n_paths, len(policies)
    payoffs = np.zeros((n, n_pol, 2))
    terminal_x = np.zeros((n, n_pol))
    terminal_reg = np.zeros(n, dtype=np.int64)
    absorbed = np.zeros(n, dtype=np.int64)

    def work(lo, hi):
        for p in range(lo, hi):
            (reg, n_abs, _), _ = _run(s, path_offset + p, payoffs[p], terminal_x[p])
            terminal_reg[p] = reg + 1
            absorbed[p] = n_abs

    if workers <= 1:
        work(0, n)
    else:
        bounds = np.linspace(0, n, 4 * workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(work, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]:
                f.result()
    total_abs = int(absorbed.sum())
    if total_abs:
        log.warning("%d absorption event(s): a jump or Euler step drove the price below 0", total_abs)
    return SimulationBatch(payoffs, terminal_x, terminal_reg, total_abs, s.horizon)


def estimate_payoffs(
    model: MarketModel, contract: Contract, policy: Policy, sim: SimConfig, workers: int = 1
) -> PayoffEstimate:
    """Mean and standard error of both players' discounted payoffs up to ``sim.horizon``."""
    if sim.n_paths < 2:
        raise ValidationError([ValidationIssue("sim.n_paths", "at least 2 paths are needed for an estimate")])
    return simulate_batch(model, contract, [policy], sim, workers).estimate(0)


def simulate_path(model: MarketModel, contract: Contract, policy: Policy, sim: SimConfig, path_index: int) -> Path:
    """Full record of path ``path_index``; identical to that path inside a batch."""
    s = _prepare(model, contract, [policy], sim)
    gen = stream(s.seed, path_index, TAG_REGIME)
    n_sw = len(_regime_switches(s, gen)[0])
    rec = np.zeros((s.n_steps + n_sw + 1, _kernel.REC_COLS))
    (_, _, n_nodes), _ = _run(s, path_index, np.zeros((1, 2)), np.zeros(1), True, rec)
    rec = rec[:n_nodes]
    return Path(
        times=rec[:, 0].copy(),
        prices=rec[:, 1].copy(),
        regimes=rec[:, 2].astype(np.int64),
        u1=rec[:, 3].copy(),
        u2=rec[:, 4].copy(),
        discounted_payoffs=rec[:, 5:7].copy(),
    )


# ---------------------------------------------------------------------------
# Nash deviation checks


@dataclass(frozen=True)
class DeviationResult:
    label: str
    player: int
    oracle_diff: float
    oracle_basis: str
    horizon_diff: float
    mc_diff: float
    mc_se: float
    passed: bool


@dataclass
class DeviationReport:
    x0: float
    i0: int
    baseline_estimate: PayoffEstimate
    results: list[DeviationResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


def _oracle_value(model, contract, pol: Policy, player: int, sim: SimConfig):
    """(infinite-horizon value or truncated if unstable, basis, value at sim.horizon)."""
    h = fk_matrix(pol.gain, pol.tax, model, contract)
    c = payoff_rate_coeffs(pol.gain, pol.tax, contract)[player - 1]
    scale = sim.x0**2
    at_horizon = truncated_value(h, c, sim.horizon).coeffs[sim.i0 - 1] * scale
    if stability_abscissa(h) < 0:
        return stationary_value(h, c)[sim.i0 - 1] * scale, "stationary", at_horizon
    return at_horizon, "truncated", at_horizon


def deviation_policies(equilibrium: Equilibrium, contract: Contract, scales: Sequence[float]):
    """(label, player, policy) for proportional player-1 and bound-flip player-2 deviations."""
    base_tax = np.asarray(equilibrium.u2)
    out = []
    for kappa in scales:
        if not kappa > 0:
            raise ValueError("deviation scales must be > 0")
        out.append((f"player 1: K -> {kappa:g} K", 1, Policy(kappa * equilibrium.k, base_tax, contract.u1_max)))
    for i in range(len(base_tax)):
        tax = base_tax.copy()
        tax[i] = contract.u2_min if tax[i] == contract.u2_max else contract.u2_max
        out.append(
            (f"player 2: u2({i + 1}) {base_tax[i]:g} -> {tax[i]:g}", 2, Policy(equilibrium.k, tax, contract.u1_max))
        )
    return out


def deviation_test(
    model: MarketModel,
    contract: Contract,
    equilibrium: Equilibrium,
    scales: Sequence[float],
    sim: SimConfig,
    workers: int = 1,
    batch: SimulationBatch | None = None,
) -> DeviationReport:
    """Compare unilateral deviations with the equilibrium, by oracle and by Monte Carlo.

    A deviation passes when the oracle payoff difference of the deviating
    player is <= 0 (infinite horizon when H is stable) and the paired Monte
    Carlo difference lies within three of its standard errors of the oracle
    difference at the simulated horizon. All policies share random numbers.
    ``batch`` may carry a precomputed simulation of ``[equilibrium policy] +
    deviation policies`` in the order of :func:`deviation_policies`.
    """
    base = Policy.from_equilibrium(equilibrium, contract)
    devs = deviation_policies(equilibrium, contract, scales)
    if batch is None:
        batch = simulate_batch(model, contract, [base] + [d[2] for d in devs], sim, workers)
    report = DeviationReport(sim.x0, sim.i0, batch.estimate(0))
    for n, (label, player, pol) in enumerate(devs, start=1):
        v_base, basis_a, t_base = _oracle_value(model, contract, base, player, sim)
        v_dev, basis_b, t_dev = _oracle_value(model, contract, pol, player, sim)
        basis = basis_a if basis_a == basis_b else "mixed"
        oracle_diff = float(v_dev - v_base)
        horizon_diff = float(t_dev - t_base)
        diffs = batch.payoffs[:, n, player - 1] - batch.payoffs[:, 0, player - 1]
        mc_diff = float(diffs.mean())
        mc_se = float(diffs.std(ddof=1) / math.sqrt(len(diffs))) if len(diffs) > 1 else 0.0
        slack = 1e-12 * max(1.0, abs(v_base))
        passed = oracle_diff <= slack and abs(mc_diff - horizon_diff) <= 3.0 * mc_se + slack
        report.results.append(
            DeviationResult(label, player, oracle_diff, basis, horizon_diff, mc_diff, mc_se, passed)
        )
    return report
