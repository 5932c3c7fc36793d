"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line before asserting.
"""

import dataclasses
import json
import math
import time

import numpy as np
import pytest

from extraction_game.cli import main
from extraction_game.equilibrium import (
    TaxAssignment,
    find_equilibrium,
    fk_matrix,
    payoff_rate_coeffs,
    profit_factor,
    solve_a1,
    solve_a2,
)
from extraction_game.levy import jump_integral, jump_integral_quadrature
from extraction_game.model import LevyMeasureSpec
from extraction_game.oracle import policy_value, second_moments, stationary_value, truncated_value
from extraction_game.sim import Policy, deviation_policies, deviation_test, simulate_batch

from conftest import MEDIUM

U02 = TaxAssignment.uniform(0.2, 2)
U0 = TaxAssignment.uniform(0.0, 2)
SCALES = (0.5, 0.8, 1.2, 1.5)
WORKERS = 4


def verdict(n, ok, detail):
    print(f"\ncriterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def best_time(fn, repeat=20):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


@pytest.fixture(scope="module")
def medium_batch(medium):
    """One common-random-number batch: equilibrium policy followed by its deviations."""
    model, contract, sim = medium
    eq = find_equilibrium(model, contract)
    policies = [Policy.from_equilibrium(eq, contract)] + [p for _, _, p in deviation_policies(eq, contract, SCALES)]
    t0 = time.perf_counter()
    batch = simulate_batch(model, contract, policies, sim, workers=WORKERS)
    return eq, batch, time.perf_counter() - t0


def test_criterion_01_medium_coefficients(medium):
    model, contract, _ = medium
    (a_hi,) = solve_a1(U02, model, contract)
    (a_lo,) = solve_a1(U0, model, contract)
    elapsed = best_time(lambda: solve_a1(U02, model, contract))
    ok = (
        np.max(np.abs(a_hi - [0.2535, 0.1288])) <= 1e-3
        and np.max(np.abs(a_lo - [0.3169, 0.1610])) <= 1e-3
        and elapsed < 1e-3
    )
    verdict(1, ok, f"a1(u2=0.2)={a_hi.round(6).tolist()} a1(u2=0)={a_lo.round(6).tolist()} time={elapsed * 1e3:.3f} ms")


def test_criterion_02_medium_equilibrium(medium):
    eq = find_equilibrium(*medium[:2])
    ok = tuple(eq.u2) == (0.2, 0.2) and eq.k.tolist() == [1 / 30, 1 / 30]
    verdict(2, ok, f"u2*={tuple(eq.u2)} K={eq.k.tolist()}")


def test_criterion_03_major_roots(major):
    model, contract, _ = major
    roots = solve_a1(U02, model, contract)
    eq = find_equilibrium(model, contract)
    ok = len(roots) == 2
    if ok:
        ok = np.allclose(roots[0], [37.2674, 29.6747], rtol=5e-3, atol=0) and np.allclose(
            roots[1], [194.783, 155.06], rtol=5e-3, atol=0
        )
    ok = ok and np.array_equal(eq.a1, roots[0])
    ok = ok and np.max(np.abs(eq.k - [0.133539, 0.157267])) <= 1e-4
    s = profit_factor(eq.k, contract)
    ok = ok and np.max(np.abs(s - [0.0978738, 0.107801])) <= 1e-5
    verdict(3, ok, f"{len(roots)} real roots {[r.round(4).tolist() for r in roots]} K={eq.k.round(6).tolist()} "
            f"K-aK^2={s.round(7).tolist()}")


def test_criterion_04_major_government(major):
    model, contract, _ = major
    printed = solve_a2([0.133539, 0.157267], U02, model, contract)
    exact = find_equilibrium(model, contract).a2
    target = np.array([195.654, 155.792])
    ok = np.all(np.abs(printed / target - 1) <= 0.01) and np.all(np.abs(exact / target - 1) <= 0.01)
    verdict(4, ok, f"A2(printed K)={printed.round(3).tolist()} A2(full precision)={exact.round(3).tolist()}")


def test_criterion_05_feynman_kac(medium, major):
    details, ok = [], True
    for cfg in (medium, major):
        model, contract, _ = cfg
        eq = find_equilibrium(model, contract)

        def check():
            h = fk_matrix(eq.k, eq.u2, model, contract)
            c1, c2 = payoff_rate_coeffs(eq.k, eq.u2, contract)
            return np.max(np.abs(h @ eq.a1 + c1)), np.linalg.solve(-h, c2)

        res, a2 = check()
        rel = np.max(np.abs(a2 - eq.a2)) / np.max(np.abs(eq.a2))
        elapsed = best_time(check)
        ok &= res <= 1e-10 * (1 + np.max(np.abs(eq.a1))) and rel <= 1e-12 and elapsed < 1e-3
        details.append(f"residual={res:.2e} a2 rel={rel:.1e} time={elapsed * 1e3:.3f} ms")
    verdict(5, ok, "; ".join(details))


def test_criterion_06_jump_integral():
    cases = [(LevyMeasureSpec.exponential(eta), g) for eta in (1.0, 5.0, 10.0) for g in (0.01, 0.05, 0.09)]
    cases += [(LevyMeasureSpec.heavy_symmetric(), g) for g in (0.022, 0.03)]
    t0 = time.perf_counter()
    worst = max(abs(jump_integral(lv, g) - jump_integral_quadrature(lv, g)) for lv, g in cases)
    elapsed = time.perf_counter() - t0
    verdict(6, worst <= 1e-6 and elapsed < 1.0, f"{len(cases)} cases, max diff={worst:.2e}, time={elapsed:.3f} s")


def test_criterion_07_monte_carlo_medium(medium, medium_batch):
    model, contract, sim = medium
    eq, batch, elapsed = medium_batch
    est = batch.estimate(0)
    _, c2 = payoff_rate_coeffs(eq.k, eq.u2, contract)
    targets = [0.2535, stationary_value(eq.h, c2)[sim.i0 - 1] * sim.x0**2]
    ok = elapsed <= 300
    parts = []
    for j, target in enumerate(targets):
        tol = max(3 * est.std_error[j], 0.02 * abs(target))
        ok &= abs(est.mean[j] - target) <= tol
        parts.append(f"J{j + 1}={est.mean[j]:.5f}+-{est.std_error[j]:.5f} vs {target:.5f} (tol {tol:.5f})")
    verdict(7, ok, ", ".join(parts) + f", absorbed={batch.absorbed}, time={elapsed:.1f} s")


def test_criterion_08_monte_carlo_major(major):
    model, contract, sim = major
    eq = find_equilibrium(model, contract)
    est = simulate_batch(model, contract, [Policy.from_equilibrium(eq, contract)], sim, workers=WORKERS).estimate(0)
    ok, parts = True, []
    for j, c in enumerate(payoff_rate_coeffs(eq.k, eq.u2, contract)):
        ref = truncated_value(eq.h, c, sim.horizon).coeffs[sim.i0 - 1] * sim.x0**2
        ok &= abs(est.mean[j] - ref) <= 3 * est.std_error[j]
        parts.append(f"J{j + 1}={est.mean[j]:.5f}+-{est.std_error[j]:.5f} vs truncated {ref:.5f}")
    verdict(8, ok, ", ".join(parts))


def test_criterion_09_deviations(medium, medium_batch):
    model, contract, sim = medium
    eq, batch, _ = medium_batch
    ok, parts = True, []
    base = np.asarray(eq.a1)
    for kappa in SCALES:
        v = policy_value(model, contract, kappa * eq.k, eq.u2).v1
        ok &= bool(np.all(v < base)) and bool(np.all(v < [0.2535, 0.1288]))
        if kappa == 0.5:
            ok &= bool(np.allclose(v, [0.190125, 0.0966], atol=1e-4))
        parts.append(f"k={kappa:g}: {v.round(6).tolist()}")
    rep = deviation_test(model, contract, eq, SCALES, sim, batch=batch)
    for r in rep.results:
        # negative oracle difference and MC not significantly positive
        ok &= r.oracle_diff < 0 and r.mc_diff <= 3 * r.mc_se
        parts.append(f"{r.label}: oracle {r.oracle_diff:+.5f} MC {r.mc_diff:+.5f}+-{r.mc_se:.5f}")
    verdict(9, ok, "; ".join(parts))


def test_criterion_10_moments(medium):
    model, contract, sim = medium
    eq = find_equilibrium(model, contract)
    sim = dataclasses.replace(sim, horizon=5.0, dt=1e-3, n_paths=50_000)
    batch = simulate_batch(model, contract, [Policy.from_equilibrium(eq, contract)], sim, workers=WORKERS)
    ref = second_moments(model, contract, eq.k, sim.x0, sim.i0, sim.horizon)
    ok, parts = True, []
    for i in range(model.m):
        s = batch.terminal_x[:, 0] ** 2 * (batch.terminal_regime == i + 1)
        se = s.std(ddof=1) / math.sqrt(len(s))
        ok &= abs(s.mean() - ref[i]) <= 3 * se
        parts.append(f"regime {i + 1}: MC {s.mean():.5f}+-{se:.5f} vs ODE {ref[i]:.5f}")
    verdict(10, ok, ", ".join(parts))


def test_criterion_11_determinism(tmp_path):
    reports = []
    for n, workers in enumerate((1, WORKERS)):
        out = tmp_path / f"verify{n}.json"
        main(["verify", "--config", str(MEDIUM), "--paths", "2000", "--workers", str(workers), "--out", str(out)])
        reports.append(out.read_bytes())
    ok = reports[0] == reports[1] and len(json.loads(reports[0])["checks"]) > 0
    verdict(11, ok, f"two verify reports ({len(reports[0])} bytes) byte-identical: {reports[0] == reports[1]}")
