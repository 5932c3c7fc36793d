import dataclasses
import math

import numpy as np
import pytest
from scipy.linalg import expm

from extraction_game.equilibrium import find_equilibrium
from extraction_game.errors import ValidationError
from extraction_game.model import LevyMeasureSpec, MarketModel, SimConfig, regimes_from_arrays
from extraction_game.oracle import second_moments
from extraction_game.sim import (
    CSV_HEADER,
    TAG_DIFFUSION,
    TAG_JUMP,
    Policy,
    deviation_test,
    estimate_payoffs,
    simulate_batch,
    simulate_path,
    stream,
)

from conftest import deterministic_sim, single_regime

K30 = Policy([1 / 30], [0.2])


def test_deterministic_growth():
    model, contract = single_regime(mu=0.05, sigma=0.0)
    path = simulate_path(model, contract, K30, deterministic_sim(horizon=1.0, dt=1e-3), 0)
    assert path.times[-1] == 1.0
    assert abs(path.prices[-1] - math.exp(0.05)) < 1e-4
    np.testing.assert_allclose(path.prices, np.exp(0.05 * path.times), rtol=1e-4)


def test_deterministic_payoff():
    model, contract = single_regime(mu=0.05, sigma=0.0, r=0.2)
    est = estimate_payoffs(model, contract, K30, deterministic_sim(horizon=200.0, dt=1e-3))
    assert est.mean[0] == pytest.approx(0.04, abs=1e-3)
    assert not est.std_error.any()


def test_first_order_convergence():
    model, contract = single_regime(mu=0.05, sigma=0.0, r=0.2)
    j = [
        estimate_payoffs(model, contract, K30, deterministic_sim(horizon=20.0, dt=dt)).mean[0]
        for dt in (0.04, 0.02, 0.01)
    ]
    d1, d2 = abs(j[0] - j[1]), abs(j[1] - j[2])
    assert d2 < d1
    assert d1 / d2 == pytest.approx(2.0, rel=0.1)


def test_gamma_ignored_without_measure():
    sim = SimConfig(x0=1.0, i0=1, horizon=2.0, dt=0.01, n_paths=3, seed=5)
    with_gamma = single_regime(mu=0.02, sigma=0.2, gamma=0.3)
    without = single_regime(mu=0.02, sigma=0.2, gamma=0.0)
    a = simulate_path(*with_gamma, K30, sim, 1)
    b = simulate_path(*without, K30, sim, 1)
    np.testing.assert_array_equal(a.prices, b.prices)


def test_zero_extraction_zero_payoff(medium):
    model, contract, sim = medium
    sim = dataclasses.replace(sim, horizon=5.0, n_paths=50)
    est = estimate_payoffs(model, contract, Policy([0.0, 0.0], [0.2, 0.2]), sim)
    assert not est.mean.any()


def test_workers_do_not_change_results(major):
    model, contract, sim = major
    sim = dataclasses.replace(sim, horizon=2.0, n_paths=64)
    eq = find_equilibrium(model, contract)
    pol = Policy.from_equilibrium(eq, contract)
    a = simulate_batch(model, contract, [pol], sim, workers=1)
    b = simulate_batch(model, contract, [pol], sim, workers=4)
    np.testing.assert_array_equal(a.payoffs, b.payoffs)
    np.testing.assert_array_equal(a.terminal_x, b.terminal_x)


def test_single_path_matches_batch(medium):
    model, contract, sim = medium
    sim = dataclasses.replace(sim, horizon=3.0, n_paths=10)
    pol = Policy.from_equilibrium(find_equilibrium(model, contract), contract)
    batch = simulate_batch(model, contract, [pol], sim)
    for p in (0, 7):
        path = simulate_path(model, contract, pol, sim, p)
        np.testing.assert_array_equal(path.discounted_payoffs[-1], batch.payoffs[p, 0])
        assert path.prices[-1] == batch.terminal_x[p, 0]
        assert path.regimes[-1] == batch.terminal_regime[p]
        assert np.all(path.prices >= 0)
        assert np.all(np.diff(path.times) > 0)


def test_csv_format(medium, tmp_path):
    model, contract, sim = medium
    sim = dataclasses.replace(sim, horizon=0.05, n_paths=1)
    path = simulate_path(model, contract, K30.__class__([1 / 30] * 2, [0.2] * 2), sim, 0)
    text = path.to_csv()
    lines = text.splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == len(path.times) + 1
    row = [float(v) for v in lines[-1].split(",")]
    assert row[1] == path.prices[-1]  # 17 significant digits round-trip
    path.write_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == text


def test_streams_are_distinct():
    a = stream(1, 0, TAG_DIFFUSION).random(4)
    b = stream(1, 0, TAG_JUMP).random(4)
    c = stream(1, 1, TAG_DIFFUSION).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    np.testing.assert_array_equal(a, stream(1, 0, TAG_DIFFUSION).random(4))


def test_policy_validation(medium):
    model, contract, sim = medium
    with pytest.raises(ValidationError):
        simulate_batch(model, contract, [Policy([0.1, 0.1], [0.5, 0.2])], sim)
    with pytest.raises(ValidationError):
        estimate_payoffs(model, contract, Policy([0.1, 0.1], [0.2, 0.2]), dataclasses.replace(sim, n_paths=1))


def test_terminal_regime_distribution(medium):
    model, contract, sim = medium
    sim = dataclasses.replace(sim, horizon=2.0, dt=0.05, n_paths=20000)
    batch = simulate_batch(model, contract, [Policy([0.0, 0.0], [0.2, 0.2])], sim)
    p = expm(model.q * 2.0)[0, 0]
    freq = np.mean(batch.terminal_regime == 1)
    assert abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / sim.n_paths)


def _moment_check(model, contract, k, sim, n_se=3.0):
    batch = simulate_batch(model, contract, [Policy(k, [0.2] * model.m)], sim)
    ref = second_moments(model, contract, k, sim.x0, sim.i0, sim.horizon)
    for i in range(model.m):
        s = batch.terminal_x[:, 0] ** 2 * (batch.terminal_regime == i + 1)
        se = s.std(ddof=1) / math.sqrt(len(s))
        assert abs(s.mean() - ref[i]) <= n_se * se, (i, s.mean(), se, ref[i])
    return batch


def test_moments_with_price_impact(major):
    model, contract, _ = major
    contract = dataclasses.replace(contract, rho=0.3)
    sim = SimConfig(x0=1.0, i0=2, horizon=2.0, dt=1e-3, n_paths=20000, seed=99, trunc_eps=0.01)
    _moment_check(model, contract, [0.5, 0.4], sim)


def test_heavy_jump_moments():
    # gamma small enough that no jump can push the price below zero in practice
    model = MarketModel(
        regimes_from_arrays([0.02, -0.1], [0.1, 0.15], [0.1, 0.08]),
        [[-0.3, 0.3], [0.5, -0.5]],
        LevyMeasureSpec.heavy_symmetric(),
    )
    _, contract = single_regime()
    sim = SimConfig(x0=1.0, i0=1, horizon=3.0, dt=1e-3, n_paths=20000, seed=17, trunc_eps=0.01)
    # 4 SE: heavy tails make 3 SE too tight for two comparisons; unbiased over independent seeds
    batch = _moment_check(model, contract, [0.0, 0.0], sim, n_se=4.0)
    assert batch.absorbed == 0


def test_identity_deviation_is_exactly_zero(medium):
    model, contract, sim = medium
    sim = dataclasses.replace(sim, horizon=2.0, n_paths=100)
    eq = find_equilibrium(model, contract)
    rep = deviation_test(model, contract, eq, [1.0], sim)
    (r,) = [r for r in rep.results if r.player == 1]
    assert r.oracle_diff == 0.0 and r.mc_diff == 0.0 and r.passed


def test_deviation_oracle_signs(medium):
    model, contract, sim = medium
    sim = dataclasses.replace(sim, horizon=5.0, n_paths=200)
    eq = find_equilibrium(model, contract)
    rep = deviation_test(model, contract, eq, [0.5], sim)
    p1 = rep.results[0]
    assert p1.oracle_diff == pytest.approx(0.190125 - 0.2535, abs=1e-4)
    assert p1.oracle_basis == "stationary"
    assert all(r.oracle_diff < 0 for r in rep.results)
