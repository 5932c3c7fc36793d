import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from extraction_game.errors import ValidationError
from extraction_game.levy import (
    heavy_truncated_cdf,
    jump_integral,
    jump_integral_quadrature,
    jump_sampler_plan,
    small_jump_compensator,
)
from extraction_game.model import LevyMeasureSpec

EXP5 = LevyMeasureSpec.exponential(5.0)
HEAVY = LevyMeasureSpec.heavy_symmetric()
NONE = LevyMeasureSpec.none()


def test_exponential_value():
    assert jump_integral(EXP5, 0.05) == pytest.approx(0.00100855, abs=5e-9)
    assert jump_integral(EXP5, 0.09) == pytest.approx(0.0021034, abs=5e-8)


def test_heavy_value():
    assert jump_integral(HEAVY, 0.022) == pytest.approx(0.000968, rel=1e-12)
    assert jump_integral_quadrature(HEAVY, 0.03) == pytest.approx(0.0018, abs=1e-9)


@pytest.mark.parametrize("levy", [EXP5, HEAVY, NONE])
def test_zero_gamma(levy):
    assert jump_integral(levy, 0.0) == 0.0
    assert jump_integral_quadrature(levy, 0.0) == 0.0
    assert small_jump_compensator(levy, 0.0) == 0.0


def test_quadrature_tolerance_bounds():
    with pytest.raises(ValueError):
        jump_integral_quadrature(EXP5, 0.05, tol=1e-2)


@given(
    eta=st.floats(0.5, 20.0),
    g=st.floats(0.0, 0.5),
)
def test_closed_form_matches_quadrature(eta, g):
    lv = LevyMeasureSpec.exponential(eta)
    assert abs(jump_integral(lv, g) - jump_integral_quadrature(lv, g)) <= 1e-9 * max(1.0, jump_integral(lv, g))


@given(g=st.floats(0.0, 1.0), eta=st.floats(0.5, 20.0))
def test_integral_is_quadratic_in_gamma(g, eta):
    # J(g) = alpha g^2 + beta g with no constant term
    lv = LevyMeasureSpec.exponential(eta)
    j1, j2, j3 = (jump_integral(lv, t) for t in (1.0, 2.0, 3.0))
    alpha = (j3 - 2 * j2 + j1) / 2
    beta = j1 - alpha
    assert jump_integral(lv, g) == pytest.approx(alpha * g * g + beta * g, rel=1e-9, abs=1e-15)


def test_small_jump_compensator():
    assert small_jump_compensator(EXP5, 0.05) == pytest.approx(0.00959572, abs=5e-9)
    assert small_jump_compensator(HEAVY, 0.4) == 0.0


def test_plans():
    p = jump_sampler_plan(EXP5)
    assert (p.rate, p.gauss_var) == (1.0, 0.0)
    assert jump_sampler_plan(NONE).rate == 0.0
    h = jump_sampler_plan(HEAVY, 1e-3)
    assert h.gauss_var == pytest.approx(0.0019990, abs=5e-8)
    assert h.drift_comp == 0.0
    # mass of e^{-|z|}/z^2 outside [-eps, eps] is about 2/eps for small eps
    assert h.rate == pytest.approx(2 / 1e-3, rel=0.01)


@pytest.mark.parametrize("eps", [0.0, 1.0, None])
def test_heavy_plan_needs_valid_eps(eps):
    with pytest.raises(ValidationError):
        jump_sampler_plan(HEAVY, eps)


def test_heavy_sampler_ks():
    eps = 1e-3
    plan = jump_sampler_plan(HEAVY, eps)
    z = plan.size_sampler.sample(np.random.default_rng(11), 100_000)
    res = stats.kstest(np.abs(z), lambda t: heavy_truncated_cdf(t, eps))
    assert res.statistic < 0.01
    assert abs(np.mean(z > 0) - 0.5) < 0.01


def test_exponential_sampler_ks():
    z = jump_sampler_plan(EXP5).size_sampler.sample(np.random.default_rng(3), 100_000)
    assert stats.kstest(z, stats.expon(scale=0.2).cdf).statistic < 0.01


def test_truncated_second_moment_matches_integral():
    # sampled part plus Gaussian substitute reproduces the full 2 gamma^2 integral
    eps = 0.01
    plan = jump_sampler_plan(HEAVY, eps)
    z = plan.size_sampler.sample(np.random.default_rng(5), 400_000)
    second = plan.rate * np.mean(z * z) + plan.gauss_var
    assert second == pytest.approx(jump_integral(HEAVY, 1.0), rel=0.01)
    assert math.isfinite(second)
