from pathlib import Path

import pytest

from extraction_game.model import (
    Contract,
    LevyMeasureSpec,
    MarketModel,
    SimConfig,
    load_config_file,
    regimes_from_arrays,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
MEDIUM = CONFIGS / "medium_producer.json"
MAJOR = CONFIGS / "major_producer.json"


@pytest.fixture(scope="session")
def medium():
    """Two-regime exponential-jump producer with zero price impact."""
    return load_config_file(MEDIUM)


@pytest.fixture(scope="session")
def major():
    """Two-regime heavy-tailed producer with price impact."""
    return load_config_file(MAJOR)


def single_regime(mu=0.0, sigma=0.1, gamma=0.0, levy=None, r=0.05, rho=0.0):
    model = MarketModel(regimes_from_arrays([mu], [sigma], [gamma]), [[0.0]], levy or LevyMeasureSpec.none())
    contract = Contract(theta=0.3, a=15.0, rho=rho, r=r, u2_min=0.0, u2_max=0.2)
    return model, contract


def deterministic_sim(horizon=1.0, dt=1e-3, n_paths=2, seed=7):
    return SimConfig(x0=1.0, i0=1, horizon=horizon, dt=dt, n_paths=n_paths, seed=seed)
