"""JSON reports written by the command-line interface."""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from .equilibrium import Equilibrium
from .model import Contract, MarketModel, SimConfig, config_to_dict


def _floats(v) -> list[float]:
    return [float(x) for x in np.asarray(v, dtype=float)]


def equilibrium_report(model: MarketModel, contract: Contract, sim: SimConfig, eq: Equilibrium) -> dict[str, Any]:
    return {
        "inputs": config_to_dict(model, contract, sim),
        "equilibrium": {
            "a1": _floats(eq.a1),
            "a2": _floats(eq.a2),
            "k": _floats(eq.k),
            "u2": _floats(eq.u2),
            "abscissa": float(eq.abscissa),
            "fk_residual": float(eq.fk_residual),
            "warnings": list(eq.warnings),
        },
        "roots": [
            {
                "u2": _floats(c.u2),
                "a1": _floats(c.a1),
                "k": _floats(c.k),
                "abscissa": float(c.abscissa),
                "admissible": c.admissible,
                "reasons": list(c.reasons),
            }
            for c in eq.candidates
        ],
    }


def dumps(doc: dict[str, Any]) -> str:
    """Deterministic JSON; floats use the shortest round-trip repr."""
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"
