"""Domain data for the extraction/taxation game and its JSON configuration.

Units follow the usual convention of the application: prices in dollars per
unit, extraction rates in millions of units per year, values in millions of
dollars. Regime indices are 1-based wherever a user sees them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError

EXPONENTIAL = "exponential"
HEAVY_SYMMETRIC = "heavy_symmetric"
NO_JUMPS = "none"
LEVY_KINDS = (EXPONENTIAL, HEAVY_SYMMETRIC, NO_JUMPS)

DEFAULT_TRUNC_EPS = 1e-3
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RegimeParams:
    mu: float
    sigma: float
    gamma: float


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Jump measure of the driving Lévy process.

    ``exponential``: density ``eta * exp(-eta z)`` on ``z > 0``.
    ``heavy_symmetric``: density ``exp(-|z|) / z**2`` on ``z != 0`` (infinite activity).
    ``none``: no jump component.
    """

    kind: str = NO_JUMPS
    eta: float | None = None

    @classmethod
    def exponential(cls, eta: float) -> "LevyMeasureSpec":
        return cls(EXPONENTIAL, float(eta))

    @classmethod
    def heavy_symmetric(cls) -> "LevyMeasureSpec":
        return cls(HEAVY_SYMMETRIC)

    @classmethod
    def none(cls) -> "LevyMeasureSpec":
        return cls(NO_JUMPS)

    def density(self, z):
        """Lévy density evaluated pointwise (vectorized)."""
        z = np.asarray(z, dtype=float)
        if self.kind == EXPONENTIAL:
            return np.where(z > 0, self.eta * np.exp(-self.eta * np.abs(z)), 0.0)
        if self.kind == HEAVY_SYMMETRIC:
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(z != 0, np.exp(-np.abs(z)) / (z * z), 0.0)
        return np.zeros_like(z)


@dataclass(frozen=True, eq=False)
class MarketModel:
    regimes: tuple[RegimeParams, ...]
    q: np.ndarray
    levy: LevyMeasureSpec = LevyMeasureSpec()

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "regimes", tuple(self.regimes))

    def __eq__(self, other):
        if not isinstance(other, MarketModel):
            return NotImplemented
        return (
            self.regimes == other.regimes
            and self.levy == other.levy
            and self.q.shape == other.q.shape
            and bool(np.array_equal(self.q, other.q))
        )

    @property
    def m(self) -> int:
        return len(self.regimes)

    @property
    def mu(self) -> np.ndarray:
        return np.array([p.mu for p in self.regimes])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([p.sigma for p in self.regimes])

    @property
    def gamma(self) -> np.ndarray:
        return np.array([p.gamma for p in self.regimes])

    @property
    def exit_rates(self) -> np.ndarray:
        """Total switching intensity out of each regime, sum_{j != i} q_ij."""
        off = self.q - np.diag(np.diag(self.q))
        return off.sum(axis=1)


@dataclass(frozen=True)
class Contract:
    theta: float
    a: float
    rho: float
    r: float
    u2_min: float
    u2_max: float
    u1_max: float = math.inf


@dataclass(frozen=True)
class SimConfig:
    x0: float
    i0: int
    horizon: float
    dt: float
    n_paths: int
    seed: int
    trunc_eps: float = DEFAULT_TRUNC_EPS


@dataclass(frozen=True)
class ValidationIssue:
    field: str
    message: str


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    def add(self, field_name: str, message: str) -> None:
        self.issues.append(ValidationIssue(field_name, message))

    @property
    def ok(self) -> bool:
        return not self.issues

    def __len__(self):
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def raise_if_invalid(self) -> None:
        if self.issues:
            raise ValidationError(self.issues)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


def validate_model(
    model: MarketModel, contract: Contract, sim: SimConfig | None = None
) -> ValidationReport:
    """Collect every violated invariant; an empty report means valid."""
    report = ValidationReport()
    m = model.m
    if m < 1:
        report.add("model.regimes", "at least one regime is required")
    for n, p in enumerate(model.regimes, start=1):
        where = f"model.regimes[{n}]"
        if not _finite(p.mu):
            report.add(f"{where}.mu", "must be finite")
        if not (_finite(p.sigma) and p.sigma >= 0):
            report.add(f"{where}.sigma", f"must be >= 0, got {p.sigma!r}")
        if not (_finite(p.gamma) and p.gamma >= 0):
            report.add(f"{where}.gamma", f"must be >= 0, got {p.gamma!r}")

    q = model.q
    if q.shape != (m, m):
        report.add("model.q", f"must be {m}x{m}, got shape {q.shape}")
    elif not np.all(np.isfinite(q)):
        report.add("model.q", "entries must be finite")
    else:
        for i in range(m):
            for j in range(m):
                if i != j and q[i, j] < 0:
                    report.add(f"model.q[{i + 1}][{j + 1}]", "off-diagonal rates must be >= 0")
            s = float(np.sum(q[i]))
            if abs(s) > ROW_SUM_TOL * max(1.0, float(np.max(np.abs(q[i])))):
                report.add(f"model.q[{i + 1}]", f"row must sum to 0, sums to {s!r}")

    lv = model.levy
    if lv.kind not in LEVY_KINDS:
        report.add("model.levy.kind", f"unknown kind {lv.kind!r}")
    elif lv.kind == EXPONENTIAL and not (lv.eta is not None and _finite(lv.eta) and lv.eta > 0):
        report.add("model.levy.eta", f"must be > 0, got {lv.eta!r}")

    c = contract
    if not (_finite(c.theta) and 0 < c.theta < 1):
        report.add("contract.theta", f"must lie in (0, 1), got {c.theta!r}")
    if not (_finite(c.a) and c.a > 0):
        report.add("contract.a", f"must be > 0, got {c.a!r}")
    if not (_finite(c.rho) and 0 <= c.rho < 1):
        report.add("contract.rho", f"must lie in [0, 1), got {c.rho!r}")
    if not (_finite(c.r) and c.r > 0):
        report.add("contract.r", f"must be > 0, got {c.r!r}")
    if not (isinstance(c.u1_max, (int, float)) and not math.isnan(c.u1_max) and c.u1_max > 0):
        report.add("contract.u1_max", f"must be > 0, got {c.u1_max!r}")
    if not (_finite(c.u2_min) and -1 < c.u2_min <= 0):
        report.add("contract.u2_min", f"must lie in (-1, 0], got {c.u2_min!r}")
    if not (_finite(c.u2_max) and 0 <= c.u2_max < 1):
        report.add("contract.u2_max", f"must lie in [0, 1), got {c.u2_max!r}")
    elif _finite(c.u2_min) and not c.u2_min < c.u2_max:
        report.add("contract.u2_max", "must be strictly greater than u2_min")

    if sim is not None:
        _validate_sim(sim, m, report)
    return report


def _validate_sim(sim: SimConfig, m: int, report: ValidationReport) -> None:
    if not (_finite(sim.x0) and sim.x0 >= 0):
        report.add("sim.x0", f"must be >= 0, got {sim.x0!r}")
    if not (isinstance(sim.i0, int) and 1 <= sim.i0 <= m):
        report.add("sim.i0", f"must be a regime index in 1..{m}, got {sim.i0!r}")
    if not (_finite(sim.horizon) and sim.horizon > 0):
        report.add("sim.horizon", f"must be > 0, got {sim.horizon!r}")
    if not (_finite(sim.dt) and sim.dt > 0):
        report.add("sim.dt", f"must be > 0, got {sim.dt!r}")
    elif _finite(sim.horizon) and not sim.dt < sim.horizon:
        report.add("sim.dt", "must be smaller than the horizon")
    if not (isinstance(sim.n_paths, int) and sim.n_paths >= 1):
        report.add("sim.n_paths", f"must be a positive integer, got {sim.n_paths!r}")
    if not (isinstance(sim.seed, int) and 0 <= sim.seed < 2**64):
        report.add("sim.seed", "must be an integer in [0, 2**64)")
    if not (_finite(sim.trunc_eps) and 0 < sim.trunc_eps < 1):
        report.add("sim.trunc_eps", f"must lie in (0, 1), got {sim.trunc_eps!r}")


# ---------------------------------------------------------------------------
# configuration document


_SECTIONS = {"model", "contract", "sim"}
_MODEL_KEYS = {"regimes", "q", "levy"}
_REGIME_KEYS = {"mu", "sigma", "gamma"}
_CONTRACT_REQUIRED = {"theta", "a", "rho", "r", "u2_min", "u2_max"}
_CONTRACT_OPTIONAL = {"u1_max"}
_SIM_REQUIRED = {"x0", "i0", "horizon", "dt", "n_paths", "seed"}
_SIM_OPTIONAL = {"trunc_eps"}


def _check_keys(obj, where, required, optional=frozenset()):
    if not isinstance(obj, dict):
        raise ParseError(f"expected an object, got {type(obj).__name__}", field=where)
    unknown = sorted(set(obj) - set(required) - set(optional))
    if unknown:
        raise ParseError(f"unknown key(s) {unknown}", field=where)
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ParseError(f"missing key(s) {missing}", field=where)


def _num(obj, key, where) -> float:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"expected a number, got {v!r}", field=f"{where}.{key}")
    return float(v)


def _int(obj, key, where) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"expected an integer, got {v!r}", field=f"{where}.{key}")
    return v


def _parse_levy(obj) -> LevyMeasureSpec:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ParseError("expected an object with a 'kind'", field="model.levy")
    kind = obj["kind"]
    if kind == EXPONENTIAL:
        _check_keys(obj, "model.levy", {"kind", "eta"})
        return LevyMeasureSpec(EXPONENTIAL, _num(obj, "eta", "model.levy"))
    if kind in (HEAVY_SYMMETRIC, NO_JUMPS):
        _check_keys(obj, "model.levy", {"kind"})
        return LevyMeasureSpec(kind)
    raise ParseError(f"unknown kind {kind!r}", field="model.levy.kind")


def parse_config(doc: Mapping[str, Any]) -> tuple[MarketModel, Contract, SimConfig]:
    """Build (unvalidated) model objects from a decoded configuration tree."""
    _check_keys(doc, "<root>", _SECTIONS)

    mdoc = doc["model"]
    _check_keys(mdoc, "model", _MODEL_KEYS)
    if not isinstance(mdoc["regimes"], list):
        raise ParseError("expected a list", field="model.regimes")
    regimes = []
    for n, rd in enumerate(mdoc["regimes"], start=1):
        where = f"model.regimes[{n}]"
        _check_keys(rd, where, _REGIME_KEYS)
        regimes.append(RegimeParams(_num(rd, "mu", where), _num(rd, "sigma", where), _num(rd, "gamma", where)))
    qdoc = mdoc["q"]
    if not isinstance(qdoc, list) or not all(isinstance(row, list) for row in qdoc):
        raise ParseError("expected a list of rows", field="model.q")
    rows = []
    for i, row in enumerate(qdoc, start=1):
        rows.append([_num({"v": v}, "v", f"model.q[{i}]") for v in row])
    if len({len(r) for r in rows}) > 1:
        raise ParseError("rows have different lengths", field="model.q")
    q = np.array(rows, dtype=float).reshape(len(rows), len(rows[0]) if rows else 0)
    model = MarketModel(tuple(regimes), q, _parse_levy(mdoc["levy"]))

    cdoc = doc["contract"]
    _check_keys(cdoc, "contract", _CONTRACT_REQUIRED, _CONTRACT_OPTIONAL)
    contract = Contract(
        theta=_num(cdoc, "theta", "contract"),
        a=_num(cdoc, "a", "contract"),
        rho=_num(cdoc, "rho", "contract"),
        r=_num(cdoc, "r", "contract"),
        u2_min=_num(cdoc, "u2_min", "contract"),
        u2_max=_num(cdoc, "u2_max", "contract"),
        u1_max=_num(cdoc, "u1_max", "contract") if "u1_max" in cdoc else math.inf,
    )

    sdoc = doc["sim"]
    _check_keys(sdoc, "sim", _SIM_REQUIRED, _SIM_OPTIONAL)
    sim = SimConfig(
        x0=_num(sdoc, "x0", "sim"),
        i0=_int(sdoc, "i0", "sim"),
        horizon=_num(sdoc, "horizon", "sim"),
        dt=_num(sdoc, "dt", "sim"),
        n_paths=_int(sdoc, "n_paths", "sim"),
        seed=_int(sdoc, "seed", "sim"),
        trunc_eps=_num(sdoc, "trunc_eps", "sim") if "trunc_eps" in sdoc else DEFAULT_TRUNC_EPS,
    )
    return model, contract, sim


def load_config(document: str) -> tuple[MarketModel, Contract, SimConfig]:
    """Parse and validate a JSON configuration document.

    Raises:
        ParseError: the text is not valid JSON or does not follow the schema.
        ValidationError: a model invariant is violated.
    """
    try:
        doc = json.loads(document, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    model, contract, sim = parse_config(doc)
    validate_model(model, contract, sim).raise_if_invalid()
    return model, contract, sim


def load_config_file(path: str | Path) -> tuple[MarketModel, Contract, SimConfig]:
    return load_config(Path(path).read_text())


def _reject_constant(name):
    raise ParseError(f"non-decimal constant {name} is not allowed")


def config_to_dict(model: MarketModel, contract: Contract, sim: SimConfig) -> dict:
    levy: dict[str, Any] = {"kind": model.levy.kind}
    if model.levy.kind == EXPONENTIAL:
        levy["eta"] = model.levy.eta
    cdoc: dict[str, Any] = {
        "theta": contract.theta,
        "a": contract.a,
        "rho": contract.rho,
        "r": contract.r,
        "u2_min": contract.u2_min,
        "u2_max": contract.u2_max,
    }
    if math.isfinite(contract.u1_max):
        cdoc["u1_max"] = contract.u1_max
    return {
        "model": {
            "regimes": [{"mu": p.mu, "sigma": p.sigma, "gamma": p.gamma} for p in model.regimes],
            "q": [[float(v) for v in row] for row in model.q],
            "levy": levy,
        },
        "contract": cdoc,
        "sim": {
            "x0": sim.x0,
            "i0": sim.i0,
            "horizon": sim.horizon,
            "dt": sim.dt,
            "n_paths": sim.n_paths,
            "seed": sim.seed,
            "trunc_eps": sim.trunc_eps,
        },
    }


def dump_config(model: MarketModel, contract: Contract, sim: SimConfig) -> str:
    """Serialize to JSON; floats use the shortest repr, so reloading is bit-exact."""
    return json.dumps(config_to_dict(model, contract, sim), indent=2) + "\n"


def regimes_from_arrays(mu: Sequence[float], sigma: Sequence[float], gamma: Sequence[float]):
    return tuple(RegimeParams(float(a), float(b), float(c)) for a, b, c in zip(mu, sigma, gamma))
