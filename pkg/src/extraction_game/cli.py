"""Command-line entry point: solve, verify, simulate and grid.

Exit codes: 0 success, 1 input error, 2 no equilibrium, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import report as rpt
from .equilibrium import (
    a2_two_state,
    extraction_gain,
    find_equilibrium,
    fk_matrix,
    payoff_rate_coeffs,
)
from .errors import NoEquilibrium, ParseError, ValidationError
from .levy import jump_integral, jump_integral_quadrature
from .model import load_config_file
from .oracle import stationary_value, truncated_value
from .sim import Policy, deviation_policies, deviation_test, simulate_batch, simulate_path

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_EQUILIBRIUM = 2
EXIT_VERIFY_FAILED = 3

DEVIATION_SCALES = (0.5, 0.8, 1.2, 1.5)
STATIONARY_TAIL_FRACTION = 0.01


def _load(args):
    model, contract, sim = load_config_file(args.config)
    overrides = {}
    if getattr(args, "paths", None) is not None:
        overrides["n_paths"] = args.paths
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if overrides:
        sim = dataclasses.replace(sim, **overrides)
    return model, contract, sim


def _vec(v) -> str:
    return "(" + ", ".join(f"{x:.6g}" for x in v) + ")"


def cmd_solve(args) -> int:
    model, contract, sim = _load(args)
    eq = find_equilibrium(model, contract, x_ref=sim.x0)
    doc = rpt.equilibrium_report(model, contract, sim, eq)
    print(f"{'regime':>6} {'A1':>14} {'A2':>14} {'K':>12} {'u2':>6}")
    for i in range(model.m):
        print(f"{i + 1:>6} {eq.a1[i]:>14.6g} {eq.a2[i]:>14.6g} {eq.k[i]:>12.6g} {eq.u2[i]:>6.3g}")
    print(f"spectral abscissa {eq.abscissa:.6g}")
    for c in eq.candidates:
        verdict = "admissible" if c.admissible else "rejected: " + "; ".join(c.reasons)
        print(f"  root u2={_vec(c.u2)} A1={_vec(c.a1)}  {verdict}")
    for w in eq.warnings:
        print(f"warning: {w}")
    if args.out:
        Path(args.out).write_text(rpt.dumps(doc))
    return EXIT_OK


def _check(name, passed, detail, **values):
    return {"name": name, "status": "PASS" if passed else "FAIL", "detail": detail, **values}


def run_verification(model, contract, sim, workers=1, a1_override=None) -> list[dict]:
    """All verification checks for one configuration, as report records."""
    eq = find_equilibrium(model, contract, x_ref=sim.x0)
    checks = []

    # (a) jump integral: closed form against quadrature
    diffs = []
    for g in model.gamma:
        closed = jump_integral(model.levy, g)
        quad = jump_integral_quadrature(model.levy, g, tol=1e-8)
        diffs.append(abs(closed - quad))
    worst = max(diffs)
    checks.append(_check("jump_integral", worst <= 1e-6, f"max |closed - quadrature| = {worst:.3g}", max_diff=worst))

    # (b) Feynman-Kac identity H a1 + c1 = 0
    a1 = eq.a1 if a1_override is None else np.asarray(a1_override, dtype=float)
    k = extraction_gain(a1, eq.u2, contract)
    h = eq.h if a1_override is None else fk_matrix(k, eq.u2, model, contract)
    c1, c2 = payoff_rate_coeffs(k, eq.u2, contract)
    res = float(np.max(np.abs(h @ a1 + c1)))
    bound = 1e-10 * (1.0 + float(np.max(np.abs(a1))))
    checks.append(
        _check("feynman_kac", res <= bound, f"|H a1 + c1|_inf = {res:.3g} (bound {bound:.3g})", residual=res)
    )

    # (c) two-regime determinant formula for A2
    if model.m == 2:
        closed = a2_two_state(eq.h, payoff_rate_coeffs(eq.k, eq.u2, contract)[1])
        rel = float(np.max(np.abs(closed - eq.a2)) / max(1e-300, np.max(np.abs(eq.a2))))
        checks.append(_check("a2_two_state", rel <= 1e-12, f"relative difference {rel:.3g}", rel_diff=rel))
    else:
        checks.append({"name": "a2_two_state", "status": "SKIP", "detail": f"m = {model.m} != 2"})

    # (d) + (e) one common-random-number batch: equilibrium policy and deviations
    base = Policy.from_equilibrium(eq, contract)
    devs = deviation_policies(eq, contract, DEVIATION_SCALES)
    batch = simulate_batch(model, contract, [base] + [d[2] for d in devs], sim, workers)
    est = batch.estimate(0)
    c_eq = payoff_rate_coeffs(eq.k, eq.u2, contract)
    i0, x0 = sim.i0 - 1, sim.x0
    for j in (0, 1):
        tv = truncated_value(eq.h, c_eq[j], sim.horizon)
        ref = float(tv.coeffs[i0] * x0**2)
        tol = max(3.0 * est.std_error[j], 0.02 * abs(ref))
        err = abs(est.mean[j] - ref)
        checks.append(
            _check(
                f"mc_truncated_player{j + 1}",
                err <= tol,
                f"MC {est.mean[j]:.6g} +- {est.std_error[j]:.3g} vs oracle(T={sim.horizon:g}) {ref:.6g}",
                mc_mean=float(est.mean[j]),
                mc_se=float(est.std_error[j]),
                oracle=ref,
            )
        )
        stat = float(stationary_value(eq.h, c_eq[j])[i0] * x0**2)
        if tv.tail_valid and tv.tail_bound * x0**2 <= STATIONARY_TAIL_FRACTION * abs(stat):
            err = abs(est.mean[j] - stat)
            checks.append(
                _check(
                    f"mc_stationary_player{j + 1}",
                    err <= tol,
                    f"MC {est.mean[j]:.6g} +- {est.std_error[j]:.3g} vs stationary {stat:.6g}",
                    mc_mean=float(est.mean[j]),
                    mc_se=float(est.std_error[j]),
                    oracle=stat,
                )
            )
        else:
            checks.append(
                {
                    "name": f"mc_stationary_player{j + 1}",
                    "status": "SKIP",
                    "detail": f"stationary MC skipped: near-critical abscissa {eq.abscissa:.2g}; "
                    "truncated comparison used",
                }
            )
    dev = deviation_test(model, contract, eq, DEVIATION_SCALES, sim, batch=batch)
    for r in dev.results:
        checks.append(
            _check(
                f"deviation {r.label}",
                r.passed,
                f"oracle diff {r.oracle_diff:.6g} ({r.oracle_basis}); at T={sim.horizon:g}: "
                f"oracle {r.horizon_diff:.6g}, MC {r.mc_diff:.6g} +- {r.mc_se:.3g}",
                oracle_diff=r.oracle_diff,
                horizon_diff=r.horizon_diff,
                mc_diff=r.mc_diff,
                mc_se=r.mc_se,
            )
        )
    return checks


def cmd_verify(args) -> int:
    model, contract, sim = _load(args)
    a1_override = None
    if args.debug_a1:
        a1_override = [float(v) for v in args.debug_a1.split(",")]
        if len(a1_override) != model.m:
            print(f"error: --debug-a1 needs {model.m} values", file=sys.stderr)
            return EXIT_INPUT
    checks = run_verification(model, contract, sim, args.workers, a1_override)
    for c in checks:
        print(f"{c['status']:<4}  {c['name']}: {c['detail']}")
    failed = sum(c["status"] == "FAIL" for c in checks)
    doc = {"config": str(args.config), "n_paths": sim.n_paths, "seed": sim.seed, "checks": checks}
    doc["passed"] = failed == 0
    if args.out:
        Path(args.out).write_text(rpt.dumps(doc))
    return EXIT_OK if failed == 0 else EXIT_VERIFY_FAILED


def cmd_simulate(args) -> int:
    model, contract, sim = _load(args)
    if args.dump > sim.n_paths:
        print(f"error: --dump {args.dump} exceeds n_paths {sim.n_paths}", file=sys.stderr)
        return EXIT_INPUT
    eq = find_equilibrium(model, contract, x_ref=sim.x0)
    policy = Policy.from_equilibrium(eq, contract)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(sim.n_paths)))
    for p in range(args.dump):
        simulate_path(model, contract, policy, sim, p).write_csv(out / f"path_{p:0{width}d}.csv")
    batch = simulate_batch(model, contract, [policy], sim, args.workers)
    est = batch.estimate(0)
    doc = {
        "n_paths": est.n_paths,
        "horizon": est.horizon,
        "seed": sim.seed,
        "policy": {"k": rpt._floats(policy.gain), "u2": rpt._floats(policy.tax)},
        "mean": rpt._floats(est.mean),
        "std_error": rpt._floats(est.std_error),
        "absorbed": batch.absorbed,
    }
    (out / "summary.json").write_text(rpt.dumps(doc))
    for j in (0, 1):
        print(f"player {j + 1}: J = {est.mean[j]:.6g} +- {est.std_error[j]:.3g} ({est.n_paths} paths)")
    return EXIT_OK


def cmd_grid(args) -> int:
    model, contract, sim = _load(args)
    if not (0 <= args.x_min < args.x_max) or args.points < 2 or not math.isfinite(args.x_max):
        print("error: need 0 <= x-min < x-max and points >= 2", file=sys.stderr)
        return EXIT_INPUT
    eq = find_equilibrium(model, contract, x_ref=sim.x0)
    m = model.m
    head = ["x"] + [f"v1_r{i + 1}" for i in range(m)] + [f"v2_r{i + 1}" for i in range(m)]
    lines = [",".join(head)]
    for x in np.linspace(args.x_min, args.x_max, args.points):
        x = float(x)
        vals = [x] + [float(a) * x**2 for a in eq.a1] + [float(a) * x**2 for a in eq.a2]
        lines.append(",".join(f"{v:.17g}" for v in vals))
    Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="extraction-game", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=out_required, type=Path)
        p.add_argument("--paths", type=int, help="override sim.n_paths")
        p.add_argument("--seed", type=int, help="override sim.seed")
        p.add_argument("--workers", type=int, default=1, help="simulation threads")

    p = sub.add_parser("solve", help="closed-form equilibrium report")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="oracle and Monte Carlo verification")
    common(p)
    p.add_argument("--debug-a1", help="comma-separated A1 replacing the solved one in the identity check")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="dump paths and a payoff estimate")
    common(p, out_required=True)
    p.add_argument("--dump", type=int, default=1, help="number of path CSVs to write")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("grid", help="value functions on a price grid")
    common(p, out_required=True)
    p.add_argument("--x-min", type=float, default=0.0)
    p.add_argument("--x-max", type=float, default=100.0)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NoEquilibrium as exc:
        print(f"error: NoEquilibrium: {exc}", file=sys.stderr)
        return EXIT_NO_EQUILIBRIUM
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
