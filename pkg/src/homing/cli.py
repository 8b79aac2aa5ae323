"""Command-line front end: solve, solve-numeric, simulate, verify, sweep.

A run is configured from a JSON file (either a bare problem document or a
``{"problem": ..., "options": ...}`` document such as a sidecar) with
command-line flags taking precedence.  Every run writes its resolved
configuration to ``<out>.<command>.config.json``; passing that file back
as ``--config`` reproduces the run's artifacts byte for byte.

Exit codes: 0 success, 1 verification failure, 2 infeasible or
inadmissible input, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .closed_form import (
    ClosedFormSolution,
    admissibility_margin,
    hjb_residual,
    minimal_terminal_cost,
    optimal_control,
    solution_table,
    solve_constants,
    write_table_csv,
)
from .errors import BracketError, CensoringError, HomingError, NumericalError, ShotInvalid, SolveError
from .hjb_numeric import extract_policy, solve_bvp, write_numeric_csv
from .model import CaseKind, HomingProblem, PowerLaw, classify
from .policy import (
    ClosedFormOptimalPolicy,
    ConstantPolicy,
    Policy,
    ScaledPolicy,
    TabulatedPolicy,
    ZeroPolicy,
    policy_from_json,
)
from .simulate import SimulationConfig, estimate_cost, simulate_outcomes, summarize, write_paths_csv

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS: dict[str, Any] = {
    "grid": 10_000,
    "tol": 1e-8,
    "dt": 1e-4,
    "paths": 100_000,
    "seed": 42,
    "x0": None,
    "policy": "optimal",
    "sweep": None,
    "workers": 1,
    "bridge": True,
    "max_time": None,
    "case": None,
    "paths_csv": False,
    "solution": None,
}

SWEEP_VARS = ("lambda", "terminal_cost", "d2")
TABLE_POINTS = 1001

# verify thresholds
BOUNDARY_TOL = 1e-9
RESIDUAL_TOL = 1e-9
CASE_TOL = 1e-9
ORACLE_TOL = 1e-6
NUMERIC_RESIDUAL_TOL = 1e-4
MC_ALLOWANCE = 0.01


class UsageError(HomingError, ValueError):
    """Malformed flag or configuration value."""


# ---------------------------------------------------------------- config


def _parse_powerlaw(text: str) -> PowerLaw:
    coef, sep, exp = text.partition(":")
    if not sep:
        raise UsageError(f"power law must be 'coefficient:exponent', got {text!r}")
    return PowerLaw(float(coef), int(exp))


def _apply_set(problem: dict[str, Any], item: str) -> None:
    key, sep, val = item.partition("=")
    if not sep:
        raise UsageError(f"--set expects key=value, got {item!r}")
    key = {"lam": "lambda", "K0": "terminal_cost"}.get(key, key)
    if key in ("drift", "variance", "cost_weight"):
        problem[key] = _parse_powerlaw(val).to_dict()
    elif key in ("lambda", "terminal_cost", "d1", "d2"):
        problem[key] = float(val)
    else:
        raise UsageError(f"unknown problem field {key!r}")


def resolve_config(args: argparse.Namespace) -> tuple[HomingProblem, dict[str, Any]]:
    """Merge defaults, the config file and flags (flags win)."""
    problem: dict[str, Any] = {}
    options = dict(DEFAULTS)
    if args.config is not None:
        doc = json.loads(Path(args.config).read_text())
        if "problem" in doc:
            problem = dict(doc["problem"])
            options.update(doc.get("options", {}))
        else:
            problem = {k: v for k, v in doc.items() if k != "options"}
            options.update(doc.get("options", {}))
    for item in args.set or ():
        _apply_set(problem, item)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            options[key] = val
    if not problem:
        raise UsageError("no problem given: pass --config")
    p = HomingProblem.from_dict(problem)
    if options["x0"] is None:
        options["x0"] = 0.5 * (p.d1 + p.d2)
    if args.out is not None:
        options["out"] = args.out
    elif args.config is not None:
        options["out"] = options.get("out") or Path(args.config).name.split(".")[0]
    else:
        options.setdefault("out", "homing")
    return p, options


def _write_sidecar(command: str, p: HomingProblem, options: dict[str, Any]) -> Path:
    path = Path(f"{options['out']}.{command}.config.json")
    doc = {"command": command, "problem": p.to_dict(), "options": options}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: str | Path, doc: Any) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "nan"
    return f"{float(v):.15g}"


# ---------------------------------------------------------------- shared pieces


def _closed_form(p: HomingProblem, options: dict[str, Any]) -> ClosedFormSolution:
    if options.get("solution"):
        return ClosedFormSolution.from_dict(json.loads(Path(options["solution"]).read_text()))
    return solve_constants(p, options.get("case"))


def _try_closed_form(p: HomingProblem, options: dict[str, Any]) -> ClosedFormSolution | None:
    try:
        return _closed_form(p, options)
    except (SolveError, ValueError):
        return None


def _optimal_policy(p: HomingProblem, options: dict[str, Any]) -> Policy:
    sol = _try_closed_form(p, options)
    if sol is not None:
        return ClosedFormOptimalPolicy(p, sol)
    return extract_policy(solve_bvp(p, int(options["grid"]), float(options["tol"])), p)


def _read_table_policy(path: str) -> Policy:
    if path.endswith(".json"):
        return policy_from_json(Path(path).read_text())
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "x" not in rows[0] or "u_star" not in rows[0]:
        raise UsageError(f"policy table {path} needs 'x' and 'u_star' columns")
    return TabulatedPolicy(np.array([float(r["x"]) for r in rows]), np.array([float(r["u_star"]) for r in rows]))


def make_policy(text: str, p: HomingProblem, options: dict[str, Any]) -> Policy:
    """Build a policy from ``zero``, ``constant:u0``, ``optimal``, ``scaled:factor`` or ``table:path``."""
    name, _, arg = text.partition(":")
    if name == "zero":
        return ZeroPolicy()
    if name == "constant":
        return ConstantPolicy(float(arg) if arg else 1.0)
    if name == "optimal":
        return _optimal_policy(p, options)
    if name == "scaled":
        return ScaledPolicy(_optimal_policy(p, options), float(arg))
    if name == "table":
        return _read_table_policy(arg)
    raise UsageError(f"unknown policy {text!r}")


def _sim_config(options: dict[str, Any], x0: float | None = None, paths: int | None = None) -> SimulationConfig:
    return SimulationConfig(
        x0=float(options["x0"] if x0 is None else x0),
        dt=float(options["dt"]),
        paths=int(options["paths"] if paths is None else paths),
        base_seed=int(options["seed"]),
        max_time=options["max_time"],
        bridge=bool(options["bridge"]),
    )


def _case_label(p: HomingProblem, sol: ClosedFormSolution) -> str:
    kind = classify(p).kind.value.capitalize()
    used = "Case1" if sol.case == CaseKind.CASE1 else "Case2"
    return f"{kind}(used {used})"


# ---------------------------------------------------------------- commands


def cmd_solve(p: HomingProblem, options: dict[str, Any]) -> int:
    sol = _closed_form(p, options)
    out = options["out"]
    Path(f"{out}.solution.json").write_text(sol.to_json() + "\n")
    write_table_csv(f"{out}.solution.csv", solution_table(p, sol, TABLE_POINTS))
    margin = admissibility_margin(p, options.get("case"))
    print(f"c = {sol.c:.10g}")
    print(f"c1 = {sol.c1:.10g}")
    print(f"c0 = {sol.c0:.10g}")
    print(f"case = {_case_label(p, sol)}")
    print(f"branch = {sol.branch}")
    print(f"K0 margin = {_fmt(margin)}")
    return EXIT_OK


def cmd_solve_numeric(p: HomingProblem, options: dict[str, Any]) -> int:
    nvf = solve_bvp(p, int(options["grid"]), float(options["tol"]))
    out = options["out"]
    write_numeric_csv(f"{out}.numeric.csv", nvf, p)
    report: dict[str, Any] = {"s_star": nvf.shoot_parameter, "residual_sup": nvf.residual_sup, "grid": int(options["grid"])}
    print(f"s* = {nvf.shoot_parameter:.12g}")
    print(f"residual_sup = {nvf.residual_sup:.3e}")
    sol = _try_closed_form(p, options)
    if sol is not None:
        gap = float(np.max(np.abs(nvf.F_values - sol.value(nvf.grid))))
        s_gap = abs(nvf.shoot_parameter - sol.derivative(p.d1))
        report.update(sup_gap=gap, s_star_gap=s_gap)
        print(f"sup-norm gap to closed form = {gap:.3e}")
        print(f"s* gap to closed form = {s_gap:.3e}")
    _write_json(f"{out}.numeric.json", report)
    return EXIT_OK


def cmd_simulate(p: HomingProblem, options: dict[str, Any]) -> int:
    pol = make_policy(options["policy"], p, options)
    cfg = _sim_config(options)
    outcomes = simulate_outcomes(p, pol, cfg, workers=int(options["workers"]))
    est = summarize(outcomes)
    out = options["out"]
    _write_json(f"{out}.mc.json", est.to_dict())
    if options["paths_csv"]:
        write_paths_csv(f"{out}.paths.csv", outcomes)
    print(f"mean cost = {est.mean_cost:.6f} +/- {est.std_error:.6f}")
    print(f"exit left = {est.exit_left_fraction:.4f}, right = {est.exit_right_fraction:.4f}, censored = {est.censored_fraction:.4f}")
    print(f"mean exit time = {est.mean_exit_time:.6g}")
    if est.censored_fraction > 0.01:
        raise CensoringError(f"{100 * est.censored_fraction:.2f}% of paths censored; estimate unreliable", est)
    return EXIT_OK


def _check(name: str, passed: bool, value, threshold, **extra) -> dict[str, Any]:
    return {"check": name, "passed": bool(passed), "value": value, "threshold": threshold, **extra}


def run_checks(p: HomingProblem, options: dict[str, Any]) -> list[dict[str, Any]]:
    """Closed form, BVP and Monte Carlo cross-checks on one problem."""
    checks = []
    try:
        sol = _closed_form(p, options)
    except SolveError as exc:
        return [_check("closed_form", False, str(exc), None)]
    x = np.linspace(p.d1, p.d2, TABLE_POINTS)

    bnd = max(abs(sol.value(p.d1)), abs(sol.value(p.d2) - p.terminal_cost))
    checks.append(_check("boundary", bnd <= BOUNDARY_TOL, bnd, BOUNDARY_TOL))

    res = float(np.max(np.abs(hjb_residual(p, sol, x[1:-1]))))
    checks.append(_check("residual", res <= RESIDUAL_TOL, res, RESIDUAL_TOL))

    tag = classify(p)
    if tag.has_case1 and tag.has_case2:
        try:
            s1, s2 = solve_constants(p, CaseKind.CASE1), solve_constants(p, CaseKind.CASE2)
            agree = float(np.max(np.abs(s1.value(x) - s2.value(x))))
        except SolveError:
            agree = math.inf
        checks.append(_check("case_agreement", agree <= CASE_TOL, agree, CASE_TOL))
    else:
        checks.append(_check("case_agreement", True, None, CASE_TOL, note=f"not applicable: {tag.kind.value}"))

    try:
        nvf = solve_bvp(p, int(options["grid"]), float(options["tol"]))
        gap = float(np.max(np.abs(nvf.F_values - sol.value(nvf.grid))))
    except (BracketError, ShotInvalid) as exc:
        gap = math.inf
        checks.append(_check("numeric_solve", False, str(exc), None))
    checks.append(_check("oracle_gap", gap <= ORACLE_TOL, gap, ORACLE_TOL))

    x0 = float(options["x0"])
    F0 = float(sol.value(x0))
    opt = ClosedFormOptimalPolicy(p, sol)
    est = estimate_cost(p, opt, _sim_config(options), workers=int(options["workers"]))
    dev = abs(est.mean_cost - F0)
    lim = 3.0 * est.std_error + MC_ALLOWANCE
    checks.append(_check("mc_match", dev <= lim, dev, lim, mean_cost=est.mean_cost, std_error=est.std_error, F_x0=F0))

    rivals = {
        "zero": ZeroPolicy(),
        "constant:1": ConstantPolicy(1.0),
        "scaled:0.5": ScaledPolicy(opt, 0.5),
        "scaled:2": ScaledPolicy(opt, 2.0),
    }
    for name, pol in rivals.items():
        est = estimate_cost(p, pol, _sim_config(options), workers=int(options["workers"]))
        floor = F0 - 3.0 * est.std_error - MC_ALLOWANCE
        checks.append(_check(f"dominance[{name}]", est.mean_cost >= floor, est.mean_cost, floor, std_error=est.std_error))
    return checks


def cmd_verify(p: HomingProblem, options: dict[str, Any]) -> int:
    checks = run_checks(p, options)
    ok = all(c["passed"] for c in checks)
    _write_json(f"{options['out']}.verify.json", {"passed": ok, "checks": checks})
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}: value={c['value']} threshold={c['threshold']}")
    if not ok:
        failed = [c["check"] for c in checks if not c["passed"]]
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    parts = text.split(":")
    if len(parts) != 4 or parts[0] not in SWEEP_VARS:
        raise UsageError(f"--sweep expects var:lo:hi:step with var in {SWEEP_VARS}, got {text!r}")
    lo, hi, step = map(float, parts[1:])
    if not step > 0 or hi < lo:
        raise UsageError(f"sweep range needs lo <= hi and step > 0, got {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return parts[0], lo + step * np.arange(n)


def sweep_rows(p: HomingProblem, var: str, values: np.ndarray, x0: float) -> list[dict[str, Any]]:
    rows = []
    for val in values:
        q = p.replace(**{("lam" if var == "lambda" else var): float(val)})
        row = {var: float(val), "feasible": False, "c": None, "F_x0": None, "u_star_x0": None, "min_terminal_cost": None}
        try:
            row["min_terminal_cost"] = minimal_terminal_cost(q)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sol = solve_constants(q)
            row["feasible"] = True
            row["c"] = sol.c
            if q.d1 <= x0 <= q.d2:
                row["F_x0"] = float(sol.value(x0))
                row["u_star_x0"] = float(optimal_control(q, sol, x0))
        except (SolveError, ValueError):
            pass
        rows.append(row)
    return rows


def cmd_sweep(p: HomingProblem, options: dict[str, Any]) -> int:
    if not options["sweep"]:
        raise UsageError("sweep needs --sweep var:lo:hi:step")
    var, values = parse_sweep(options["sweep"])
    rows = sweep_rows(p, var, values, float(options["x0"]))
    path = f"{options['out']}.sweep.csv"
    cols = [var, "feasible", "c", "F_x0", "u_star_x0", "min_terminal_cost"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in cols])
    n_ok = sum(r["feasible"] for r in rows)
    print(f"{len(rows)} points, {n_ok} feasible -> {path}")
    return EXIT_OK


COMMANDS: dict[str, Callable[[HomingProblem, dict[str, Any]], int]] = {
    "solve": cmd_solve,
    "solve-numeric": cmd_solve_numeric,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homing", description="Solve and verify one-dimensional homing problems.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="problem JSON or a sidecar config written by a previous run")
    common.add_argument("--out", help="output path prefix")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a problem field (lambda, terminal_cost, d1, d2, drift=coef:exp, ...)")
    common.add_argument("--grid", type=int, help="shooting steps N")
    common.add_argument("--tol", type=float, help="shooting tolerance on F(d2)")
    common.add_argument("--dt", type=float, help="Euler step")
    common.add_argument("--paths", type=int, help="Monte Carlo paths")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--x0", type=float, help="start point (default: interval midpoint)")
    common.add_argument("--policy", help="zero | constant:u0 | optimal | scaled:factor | table:path")
    common.add_argument("--sweep", help="var:lo:hi:step with var in lambda, terminal_cost, d2")
    common.add_argument("--workers", type=int, help="simulation threads")
    common.add_argument("--max-time", dest="max_time", type=float, help="censoring horizon")
    common.add_argument("--case", choices=["case1", "case2"], help="closed-form case to use")
    common.add_argument("--solution", help="use this solution JSON instead of solving")
    common.add_argument("--no-bridge", dest="bridge", action="store_const", const=False,
                        help="check exits only at grid times")
    common.add_argument("--paths-csv", dest="paths_csv", action="store_const", const=True,
                        help="also write per-path outcomes")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        p, options = resolve_config(args)
        _write_sidecar(args.command, p, options)
        return COMMANDS[args.command](p, options)
    except SolveError as exc:
        msg = str(exc)
        if exc.min_terminal_cost is not None and "K0 must exceed" not in msg:
            msg += f"; minimal admissible K0 = {exc.min_terminal_cost:.9g}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except (BracketError, ShotInvalid, NumericalError, CensoringError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HomingError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
