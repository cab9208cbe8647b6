"""Command line interface: ``chisini <command> --scenario FILE``.

Exit codes: 0 success, 2 computation or axiom failure, 3 invalid input.
Every command builds a JSON-ready report; the text output is rendered
from that report.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace

import numpy as np

from .axioms import check_null_definition, default_x_grid, null_events, run_all
from .functionals import UNAVAILABLE, closed_form_conditional
from .representation import (
    RepresentationError,
    check_order_preservation,
    check_refinement_consistency,
    classify_pi_g,
    induced_probability,
    sample_measurable,
    v_bracket,
)
from .risk import (
    TOL_ROUNDTRIP,
    RiskError,
    check_conditional_axioms,
    check_quantized_convexity,
    check_scalarization_conditions,
    reconstruct_conditional,
    roundtrip_against,
    scalarize,
)
from .scenario import Scenario, ScenarioError, build_risk, is_scalar_only, load_scenario
from .solver import AtomSolveError, PastingViolated, SolverError, conditional_chisini
from .space import SigmaAlgebra, sup_norm

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 2, 3
N_ORDER_SAMPLES = 20
N_CONDITION_SAMPLES = 100
FLOAT_DIGITS = 12


def _clean(obj):
    """JSON-safe copy with floats rounded to a fixed number of digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return str(x)
        x = float(f"{x:.{FLOAT_DIGITS}g}")
        return 0.0 if x == 0 else x
    return obj


def _x_grid(sc: Scenario, f):
    return sc.options.x_grid or default_x_grid(sup_norm(f) if f is not None else 1.0)


def cmd_solve(sc: Scenario) -> dict:
    T = sc.functional()
    f = sc.require_f()
    opts = sc.options
    nulls = null_events(T, sc.sigma, _x_grid(sc, f))
    report = {"functional": T.to_dict(), "atoms": list(sc.sigma.atoms)}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = conditional_chisini(T, f, sc.sigma, tol_solve=opts.tol_solve,
                                      null_value=opts.null_value, null_set=nulls, cap=opts.cap)
    except PastingViolated as exc:
        report.update(error=str(exc), worst_event=exc.worst_event, residual=exc.residual,
                      result=exc.result.to_dict())
        return report | {"exit_code": EXIT_FAIL}
    except AtomSolveError as exc:
        return report | {"error": str(exc), "atom": exc.atom, "exit_code": EXIT_FAIL}
    except SolverError as exc:
        return report | {"error": str(exc), "exit_code": EXIT_FAIL}
    report["result"] = res.to_dict()
    report["notes"] = res.warnings
    report["null_convention"] = opts.null_value
    closed = closed_form_conditional(T, f, sc.sigma)
    if not isinstance(closed, str):
        live = np.ones(T.n, dtype=bool)
        for j in res.null_atoms:
            live[sc.sigma.lift(np.eye(sc.sigma.k)[j]) > 0] = False
        report["closed_form_gap"] = float(np.max(np.abs(closed - res.g)[live], initial=0.0))
    else:
        report["closed_form_gap"] = UNAVAILABLE
    return report | {"exit_code": EXIT_OK}


def cmd_check_axioms(sc: Scenario) -> dict:
    T = sc.functional()
    f = sc.require_f()
    opts = sc.options
    suite = run_all(T, sc.sigma, f, opts.seed, opts.n_samples, opts.value_grid,
                    _x_grid(sc, f))
    suite.reports.append(check_null_definition(suite.null_set, T, sc.sigma, opts.seed))
    report = {"functional": T.to_dict(), "atoms": list(sc.sigma.atoms)} | suite.to_dict()
    ok = all(r.verdict in ("pass", "vacuous") for r in suite.reports)
    return report | {"exit_code": EXIT_OK if ok else EXIT_FAIL}


def cmd_represent(sc: Scenario) -> dict:
    T = sc.functional()
    f = sc.require_f()
    opts = sc.options
    nulls = null_events(T, sc.sigma, _x_grid(sc, f))
    cls = classify_pi_g(T, sc.sigma, nulls)
    report = {"functional": T.to_dict(), "atoms": list(sc.sigma.atoms),
              "classification": cls.to_dict()}
    if not cls.nonempty:
        report["representation"] = {
            "skipped": True,
            "reason": (f"degenerate case {cls.empty_case}: fewer than three non-null atoms, "
                       "so no additive representation is extracted; the solver handles "
                       "this case atom by atom"),
        }
        return report | {"exit_code": EXIT_OK}
    try:
        P = induced_probability(T, sc.sigma, nulls)
        bracket = v_bracket(T, f, sc.sigma)
    except RepresentationError as exc:
        return report | {"error": str(exc), "exit_code": EXIT_FAIL}
    except SolverError as exc:
        return report | {"error": f"solver failed: {exc}", "exit_code": EXIT_FAIL}
    rng = np.random.default_rng(opts.seed)
    order = check_order_preservation(T, sc.sigma, f,
                                     sample_measurable(sc.sigma, rng, N_ORDER_SAMPLES),
                                     cap=opts.cap)
    fine = SigmaAlgebra.discrete(T.n)
    refine = check_refinement_consistency(
        T, fine, sc.sigma, [rng.uniform(-2, 2, T.n) for _ in range(N_ORDER_SAMPLES)])
    report["representation"] = {
        "skipped": False,
        "induced_probability": P.to_json(),
        "v_bracket": bracket.to_json(),
        "checks": [order.to_dict(), refine.to_dict()],
    }
    ok = order.passed and refine.passed
    return report | {"exit_code": EXIT_OK if ok else EXIT_FAIL}


def cmd_risk_roundtrip(sc: Scenario) -> dict:
    if sc.risk_spec is None:
        raise ScenarioError("risk-roundtrip needs a 'risk' entry in the scenario")
    opts = sc.options
    P = sc.weights
    risk = build_risk(sc.risk_spec, P)
    report = {"risk": dict(sc.risk_spec), "atoms": list(sc.sigma.atoms)}
    if is_scalar_only(risk):
        rm, rho0 = None, risk
    else:
        rm = risk
        axioms = check_conditional_axioms(rm, sc.sigma, P, opts.seed)
        report["conditional_axioms"] = axioms.to_dict()
        rho0 = scalarize(rm, sc.sigma, P)
    report["rho0_provenance"] = rho0.provenance
    conds = check_scalarization_conditions(rho0, sc.sigma, P, opts.seed, N_CONDITION_SAMPLES)
    report["conditions"] = conds.to_dict()
    if not conds.passed:
        report["reconstruction"] = {"skipped": True,
                                    "reason": "rho0 fails the scalarization conditions"}
        return report | {"exit_code": EXIT_FAIL}
    quant = check_quantized_convexity(rho0, sc.sigma, opts.seed)
    report["quantized_convexity"] = quant.to_dict()
    try:
        rec = reconstruct_conditional(rho0, sc.sigma, P)
        rt = roundtrip_against(rec, rho0, sc.sigma, P, rm, opts.seed, opts.n_X)
    except RiskError as exc:
        return report | {"error": str(exc), "exit_code": EXIT_FAIL}
    report["reconstruction"] = {"skipped": False, "notes": rec.notes,
                                "induced_P": rec.induced_P} | rt.to_dict()
    ok = rt.max_residual <= TOL_ROUNDTRIP and quant.passed
    if rm is not None:
        ok = ok and axioms.passed
    return report | {"exit_code": EXIT_OK if ok else EXIT_FAIL}


COMMANDS = {
    "solve": cmd_solve,
    "check-axioms": cmd_check_axioms,
    "represent": cmd_represent,
    "risk-roundtrip": cmd_risk_roundtrip,
}


def run(command: str, scenario_path: str, seed: int | None = None,
        tol: float | None = None) -> dict:
    """Build the cleaned report for one command."""
    head = {"command": command, "scenario": scenario_path}
    try:
        sc = load_scenario(scenario_path)
        opts = sc.options
        if seed is not None:
            opts = replace(opts, seed=seed)
        if tol is not None:
            if not tol > 0:
                raise ScenarioError("--tol must be positive")
            opts = replace(opts, tol_solve=tol)
        sc.options = opts
        head.update(scenario=sc.name, seed=opts.seed, tol_solve=opts.tol_solve)
        body = COMMANDS[command](sc)
    except ScenarioError as exc:
        body = {"error": str(exc), "exit_code": EXIT_INVALID}
    head.setdefault("seed", 0 if seed is None else seed)
    code = body["exit_code"]
    status = {EXIT_OK: "ok", EXIT_FAIL: "fail", EXIT_INVALID: "invalid"}[code]
    return _clean(head | body | {"status": status})


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, list):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


def _witness_summary(w: dict | None) -> str:
    if not w:
        return ""
    text = ", ".join(f"{k}={_fmt(v)}" for k, v in w.items())
    return text if len(text) <= 100 else text[:97] + "..."


def _table(reports, key="axiom") -> list[str]:
    lines = [f"  {'check':<24} {'verdict':<12} witness"]
    for r in reports:
        name = r.get(key, r.get("check", ""))
        lines.append(f"  {name:<24} {r['verdict']:<12} {_witness_summary(r.get('witness'))}")
    return lines


def render_text(report: dict) -> str:
    lines = [
        f"command   {report['command']}",
        f"scenario  {report['scenario']}",
        f"seed      {report['seed']}",
        f"status    {report['status']} (exit {report['exit_code']})",
    ]
    if "error" in report:
        lines.append(f"error     {report['error']}")
    if "atoms" in report:
        lines.append(f"atoms     {[hex(a) for a in report['atoms']]}")
    res = report.get("result")
    if res:
        lines.append(f"atom values   {_fmt(res['atom_values'])}")
        lines.append(f"null atoms    {res['null_atoms']}")
        lines.append(f"max residual  {_fmt(res['max_residual'])} over "
                     f"{len(res['residuals'])} events" + (" (sampled)" if res["sampled"] else ""))
    if "worst_event" in report:
        lines.append(f"worst event   {hex(report['worst_event'])}")
    if "closed_form_gap" in report:
        lines.append(f"closed-form gap  {_fmt(report['closed_form_gap'])}")
    for note in report.get("notes", []):
        lines.append(f"note: {note}")
    if "reports" in report:
        lines.append(f"null atoms    {report['null_events']['null_atoms']}")
        lines.extend(_table(report["reports"]))
    if "classification" in report:
        c = report["classification"]
        lines.append("Pi(G)         " + ("nonempty" if c["nonempty"] else f"empty ({c['empty_case']})"))
        rep = report.get("representation")
        if rep and rep["skipped"]:
            lines.append(f"representation skipped: {rep['reason']}")
        elif rep:
            lines.append(f"induced P     {_fmt(rep['induced_probability']['values'])}")
            lines.append(f"V[f]          {_fmt(rep['v_bracket']['values'])}")
            lines.extend(_table(rep["checks"], key="check"))
    if "conditions" in report:
        if "conditional_axioms" in report:
            lines.append("conditional risk axioms")
            lines.extend(_table(report["conditional_axioms"]["reports"]))
        lines.append(f"scalarization conditions (rho0 {report['rho0_provenance']})")
        lines.extend(_table(report["conditions"]["reports"]))
        if "quantized_convexity" in report:
            lines.extend(_table([report["quantized_convexity"]]))
        rec = report.get("reconstruction", {})
        if rec.get("skipped"):
            lines.append(f"reconstruction skipped: {rec['reason']}")
        elif rec:
            lines.append(f"round-trip max residual {_fmt(rec['max_residual'])} "
                         f"over {len(rec['residuals'])} X")
            for note in rec.get("notes", []):
                lines.append(f"note: {note}")
    return "\n".join(lines)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chisini", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="path to a scenario JSON file")
        p.add_argument("--json", action="store_true", help="print the JSON report")
        p.add_argument("--seed", type=int, default=None, help="override options.seed")
        p.add_argument("--tol", type=float, default=None, help="override options.tol_solve")
    return parser


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    report = run(args.command, args.scenario, args.seed, args.tol)
    sys.stdout.write(dumps(report) if args.json else render_text(report) + "\n")
    return report["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
