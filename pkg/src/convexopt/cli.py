"""Command line front end: solve, verify, reproduce.

Problems are described by JSON files; the effective configuration (all
defaults materialized) is echoed next to the outputs so a run can be
reproduced bit for bit.  Exit codes: 0 success, 1 usage/configuration
error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .certificates import certificate_to_dict, default_probe_suite, second_order_check
from .functionals import BUILTIN_NAMES, builtin
from .geometry import analyze_structure, export_csv, export_svg, structure_to_dict
from .periodic import check_feasibility, read_radial_csv
from .problem import AnnulusRegime, ProblemSpec, VolumeRegime
from .report import records_table, render_figure, text_report
from .reproduce import SUITES, run_suite
from .solver import SolverError, SolverOptions, multistart, project_feasible, solve


class ConfigError(ValueError):
    """Problem-file schema violation; message lists JSON pointers."""


_SOLVER_KEYS = {"kkt_tol", "max_outer", "barrier_start", "barrier_shrink",
                "polish", "seed"}
_OUTPUT_KEYS = {"svg", "csv", "certificate"}


def _fail(errors):
    raise ConfigError("\n".join(errors))


def parse_problem_file(doc: dict):
    """Validate a problem document and materialize all defaults.

    Returns (ProblemSpec, SolverOptions fields dict, outputs dict,
    effective config dict).  Unknown keys are rejected with JSON pointers.
    """
    errors = []
    if not isinstance(doc, dict):
        _fail(["/: document must be a JSON object"])
    unknown = set(doc) - {"functional", "regime", "grid_n", "solver", "outputs"}
    for key in sorted(unknown):
        errors.append(f"/{key}: unknown key")

    func = doc.get("functional")
    if not isinstance(func, dict) or "name" not in func:
        errors.append("/functional: need an object with a 'name'")
        func = {"name": "quad_circle"}
    for key in sorted(set(func) - {"name", "params"}):
        errors.append(f"/functional/{key}: unknown key")
    fname = func.get("name")
    if fname not in BUILTIN_NAMES:
        errors.append(f"/functional/name: unknown functional {fname!r}; "
                      f"choose one of {', '.join(BUILTIN_NAMES)}")
    params = func.get("params", {})
    if not isinstance(params, dict):
        errors.append("/functional/params: must be an object")
        params = {}

    regime_doc = doc.get("regime", {"type": "annulus", "a": 1.0, "b": 2.0})
    rtype = regime_doc.get("type") if isinstance(regime_doc, dict) else None
    regime = None
    if rtype == "annulus":
        for key in sorted(set(regime_doc) - {"type", "a", "b"}):
            errors.append(f"/regime/{key}: unknown key")
        a = float(regime_doc.get("a", 1.0))
        b = float(regime_doc.get("b", 2.0))
        if not a < b:
            errors.append("/regime/a: regime.a must be < regime.b")
        elif a <= 0:
            errors.append("/regime/a: must be positive")
        else:
            regime = AnnulusRegime(a, b)
    elif rtype == "volume":
        for key in sorted(set(regime_doc) - {"type", "m0", "box"}):
            errors.append(f"/regime/{key}: unknown key")
        m0 = float(regime_doc.get("m0", np.pi))
        box = regime_doc.get("box")
        if m0 <= 0:
            errors.append("/regime/m0: must be positive")
        else:
            try:
                regime = VolumeRegime(m0, tuple(box) if box else None)
            except ValueError as exc:
                errors.append(f"/regime/box: {exc}")
    else:
        errors.append("/regime/type: must be 'annulus' or 'volume'")

    grid_n = doc.get("grid_n", 256)
    if not isinstance(grid_n, int) or grid_n < 8 or grid_n % 2:
        errors.append("/grid_n: must be an even integer >= 8")
        grid_n = 256

    solver_doc = doc.get("solver", {})
    if not isinstance(solver_doc, dict):
        errors.append("/solver: must be an object")
        solver_doc = {}
    multistart_k = solver_doc.get("multistart", 1)
    for key in sorted(set(solver_doc) - _SOLVER_KEYS - {"multistart"}):
        errors.append(f"/solver/{key}: unknown key")

    outputs = doc.get("outputs", {})
    if not isinstance(outputs, dict):
        errors.append("/outputs: must be an object")
        outputs = {}
    for key in sorted(set(outputs) - _OUTPUT_KEYS):
        errors.append(f"/outputs/{key}: unknown key")

    if errors:
        _fail(errors)

    if regime.kind == "annulus":
        spec = builtin(fname, a=regime.a, b=regime.b, **params)
    else:
        spec = builtin(fname, **params)
    problem = ProblemSpec(spec, grid_n, regime)
    opts_fields = {k: solver_doc[k] for k in _SOLVER_KEYS if k in solver_doc}
    options = SolverOptions(**opts_fields)

    effective = {
        "functional": {"name": fname, "params": spec.params},
        "regime": ({"type": "annulus", "a": regime.a, "b": regime.b}
                   if regime.kind == "annulus"
                   else {"type": "volume", "m0": regime.m0, "box": list(regime.box)}),
        "grid_n": grid_n,
        "solver": {**asdict(options), "multistart": multistart_k},
        "outputs": {k: outputs.get(k, f"{k_default}")
                    for k, k_default in (("svg", "shape.svg"), ("csv", "u.csv"),
                                         ("certificate", "certificate.json"))},
    }
    return problem, options, int(multistart_k), effective


def _load_problem(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}")
    return parse_problem_file(doc)


def _write_outputs(out_dir, problem, result, structure, effective, probes=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = effective["outputs"]
    export_csv(result.u_star, out / names["csv"])
    if problem.regime.kind == "annulus":
        a, b = problem.regime.a, problem.regime.b
    else:
        a, b = problem.regime.box
    export_svg(result.u_star, out / names["svg"], a=a, b=b, structure=structure)
    cert_doc = certificate_to_dict(result.certificate, probes)
    cert_doc["structure"] = structure_to_dict(structure)
    cert_doc["objective"] = result.objective
    cert_doc["status"] = result.status
    with open(out / names["certificate"], "w") as f:
        json.dump(cert_doc, f, indent=1)
    with open(out / "effective_config.json", "w") as f:
        json.dump(effective, f, indent=1)
    report = text_report(result, structure, problem)
    with open(out / "report.txt", "w") as f:
        f.write(report)
    render_figure(result, structure, problem, out / "figure.svg")
    return report


def cmd_solve(args) -> int:
    try:
        problem, options, k, effective = _load_problem(args.problem)
    except ConfigError as exc:
        print(f"configuration error:\n{exc}", file=sys.stderr)
        return 1
    if args.grid is not None:
        problem = problem.with_grid(args.grid)
        effective["grid_n"] = args.grid
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.verbose:
        overrides["verbose"] = True
    if overrides:
        from dataclasses import replace
        options = replace(options, **overrides)
        effective["solver"].update(overrides)
    if args.multistart is not None:
        k = args.multistart
        effective["solver"]["multistart"] = k

    print(json.dumps(effective, indent=1))
    try:
        result = multistart(problem, options, k=k) if k > 1 \
            else solve(problem, options)
    except SolverError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return 2
    if problem.regime.kind == "annulus":
        a, b = problem.regime.a, problem.regime.b
    else:
        a, b = problem.regime.box
    structure = analyze_structure(result.u_star, a, b)
    probes = default_probe_suite(result.u_star, problem, structure)
    second_order_check(result.u_star, result.certificate, probes)
    report = _write_outputs(args.out, problem, result, structure, effective, probes)
    print(report, end="")
    return 0 if result.status == "Converged" else 2


def cmd_verify(args) -> int:
    try:
        problem, options, _k, effective = _load_problem(args.problem)
        u = read_radial_csv(args.u_csv)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if u.grid.n_points != problem.grid_n:
        problem = problem.with_grid(u.grid.n_points)
        effective["grid_n"] = u.grid.n_points
    if args.project and problem.regime.kind == "annulus":
        u = project_feasible(u, problem)

    from .certificates import recover_multipliers
    from .functionals import eval_functional, gradient

    feas = check_feasibility(u, problem)
    cert = recover_multipliers(u, problem)
    if problem.regime.kind == "annulus":
        a, b = problem.regime.a, problem.regime.b
    else:
        a, b = problem.regime.box
    structure = analyze_structure(u, a, b) if feas.feasible else None
    probes = (default_probe_suite(u, problem, structure)
              if structure is not None else [])
    checks = second_order_check(u, cert, probes)

    gnorm = float(np.abs(gradient(problem.functional, u)).max())
    stationary = cert.stationarity_residual <= options.kkt_tol * (1.0 + gnorm)
    probes_ok = all(ok is not False for _p, _f, ok in checks)
    print(f"feasible:      {feas.feasible} (min mass {feas.min_cone_mass:.2e}, "
          f"box violation {feas.box_violation:.2e})")
    print(f"objective:     {eval_functional(problem.functional, u):.12g}")
    print(f"stationarity:  {cert.stationarity_residual:.3e} "
          f"({'ok' if stationary else 'too large'})")
    print(f"second order:  {sum(1 for _p, f, _ok in checks if f is not None)} probes "
          f"evaluated, {'all pass' if probes_ok else 'FAILURES'}")
    if structure is not None:
        print(f"verdict:       {structure.verdict} ({structure.n_corners} corners)")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cert_doc = certificate_to_dict(cert, [p for p, _f, _ok in checks])
    if structure is not None:
        cert_doc["structure"] = structure_to_dict(structure)
    with open(out / "certificate.json", "w") as f:
        json.dump(cert_doc, f, indent=1)
    return 0 if (feas.feasible and stationary and probes_ok) else 2


def cmd_reproduce(args) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; available: {', '.join(sorted(SUITES))}",
              file=sys.stderr)
        return 1
    records, _runs = run_suite(args.suite, grid_n=args.grid or 256,
                               verbose=args.verbose)
    table = records_table(records)
    print(table, end="")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"reproduce_{args.suite}.txt", "w") as f:
        f.write(table)
    return 0 if all(r.passed for r in records) else 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convexopt",
        description="Convexity-constrained shape optimization with certificates")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a problem file")
    p_solve.add_argument("--problem", required=True, help="problem JSON path")
    p_solve.add_argument("--out", default="out", help="output directory")
    p_solve.add_argument("--multistart", type=int, default=None, metavar="K")
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--grid", type=int, default=None, metavar="N")
    p_solve.add_argument("--verbose", action="store_true")
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser("verify", help="certify an external shape CSV")
    p_verify.add_argument("u_csv", help="CSV with header theta,u")
    p_verify.add_argument("--problem", required=True)
    p_verify.add_argument("--out", default="out")
    p_verify.add_argument("--project", action="store_true",
                          help="project to feasibility first")
    p_verify.set_defaults(func=cmd_verify)

    p_rep = sub.add_parser("reproduce", help="run a reproduction suite")
    p_rep.add_argument("suite", help=f"one of: {', '.join(sorted(SUITES))}")
    p_rep.add_argument("--out", default="out")
    p_rep.add_argument("--grid", type=int, default=None, metavar="N")
    p_rep.add_argument("--verbose", action="store_true")
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
