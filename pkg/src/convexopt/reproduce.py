"""Reproduction suites: closed-form optima, polygon structure, volume regime.

Each suite solves a fixed set of problems at desk scale (a = 1, b = 2,
N = 256, refinement to 512 where structure stability is asserted) and
checks the results against their analytic targets.  The suites return
(records, runs) so both the CLI table and the test suite consume the same
computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .certificates import (
    build_probe,
    corner_count_bound,
    default_probe_suite,
    second_order_check,
    split_corner,
)
from .functionals import builtin, derivative_bounds, second_order_form
from .geometry import analyze_structure
from .periodic import check_feasibility, lipschitz_bound_check, staggered_derivative
from .problem import AnnulusRegime, ProblemSpec, VolumeRegime
from .solver import SolverOptions, multistart, solve, solve_refined

A_DEFAULT, B_DEFAULT, N_DEFAULT = 1.0, 2.0, 256


@dataclass
class CheckRecord:
    suite: str
    name: str
    passed: bool
    detail: str


@dataclass
class SuiteRun:
    """One solved problem kept around for cross-suite checks."""

    label: str
    problem: ProblemSpec
    result: object
    structure: object = None
    fine_result: object = None
    fine_structure: object = None


def _annulus_problem(name, n=N_DEFAULT, **params):
    spec = builtin(name, a=A_DEFAULT, b=B_DEFAULT, **params)
    return ProblemSpec(spec, n, AnnulusRegime(A_DEFAULT, B_DEFAULT))


def _corner_match(coarse, fine, h):
    """Same corner count with locations matching within h (circularly)."""
    if coarse.n_corners != fine.n_corners or coarse.n_corners == 0:
        return coarse.n_corners == fine.n_corners
    tc = np.array([t for t, _ in coarse.corners])
    tf = np.array([t for t, _ in fine.corners])
    diffs = np.abs(tc[:, None] - tf[None, :])
    diffs = np.minimum(diffs, 2.0 * np.pi - diffs)
    # greedy circular matching: every coarse corner needs a fine partner
    return bool(np.all(diffs.min(axis=1) <= h) and np.all(diffs.min(axis=0) <= h))


def run_s51(grid_n=N_DEFAULT, seed=0, verbose=False):
    """Closed-form optima: the three sharpness cases plus the perimeter."""
    a, b = A_DEFAULT, B_DEFAULT
    opts = SolverOptions(seed=seed, verbose=verbose)
    records, runs = [], []

    prob = _annulus_problem("quad_circle", grid_n, c=1.5)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("quad_circle", prob, res, st))
    dev = float(np.abs(res.u_star.values - 1.5).max())
    records.append(CheckRecord(
        "s51", "quad_circle: u = c circle",
        res.status == "Converged" and dev <= 1e-6 and res.objective <= 1e-10,
        f"|u-c|={dev:.2e} objective={res.objective:.2e} verdict={st.verdict}"))

    prob = _annulus_problem("concave_circle_a", grid_n)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("concave_circle_a", prob, res, st))
    dev = float(np.abs(res.u_star.values - a).max())
    rel = abs(res.objective - np.pi * a ** 2) / (np.pi * a ** 2)
    records.append(CheckRecord(
        "s51", "concave_circle_a: value pi a^2, u = a",
        res.status == "Converged" and rel <= 1e-4 and dev <= 1e-4,
        f"objective={res.objective:.8f} rel_err={rel:.2e} |u-a|={dev:.2e}"))

    prob = _annulus_problem("concave_circle_b", grid_n)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("concave_circle_b", prob, res, st))
    rel = abs(res.objective + np.pi * b ** 2) / (np.pi * b ** 2)
    edges_ok = True
    detail_edges = "no flat edges"
    if st.edges:
        n = res.u_star.grid.n_points
        maxima = []
        for i, j in st.edges:
            idx = np.arange(i, i + ((j - i) % n) + 1) % n
            maxima.append(float(res.u_star.values[idx].max()))
        edges_ok = all(m >= b - 1e-3 for m in maxima)
        detail_edges = f"{len(maxima)} edges, min of edge maxima={min(maxima):.6f}"
    records.append(CheckRecord(
        "s51", "concave_circle_b: value -pi b^2, edges tangent to u=b",
        res.status == "Converged" and rel <= 1e-3 and edges_ok,
        f"objective={res.objective:.8f} rel_err={rel:.2e} {detail_edges}"))

    prob = _annulus_problem("neg_perimeter", grid_n)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("neg_perimeter", prob, res, st))
    dev = float(np.abs(res.u_star.values - a).max())
    rel = abs(res.objective + 2.0 * np.pi / a) / (2.0 * np.pi / a)
    records.append(CheckRecord(
        "s51", "neg_perimeter: u = a, value -2 pi / a",
        res.status == "Converged" and dev <= 1e-4 and rel <= 1e-4,
        f"objective={res.objective:.8f} rel_err={rel:.2e} |u-a|={dev:.2e}"))

    return records, runs


def run_s52(grid_n=N_DEFAULT, seed=0, verbose=False):
    """Hypothesis-sharpness cases: each breaks one polygon condition."""
    a, b = A_DEFAULT, B_DEFAULT
    opts = SolverOptions(seed=seed, verbose=verbose)
    records, runs = [], []

    prob = _annulus_problem("degenerate_i", grid_n)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("degenerate_i", prob, res, st))
    dev = float(np.abs(res.u_star.values - 1.5).max())
    records.append(CheckRecord(
        "s52", "degenerate_i: u = c circle, not a polygon",
        res.status == "Converged" and dev <= 1e-5
        and res.objective <= 1e-9 and st.verdict != "Polygon",
        f"|u-c|={dev:.2e} objective={res.objective:.2e} verdict={st.verdict}"))

    prob = _annulus_problem("cutoff_ii", grid_n)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("cutoff_ii", prob, res, st))
    dev = float(np.abs(res.u_star.values - a).max())
    records.append(CheckRecord(
        "s52", "cutoff_ii: u = a circle, not a polygon",
        res.status == "Converged" and dev <= 1e-4 and st.verdict != "Polygon",
        f"|u-a|={dev:.2e} verdict={st.verdict}"))

    prob = _annulus_problem("cutoff_iii", grid_n)
    res = solve(prob, opts)
    st = analyze_structure(res.u_star, a, b)
    runs.append(SuiteRun("cutoff_iii", prob, res, st))
    rel = abs(res.objective + np.pi * b ** 2) / (np.pi * b ** 2)
    records.append(CheckRecord(
        "s52", "cutoff_iii: value -pi b^2, not a polygon",
        res.status == "Converged" and rel <= 1e-3 and st.verdict != "Polygon",
        f"objective={res.objective:.8f} rel_err={rel:.2e} verdict={st.verdict}"))

    return records, runs


POLYGON_CASES = (
    ("crouzeix", {}),
    ("newton_like", {}),
    ("area_minus_perimeter", {"lam": 1.5}),
)


def run_polygons(grid_n=N_DEFAULT, seed=7, k=4, verbose=False):
    """Polygon structure: verdicts, refinement stability, corner bound."""
    a, b = A_DEFAULT, B_DEFAULT
    opts = SolverOptions(seed=seed, verbose=verbose)
    records, runs = [], []
    h_coarse = 2.0 * np.pi / grid_n

    for name, params in POLYGON_CASES:
        prob = _annulus_problem(name, grid_n, **params)
        res = multistart(prob, opts, k=k)
        st = analyze_structure(res.u_star, a, b)
        res2 = solve_refined(prob, opts, res, 2 * grid_n)
        st2 = analyze_structure(res2.u_star, a, b)
        runs.append(SuiteRun(name, prob, res, st, res2, st2))

        stable = _corner_match(st, st2, h_coarse)
        ok = (res.status == "Converged" and res2.status == "Converged"
              and st.verdict == "Polygon" and st2.verdict == "Polygon"
              and st.n_corners >= 3 and stable)
        detail = (f"verdicts {st.verdict}/{st2.verdict}, corners "
                  f"{st.n_corners}/{st2.n_corners}, stable={stable}")

        bounds = derivative_bounds(prob.functional, a, b)
        if bounds.strongly_concave:
            bound, _c = corner_count_bound(prob.functional, a, b)
            margin = 1e-7 * (b - a)
            interior = sum(
                1 for t, _m in st.corners
                if a + margin < res.u_star.values[
                    int(round(t / h_coarse)) % grid_n] < b - margin)
            ok = ok and interior <= bound
            detail += f", interior corners {interior} <= bound {bound}"
        records.append(CheckRecord("polygons", f"{name}: refinement-stable polygon",
                                   ok, detail))

    return records, runs


def run_volume(grid_n=N_DEFAULT, seed=3, k=4, verbose=False):
    """Area-constrained regime: exact circle target and a polygon optimum."""
    c = 1.5
    m0 = np.pi / c ** 2
    opts = SolverOptions(seed=seed, verbose=verbose)
    records, runs = [], []

    prob = ProblemSpec(builtin("quad_circle", c=c), grid_n, VolumeRegime(m0))
    res = solve(prob, opts)
    runs.append(SuiteRun("quad_circle_volume", prob, res))
    from .geometry import area

    gap = abs(area(res.u_star) - m0)
    dev = float(np.abs(res.u_star.values - c).max())
    records.append(CheckRecord(
        "volume", "quad_circle under m(u) = pi/c^2",
        res.status == "Converged" and gap <= 1e-9 * m0
        and res.certificate.stationarity_residual <= 1e-8 and dev <= 1e-6,
        f"gap={gap:.2e} residual={res.certificate.stationarity_residual:.2e} "
        f"|u-c|={dev:.2e} mu={res.certificate.mu:.3e}"))

    prob2 = ProblemSpec(builtin("concave_circle_a"), grid_n, VolumeRegime(m0))
    res2 = multistart(prob2, opts, k=k)
    lo, hi = prob2.regime.box
    st = analyze_structure(res2.u_star, lo, hi)
    res2f = solve_refined(prob2, opts, res2, 2 * grid_n)
    st2 = analyze_structure(res2f.u_star, lo, hi)
    runs.append(SuiteRun("concave_volume", prob2, res2, st, res2f, st2))
    # the minimizer set of this problem is a flat family (linear images of
    # one triangle share the objective), so refinement stability means the
    # corner count, not the corner positions
    stable = st.n_corners == st2.n_corners
    records.append(CheckRecord(
        "volume", "strongly concave functional: polygon with stable corners",
        res2.status == "Converged" and st.verdict == "Polygon"
        and st.n_corners >= 3 and st2.verdict == "Polygon" and stable,
        f"verdicts {st.verdict}/{st2.verdict}, corners {st.n_corners}/{st2.n_corners}, "
        f"objective={res2.objective:.6f}, safeguard={res2.safeguard_active}"))

    return records, runs


def second_order_records(runs):
    """Criterion checks for probes: no admissible failures on converged runs,
    and the split-corner perturbation produces a negative form."""
    records = []
    n_admissible = 0
    all_pass = True
    crouzeix_run = None
    for run in runs:
        if run.result.status != "Converged" or run.structure is None:
            continue
        if run.problem.regime.kind != "annulus":
            continue
        if run.label == "crouzeix":
            crouzeix_run = run
        probes = default_probe_suite(run.result.u_star, run.problem, run.structure)
        checks = second_order_check(run.result.u_star, run.result.certificate, probes)
        for _p, form, ok in checks:
            if form is not None:
                n_admissible += 1
                all_pass = all_pass and ok
    records.append(CheckRecord(
        "second_order", "default probe suites pass on converged runs",
        all_pass, f"{n_admissible} admissible probes evaluated"))

    if crouzeix_run is not None:
        u = crouzeix_run.result.u_star
        n = u.grid.n_points
        h = u.grid.spacing
        # split the heaviest corner and probe across the pair
        theta_c = max(crouzeix_run.structure.corners, key=lambda cm: cm[1])[0]
        u_pert = split_corner(u, theta_c, cells=4)
        ok_feas = check_feasibility(u_pert, crouzeix_run.problem).feasible
        cidx = int(round(theta_c / h)) % n
        probe = build_probe(u_pert, "single_atom_hat",
                            ((cidx - 6) % n, (cidx + 6) % n), crouzeix_run.problem)
        form = second_order_form(crouzeix_run.problem.functional, u_pert,
                                 probe.direction) if probe.admissible else np.nan
        records.append(CheckRecord(
            "second_order", "split corner admits a negative-form probe",
            bool(ok_feas and probe.admissible and form < 0.0),
            f"form={form:.4f} feasible={ok_feas}"))
    return records


def certificate_records(runs, kkt_tol=1e-8):
    """Criterion checks shared by every converged run: KKT quality and the
    a-priori slope bounds."""
    from .functionals import gradient
    from .geometry import atom_mask

    records = []
    for run in runs:
        res = run.result
        if res.status != "Converged":
            records.append(CheckRecord("certificates", f"{run.label}: converged",
                                       False, res.status))
            continue
        cert = res.certificate
        u = res.u_star
        gnorm = float(np.abs(gradient(run.problem.functional, u)).max())
        resid_ok = cert.stationarity_residual <= kkt_tol * (1.0 + gnorm)
        comp = max(cert.comp_zeta, cert.comp_a, cert.comp_b)
        signs_ok = bool(cert.zeta.min() >= -1e-14)
        if cert.regime == "annulus":
            signs_ok = signs_ok and cert.mu_a.min() >= -1e-14 and cert.mu_b.min() >= -1e-14
        atoms = atom_mask(u)
        zeta_atoms = float(np.abs(cert.zeta[atoms]).max()) if atoms.any() else 0.0
        records.append(CheckRecord(
            "certificates", f"{run.label}: KKT certificate",
            resid_ok and comp <= 1e-7 and signs_ok and zeta_atoms == 0.0,
            f"residual={cert.stationarity_residual:.2e} comp={comp:.2e} "
            f"zeta_on_atoms={zeta_atoms:.1e}"))

        b_box = run.problem.regime.b if run.problem.regime.kind == "annulus" \
            else run.problem.regime.box[1]
        ok_iter = res.max_slope_iterates <= 2.0 * np.pi * b_box + 1e-9
        records.append(CheckRecord(
            "bounds", f"{run.label}: iterate slopes within 2 pi b",
            ok_iter, f"max over iterates {res.max_slope_iterates:.4f} "
            f"vs {2 * np.pi * b_box:.4f}"))
    return records


def no_interior_support_records(runs):
    """Sharper slope bound for solutions without interior curvature support."""
    records = []
    for run in runs:
        if run.label not in ("concave_circle_a", "concave_circle_b", "neg_perimeter"):
            continue
        res = run.result
        a, b = run.problem.regime.a, run.problem.regime.b
        p = staggered_derivative(res.u_star)
        bound = np.sqrt(2.0 * b * (b - a)) + 1e-6
        mx = float(np.abs(p).max())
        records.append(CheckRecord(
            "bounds", f"{run.label}: slope within sqrt(2b(b-a))",
            mx <= bound, f"max|u'|={mx:.6f} bound={np.sqrt(2*b*(b-a)):.6f}"))
    return records


SUITES = {
    "s51": run_s51,
    "s52": run_s52,
    "polygons": run_polygons,
    "volume": run_volume,
}


def run_suite(name, grid_n=N_DEFAULT, seed=None, verbose=False):
    """Run one named suite plus the cross-cutting certificate checks."""
    if name not in SUITES:
        raise KeyError(name)
    kwargs = {"grid_n": grid_n, "verbose": verbose}
    if seed is not None:
        kwargs["seed"] = seed
    records, runs = SUITES[name](**kwargs)
    records.extend(certificate_records(runs))
    if name == "s51":
        records.extend(no_interior_support_records(runs))
    if name in ("s51", "s52", "polygons"):
        records.extend(second_order_records(runs))
    return records, runs
