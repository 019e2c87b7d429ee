"""Optimality certificates: multiplier recovery and second-order probes.

First order, a candidate minimizer must admit nonnegative multipliers
(zeta for the convexity cone, mu_a / mu_b for the box, or a scalar mu for
the area equality) with

    grad j = A^T zeta + mu_a - mu_b        (annulus)
    grad j = A^T zeta + mu * grad m        (volume)

and complementarity: zeta vanishes wherever the curvature measure has
mass, mu_a / mu_b live only on box-contact cells.  Recovery is a support-
restricted nonnegative least-squares fit, independent of the solver path,
so certificates also apply to externally supplied shapes.

Second order, compactly supported directions v with v'' + v controlled by
the curvature measure must give a nonnegative Hessian form.  Probes are
built from three patterns: analytic sine hats peaked at one corner,
discrete hats from a tridiagonal solve, and multi-window combinations
whose one-sided slopes vanish at the support boundary.  A negative form
certifies that a stationary point is not a minimizer; this is the
mechanism that rules out accumulating corners.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .functionals import (
    FunctionalSpec,
    derivative_bounds,
    eval_functional,
    gradient,
    second_order_form,
)
from .geometry import area_gradient, area_hessian_form, atom_mask
from .periodic import RadialFunction, convexity_matrix, convexity_measure


@dataclass
class KKTCertificate:
    u: RadialFunction
    problem: object
    zeta: np.ndarray
    mu_a: np.ndarray = None          # annulus regime
    mu_b: np.ndarray = None
    mu: float = None                 # volume regime
    stationarity_residual: float = 0.0
    comp_zeta: float = 0.0
    comp_a: float = 0.0
    comp_b: float = 0.0
    classification: str = "clean"    # or "ambiguous"

    @property
    def regime(self) -> str:
        return self.problem.regime.kind


@dataclass
class SecondOrderProbe:
    window: tuple                    # node-index window (start, end)
    pattern: str                     # sine_hat | single_atom_hat | chi_measure
    direction: np.ndarray
    lambda_used: float = 0.0
    admissible: bool = True
    reject_reason: str = ""
    form_value: float = None


def _zeta_support(nu: np.ndarray, tol: float) -> np.ndarray:
    """Complementarity support: zeta may be nonzero only on zero-mass cells."""
    return nu <= tol


def _nnls_fit(g, cols):
    if cols:
        m = np.column_stack(cols)
        coef, _ = scipy.optimize.nnls(m, g)
        resid = g - m @ coef
    else:
        coef = np.zeros(0)
        resid = g.copy()
    return coef, resid


def recover_multipliers(u: RadialFunction, problem,
                        zeta_tol: float = 1e-8,
                        eps_box: float = None) -> KKTCertificate:
    """Recover (zeta, mu_a, mu_b) or (zeta, mu) by restricted NNLS.

    Supports are classified from u alone: zeta on cells with (numerically)
    zero curvature mass, box multipliers on cells touching a or b.  Cells
    within a factor 10 of the zeta support threshold are ambiguous; both
    classifications are tried and the better residual kept.
    """
    grid = u.grid
    n = grid.n_points
    A = convexity_matrix(grid)
    nu = convexity_measure(u).masses
    spec = problem.functional
    g = gradient(spec, u)
    volume = problem.regime.kind == "volume"

    supports = [_zeta_support(nu, zeta_tol)]
    band = (~supports[0]) & (nu <= 10.0 * zeta_tol)
    ambiguous = bool(band.any())
    if ambiguous:
        supports.append(supports[0] | band)

    if volume:
        gm = area_gradient(u)
        box_a = box_b = np.zeros(n, dtype=bool)
    else:
        a, b = problem.regime.a, problem.regime.b
        if eps_box is None:
            eps_box = 1e-6 * (b - a)
        box_a = np.abs(u.values - a) <= eps_box
        box_b = np.abs(b - u.values) <= eps_box

    best = None
    for supp in supports:
        zeta_idx = np.flatnonzero(supp)
        cols = [A[:, i] for i in zeta_idx]
        if volume:
            cols.append(gm)
            cols.append(-gm)
        else:
            a_idx = np.flatnonzero(box_a)
            b_idx = np.flatnonzero(box_b)
            eye = np.eye(n)
            cols.extend(eye[:, i] for i in a_idx)
            cols.extend(-eye[:, i] for i in b_idx)
        coef, resid = _nnls_fit(g, cols)
        res_norm = float(np.abs(resid).max())
        if best is None or res_norm < best[0]:
            best = (res_norm, supp, zeta_idx, coef)

    res_norm, supp, zeta_idx, coef = best
    zeta = np.zeros(n)
    k = len(zeta_idx)
    zeta[zeta_idx] = coef[:k]
    if volume:
        mu = float(coef[k] - coef[k + 1]) if len(coef) >= k + 2 else 0.0
        cert = KKTCertificate(
            u=u, problem=problem, zeta=zeta, mu=mu,
            stationarity_residual=res_norm,
            comp_zeta=float(np.abs(zeta * nu).max()),
            classification="ambiguous" if ambiguous else "clean",
        )
        return cert
    mu_a = np.zeros(n)
    mu_b = np.zeros(n)
    a_idx = np.flatnonzero(box_a)
    b_idx = np.flatnonzero(box_b)
    mu_a[a_idx] = coef[k:k + len(a_idx)]
    mu_b[b_idx] = coef[k + len(a_idx):k + len(a_idx) + len(b_idx)]
    return KKTCertificate(
        u=u, problem=problem, zeta=zeta, mu_a=mu_a, mu_b=mu_b,
        stationarity_residual=res_norm,
        comp_zeta=float(np.abs(zeta * nu).max()),
        comp_a=float(np.abs(mu_a * (u.values - problem.regime.a)).max()),
        comp_b=float(np.abs(mu_b * (problem.regime.b - u.values)).max()),
        classification="ambiguous" if ambiguous else "clean",
    )


def stationarity_test(cert: KKTCertificate, v: np.ndarray) -> float:
    """Pair the stationarity residual with a direction v."""
    v = np.asarray(v, dtype=float)
    u = cert.u
    A = convexity_matrix(u.grid)
    g = gradient(cert.problem.functional, u)
    out = g @ v - cert.zeta @ (A @ v)
    if cert.regime == "volume":
        out -= cert.mu * (area_gradient(u) @ v)
    else:
        out -= cert.mu_a @ v - cert.mu_b @ v
    return float(out)


def certificate_to_dict(cert: KKTCertificate, probes=None) -> dict:
    out = {
        "zeta": cert.zeta.tolist(),
        "residuals": {
            "stationarity": cert.stationarity_residual,
            "comp_zeta": cert.comp_zeta,
            "comp_a": cert.comp_a,
            "comp_b": cert.comp_b,
        },
        "classification": cert.classification,
    }
    if cert.regime == "volume":
        out["mu"] = cert.mu
    else:
        out["mu_a"] = cert.mu_a.tolist()
        out["mu_b"] = cert.mu_b.tolist()
    if probes is not None:
        out["probes"] = [
            {
                "window": list(p.window),
                "pattern": p.pattern,
                "form": p.form_value,
                "pass": (p.form_value is not None and p.form_value >= -_soc_tol(cert)),
                "admissible": p.admissible,
                "reason": p.reject_reason,
            }
            for p in probes
        ]
    return out


def _soc_tol(cert: KKTCertificate) -> float:
    return 1e-6 * (1.0 + abs(eval_functional(cert.problem.functional, cert.u)))


# ---------------------------------------------------------------------------
# probe construction
# ---------------------------------------------------------------------------

def _window_indices(n, lo, hi):
    if hi >= lo:
        return np.arange(lo, hi + 1)
    return np.concatenate([np.arange(lo, n), np.arange(0, hi + 1)])


def _span(n, lo, hi, h):
    return ((hi - lo) % n) * h


def build_probe(u: RadialFunction, pattern: str, window, problem=None) -> SecondOrderProbe:
    """Build a compactly supported second-order probe direction.

    pattern "sine_hat": window = (i1, i2, i3), corner node indices in
    circular order; v is the analytic hat sin(.)sin(.) peaked at i2 and
    supported on (theta_1, theta_3).

    pattern "single_atom_hat": window = (l, r); v solves the discrete
    Dirichlet system (v'' + v) = unit mass at the largest interior atom
    cell, v = 0 outside.

    pattern "chi_measure": window = (l, r) whose cells at l and r carry no
    mass; v is a combination of per-atom-cell solutions whose boundary
    cells carry exactly zero mass (one-sided slopes vanish at the window
    ends).  Needs at least 3 atom cells inside (4 in the volume regime,
    where the extra area-orthogonality condition is imposed).

    Windows must span less than pi.  Tangent-cone admissibility (the
    existence of the scalar lambda) is sign-checked cell by cell: the
    direction must be nonnegative where u sits exactly on a, nonpositive
    where it sits exactly on b, and carry nonnegative mass on zero cells.
    """
    n = u.grid.n_points
    h = u.grid.spacing
    theta = u.grid.nodes
    nu = convexity_measure(u).masses

    def rejected(reason, win):
        return SecondOrderProbe(window=tuple(win), pattern=pattern,
                                direction=np.zeros(n), admissible=False,
                                reject_reason=reason)

    if pattern == "sine_hat":
        i1, i2, i3 = (int(i) % n for i in window)
        span = _span(n, i1, i3, h)
        if span >= np.pi or span <= 0.0:
            return rejected(f"window spans {span:.3f} >= pi", (i1, i3))
        t1, t2 = theta[i1], theta[i1] + _span(n, i1, i2, h)
        t3 = theta[i1] + span
        v = np.zeros(n)
        idx = _window_indices(n, i1, i3)
        tw = theta[i1] + np.arange(len(idx)) * h
        left = tw <= t2
        v[idx[left]] = np.sin(tw[left] - t1) * np.sin(t3 - t2)
        v[idx[~left]] = np.sin(t2 - t1) * np.sin(t3 - tw[~left])
        probe = SecondOrderProbe(window=(i1, i3), pattern=pattern, direction=v)
        return _admissibility(probe, u, nu, problem)

    l, r = (int(i) % n for i in window)
    span = _span(n, l, r, h)
    if span >= np.pi or span <= 0.0:
        return rejected(f"window spans {span:.3f} >= pi", (l, r))
    idx = _window_indices(n, l, r)
    interior = idx[1:-1]
    if len(interior) < 1:
        return rejected("window too narrow", (l, r))
    atoms_in = interior[atom_mask(u)[interior]]

    if pattern == "single_atom_hat":
        if len(atoms_in) == 0:
            return rejected("no atom cell inside window", (l, r))
        center = atoms_in[np.argmax(nu[atoms_in])]
        n_int = len(interior)
        T = np.zeros((n_int, n_int))
        rhs = np.zeros(n_int)
        pos = {int(i): k for k, i in enumerate(interior)}
        for k, i in enumerate(interior):
            T[k, k] = -2.0 / h + h
            for j in ((i - 1) % n, (i + 1) % n):
                if int(j) in pos:
                    T[k, pos[int(j)]] += 1.0 / h
        rhs[pos[int(center)]] = 1.0
        sol = np.linalg.solve(T, rhs)
        v = np.zeros(n)
        v[interior] = sol
        v /= max(np.abs(v).max(), 1e-300)
        probe = SecondOrderProbe(window=(l, r), pattern=pattern, direction=v)
        return _admissibility(probe, u, nu, problem)

    if pattern == "chi_measure":
        volume = problem is not None and problem.regime.kind == "volume"
        need = 4 if volume else 3
        if len(atoms_in) < need:
            return rejected(
                f"need >= {need} atom cells for the boundary conditions, "
                f"found {len(atoms_in)}", (l, r))
        n_int = len(interior)
        m = len(atoms_in)
        # unknowns: v on interior nodes, then one coefficient per atom cell
        n_eq = len(idx) + (1 if volume else 0)
        M = np.zeros((n_eq, n_int + m))
        pos = {int(i): k for k, i in enumerate(interior)}
        apos = {int(i): k for k, i in enumerate(atoms_in)}
        for row, i in enumerate(idx):
            # cell equation: nu(v)_i - lambda_w nu_i = 0
            for j, c in (((i - 1) % n, 1.0 / h), (i, -2.0 / h + h), ((i + 1) % n, 1.0 / h)):
                if int(j) in pos:
                    M[row, pos[int(j)]] += c
            if int(i) in apos:
                M[row, n_int + apos[int(i)]] = -nu[i]
        if volume:
            gm = area_gradient(u)
            M[-1, :n_int] = gm[interior]
        _, svals, vt = np.linalg.svd(M)
        null = vt[-1]
        resid = float(np.abs(M @ null).max())
        if resid > 1e-9 * max(1.0, float(np.abs(M).max())):
            return rejected("no nontrivial combination kills the boundary slopes", (l, r))
        v = np.zeros(n)
        v[interior] = null[:n_int]
        lam = null[n_int:]
        if np.abs(v).max() < 1e-12:
            return rejected("only the trivial combination found", (l, r))
        scale = np.abs(v).max()
        sign = np.sign(lam[np.argmax(np.abs(lam))]) or 1.0
        v *= sign / scale
        probe = SecondOrderProbe(window=(l, r), pattern=pattern, direction=v)
        return _admissibility(probe, u, nu, problem)

    raise ValueError(f"unknown probe pattern {pattern!r}")


def _admissibility(probe: SecondOrderProbe, u: RadialFunction, nu: np.ndarray,
                   problem=None, tol_factor: float = 50.0) -> SecondOrderProbe:
    """Check existence of the tangent-cone scalar lambda for the direction.

    The cone asks for some real lambda with nu(v) >= lambda * nu(u) and,
    in the annulus regime, v >= lambda (u - a), v <= lambda (u - b).  With
    lambda << 0 every cell with positive slack is harmless; the binding
    conditions are signs on exactly-active cells: nu(v) >= -tol on zero
    cells, v >= -tol where u = a, v <= tol where u = b.  The recorded
    lambda_used is the most negative ratio the massive cells force.
    """
    from .periodic import convexity_masses

    h = u.grid.spacing
    v = probe.direction
    nv = convexity_masses(v, h)
    vmax = max(np.abs(v).max(), 1e-300)
    tol = tol_factor * h ** 3 * vmax + 1e-12
    mass_tol = 1e-10 * max(1.0, float(u.values.mean()))
    zero_cells = nu <= mass_tol
    if np.any(nv[zero_cells] < -tol):
        probe.admissible = False
        probe.reject_reason = "negative probe mass on a zero cell"
        return probe
    lam_candidates = [0.0]
    with np.errstate(divide="ignore"):
        ratios = nv[~zero_cells] / nu[~zero_cells]
    if ratios.size:
        lam_candidates.append(float(ratios.min()))
    if problem is not None and problem.regime.kind == "annulus":
        a, b = problem.regime.a, problem.regime.b
        exact = 1e-12 * (b - a)
        sign_tol = 1e-12 * vmax
        on_a = np.abs(u.values - a) <= exact
        on_b = np.abs(b - u.values) <= exact
        if np.any(v[on_a] < -sign_tol):
            probe.admissible = False
            probe.reject_reason = "negative direction on a cell pinned at u=a"
            return probe
        if np.any(v[on_b] > sign_tol):
            probe.admissible = False
            probe.reject_reason = "positive direction on a cell pinned at u=b"
            return probe
        off_a = (~on_a) & (v < 0.0)
        if np.any(off_a):
            lam_candidates.append(float((v[off_a] / (u.values[off_a] - a)).min()))
        off_b = (~on_b) & (v > 0.0)
        if np.any(off_b):
            lam_candidates.append(float((v[off_b] / (u.values[off_b] - b)).min()))
    probe.lambda_used = min(lam_candidates)
    probe.admissible = True
    return probe


def second_order_check(u: RadialFunction, cert: KKTCertificate, probes,
                       require_stationarity: bool = True):
    """Evaluate the Hessian form on each admissible probe.

    Eligibility for the second-order condition needs the multiplier
    pairing of the direction to vanish: a probe that pushes into an
    active multiplier (zeta mass, box contact, or the area multiplier)
    sees a first-order increase and certifies nothing.  For eligible
    probes the returned form is the second directional derivative of j_h
    (minus mu times the area Hessian form in the volume regime, i.e. the
    reduced Lagrangian curvature); pass means form >= -eps_soc with
    eps_soc = 1e-6 * (1 + |j_h(u)|).  Skipped probes record their reason.

    Returns [(probe, form_value, passed)].
    """
    spec = cert.problem.functional
    eps_soc = _soc_tol(cert)
    g = gradient(spec, u)
    pair_tol = 1e-3 * (1.0 + abs(eval_functional(spec, u)))
    out = []
    for probe in probes:
        if not probe.admissible:
            out.append((probe, None, None))
            continue
        if require_stationarity:
            v = probe.direction
            resid_pair = stationarity_test(cert, v)
            mult_pair = float(g @ v) - resid_pair
            if abs(mult_pair) > pair_tol or abs(resid_pair) > pair_tol:
                probe.admissible = False
                probe.reject_reason = (
                    f"first-order pairing {mult_pair:.2e} does not vanish")
                out.append((probe, None, None))
                continue
        form = second_order_form(spec, u, probe.direction)
        if cert.regime == "volume":
            form -= cert.mu * area_hessian_form(u, probe.direction)
        probe.form_value = form
        out.append((probe, form, bool(form >= -eps_soc)))
    return out


def corner_count_bound(spec: FunctionalSpec, a: float, b: float,
                       samples: int = 128):
    """Upper bound on interior corners from the second-derivative constants.

    Two corners closer than pi * C with C = K_pp / (K_up + sqrt(K_up^2 +
    K_uu K_pp)) would admit a hat probe with negative Hessian form, so a
    minimizer has at most 2*floor(2*pi/C) + 1 corners strictly inside the
    box.  Requires strong concavity (K_pp > 0) on the sampling box.
    """
    bounds = derivative_bounds(spec, a, b, samples)
    if not bounds.strongly_concave or bounds.k_pp <= 0.0:
        raise ValueError(f"{spec.name}: not strongly concave on R, bound unavailable")
    c = bounds.k_pp / (bounds.k_up + np.sqrt(bounds.k_up ** 2 + bounds.k_uu * bounds.k_pp))
    return 2 * int(np.floor(2.0 * np.pi / c)) + 1, c


def split_corner(u: RadialFunction, corner_theta: float, cells: int = 4) -> RadialFunction:
    """Truncate one corner, splitting its atom into two nearby atoms.

    Geometrically this cuts the vertex at angle corner_theta with a chord,
    which replaces one curvature atom by two atoms `cells` grid cells to
    each side.  The result is feasible by construction (an intersection of
    convex bodies) and lifts u strictly off the lower bound near the cut,
    but it is no longer optimal: a narrow hat probe across the two new
    atoms picks up negative curvature of the Hessian form, which is how
    corner accumulation is excluded.
    """
    n = u.grid.n_points
    h = u.grid.spacing
    theta = u.grid.nodes
    c = int(round(corner_theta / h)) % n
    # chord with the vertex normal direction, high enough to dominate u on
    # the window of +-cells cells (it touches u at the window ends, which
    # is where the two replacement atoms appear)
    window = [(c + k) % n for k in range(-cells, cells + 1)]
    gaps = theta[window] - theta[c]
    gaps = (gaps + np.pi) % (2.0 * np.pi) - np.pi
    height = float(np.max(u.values[window] / np.cos(gaps)))
    chord = height * np.cos(theta - theta[c])
    vals = np.maximum(u.values, np.where(np.cos(theta - theta[c]) > 0.0, chord, 0.0))
    return RadialFunction(u.grid, vals)


def default_probe_suite(u: RadialFunction, problem, structure) -> list:
    """Sine hats at all interior corner triples plus one chi-measure probe
    per edge-bounded window of three consecutive corners."""
    n = u.grid.n_points
    h = u.grid.spacing
    corners = structure.corners
    k = len(corners)
    probes = []
    if k < 3:
        return probes
    idx = [int(round(th / h)) % n for th, _ in corners]
    for j in range(k):
        tri = (idx[j], idx[(j + 1) % k], idx[(j + 2) % k])
        probes.append(build_probe(u, "sine_hat", tri, problem))
        # edge-bounded window: extend half an edge past the flanking corners
        gap_l = (idx[j] - idx[(j - 1) % k]) % n
        gap_r = (idx[(j + 3) % k] - idx[(j + 2) % k]) % n
        lo = (tri[0] - max(1, gap_l // 2)) % n
        hi = (tri[2] + max(1, gap_r // 2)) % n
        probes.append(build_probe(u, "chi_measure", (lo, hi), problem))
    return probes
