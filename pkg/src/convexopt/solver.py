"""Barrier-Newton solver for convexity-constrained shape minimization.

Minimizes the discrete functional subject to the linear inequalities
nu(u) >= 0 plus either the box a <= u <= b or the area equality
m(u) = m0 (inside a safeguard box).  The pipeline is

  1. log-barrier continuation on all inequalities with regularized Newton
     steps (the objective may be nonconvex: G concave in p), escaping
     symmetric saddle points along the lowest Hessian mode,
  2. for the area equality, an outer augmented-Lagrangian loop around the
     barrier iterations,
  3. an active-set polish that pins near-active constraints exactly and
     solves the reduced equality-constrained Newton system, recovering the
     atoms and zero edge cells that the barrier smears.

All constraints except the area are linear, so Newton systems are cyclic
pentadiagonal plus (volume regime) a rank-one term; they are factored
sparsely.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import certificates, cyclic
from .functionals import eval_functional, gradient, hessian_diagonals, hessian_matrix
from .geometry import area, area_gradient, area_hessian_diag
from .periodic import (
    RadialFunction,
    check_feasibility,
    convexity_masses,
    convexity_matrix,
    make_grid,
    refine,
)
from .problem import ProblemSpec

TAU_MAX = 1e8


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-8
    max_outer: int = 60
    barrier_start: float = None     # default 1e-2*|j(u_init)| + 1e-2
    barrier_shrink: float = 0.2
    polish: bool = True
    seed: int = 0
    verbose: bool = False

    def __post_init__(self):
        if self.kkt_tol <= 0.0:
            raise ValueError("kkt_tol must be positive")
        if not (0.0 < self.barrier_shrink < 1.0):
            raise ValueError("barrier_shrink must lie in (0, 1)")


@dataclass
class SolveResult:
    u_star: RadialFunction
    objective: float
    status: str                     # Converged | MaxIterations | Infeasible | Degenerate
    iterations: int
    kkt_residual_final: float
    history: list                   # [(sigma, objective, residual)]
    certificate: object = None
    safeguard_active: bool = False
    message: str = ""
    max_slope_iterates: float = 0.0


def _strictly_inside(u_vals, lo, hi, h, sigma=0.0, center=None):
    """Blend a feasible point toward a feasible constant until it sits
    strictly inside all inequality constraints.

    Warm starts sitting on the boundary are incompatible with a barrier
    restart: the implied duals sigma/slack blow up and Newton stalls.  The
    blend floor keeps every slack at least a few multiples of the starting
    barrier parameter.
    """
    n = len(u_vals)
    mid_c = 0.5 * (lo + hi) if center is None else center
    mid = np.full(n, mid_c)
    base = np.clip(u_vals, lo, hi)
    margin = 1e-10 * max(1.0, float(np.abs(base).mean()))
    s_floor = min(0.05, 3.0 * sigma / (h * mid_c)) if sigma > 0.0 else 0.0
    ladder = sorted({0.0, s_floor, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0})
    for s in ladder:
        if s < s_floor:
            continue
        vals = (1.0 - s) * base + s * mid
        nu = convexity_masses(vals, h)
        if nu.min() > margin and vals.min() > lo + margin and vals.max() < hi - margin:
            return vals
    return mid


class _Barrier:
    """Barrier (+ optional augmented-Lagrangian) subproblem assembly."""

    def __init__(self, problem: ProblemSpec, mu: float = 0.0, rho: float = 0.0):
        self.problem = problem
        self.spec = problem.effective_functional()
        self.grid = make_grid(problem.grid_n)
        self.h = self.grid.spacing
        self.volume = problem.regime.kind == "volume"
        if self.volume:
            self.lo, self.hi = problem.regime.box
            self.m0 = problem.regime.m0
        else:
            self.lo, self.hi = problem.regime.a, problem.regime.b
        self.mu = mu
        self.rho = rho
        self.max_slope_seen = 0.0

    def rf(self, vals):
        return RadialFunction(self.grid, vals)

    def note_iterate(self, vals):
        slope = float(np.abs((np.roll(vals, -1) - vals) / self.h).max())
        self.max_slope_seen = max(self.max_slope_seen, slope)

    def slacks(self, vals):
        nu = convexity_masses(vals, self.h)
        return nu, vals - self.lo, self.hi - vals

    def value(self, vals, sigma):
        if vals.min() <= 0.0:
            return np.inf
        nu, sa, sb = self.slacks(vals)
        if nu.min() <= 0.0 or sa.min() <= 0.0 or sb.min() <= 0.0:
            return np.inf
        u = self.rf(vals)
        val = eval_functional(self.spec, u)
        if self.volume:
            c = area(u) - self.m0
            val += -self.mu * c + 0.5 * self.rho * c * c
        return val - sigma * (np.log(nu).sum() + np.log(sa).sum() + np.log(sb).sum())

    def grad(self, vals, sigma):
        u = self.rf(vals)
        g = gradient(self.spec, u)
        if self.volume:
            c = area(u) - self.m0
            g = g - (self.mu - self.rho * c) * area_gradient(u)
        nu, sa, sb = self.slacks(vals)
        h = self.h
        w1 = sigma / nu
        # A^T w for the cyclic tridiagonal convexity map, assembled directly
        atw = (np.roll(w1, 1) + np.roll(w1, -1)) / h + (h - 2.0 / h) * w1
        return g - atw - sigma / sa + sigma / sb

    def hess_diags(self, vals, sigma):
        """Barrier Hessian as cyclic banded diagonals plus optional rank-one."""
        u = self.rf(vals)
        d0, d1 = hessian_diagonals(self.spec, u)
        rank_one = None
        if self.volume:
            c = area(u) - self.m0
            mu_eff = self.mu - self.rho * c
            d0 = d0 - mu_eff * area_hessian_diag(u)
            if self.rho != 0.0:
                rank_one = (self.rho, area_gradient(u))
        nu, sa, sb = self.slacks(vals)
        h = self.h
        w = sigma / nu ** 2
        da = h - 2.0 / h
        d0 = d0 + (np.roll(w, 1) + np.roll(w, -1)) / h ** 2 + w * da ** 2 \
            + sigma / sa ** 2 + sigma / sb ** 2
        d1 = d1 + (w + np.roll(w, -1)) * da / h
        d2 = np.roll(w, -1) / h ** 2
        return d0, d1, d2, rank_one

    def max_step(self, vals, d):
        """Largest t with all inequality slacks still positive at vals + t*d."""
        nu, sa, sb = self.slacks(vals)
        dn = convexity_masses(d, self.h)
        t = np.inf
        for slack, delta in ((nu, dn), (sa, d), (sb, -d)):
            neg = delta < 0.0
            if np.any(neg):
                t = min(t, float((slack[neg] / -delta[neg]).min()))
        return t


def _newton_loop(bar: _Barrier, vals, sigma, tol, max_iter=80):
    """Minimize the barrier subproblem; returns (vals, n_iter, status)."""
    tau = 0.0
    stalls = 0
    for it in range(max_iter):
        bar.note_iterate(vals)
        g = bar.grad(vals, sigma)
        diags = bar.hess_diags(vals, sigma)
        gnorm = float(np.abs(g).max())
        if gnorm <= tol:
            # at a stationary point, escape along negative curvature if any
            lam, mode, lam_max = cyclic.lowest_mode(*diags[:3], rank_one=diags[3])
            if lam >= -1e-10 * max(1.0, lam_max):
                return vals, it, "ok"
            stepped = False
            for sgn in (1.0, -1.0):
                cand = _line_search(bar, vals, sgn * mode, g, sigma)
                if cand is not None:
                    vals = cand
                    stepped = True
                    break
            if not stepped:
                return vals, it, "ok"
            continue
        tau_local = tau
        scale = max(1.0, float(np.abs(diags[0]).max()))
        while True:
            d = cyclic.solve_shifted(diags[0], diags[1], diags[2], -g,
                                     tau=tau_local, rank_one=diags[3])
            if d is not None and g @ d < 0.0:
                break
            tau_local = max(10.0 * tau_local, 1e-8 * scale)
            if tau_local > TAU_MAX:
                return vals, it, "degenerate"
        tau = tau_local * 0.1  # let the shift decay between iterations
        cand = _line_search(bar, vals, d, g, sigma)
        if cand is None:
            tau = max(10.0 * tau_local, 1e-6)
            if tau > TAU_MAX:
                return vals, it, "degenerate"
            continue
        step = float(np.abs(cand - vals).max())
        vals = cand
        bar.note_iterate(vals)
        if step <= 1e-14 * max(1.0, float(np.abs(vals).max())):
            stalls += 1
            if stalls >= 2:
                # at the floating-point noise floor of the barrier gradient
                return vals, it + 1, "ok"
        else:
            stalls = 0
    return vals, max_iter, "maxiter"


def _line_search(bar: _Barrier, vals, d, g, sigma):
    """Armijo backtracking with a fraction-to-boundary cap; None on failure."""
    t = min(1.0, 0.995 * bar.max_step(vals, d))
    if t <= 0.0:
        return None
    f0 = bar.value(vals, sigma)
    slope = float(g @ d)
    for _ in range(60):
        cand = vals + t * d
        f1 = bar.value(cand, sigma)
        if np.isfinite(f1) and f1 <= f0 + 1e-4 * t * min(slope, 0.0) + 1e-14 * abs(f0):
            return cand
        t *= 0.5
    return None


# ---------------------------------------------------------------------------
# active-set polish
# ---------------------------------------------------------------------------

def _polish(bar: _Barrier, vals, sigma_final, kkt_tol):
    """Pin near-active constraints exactly and Newton-solve on the manifold.

    Active cells are those the barrier left with O(sigma) slack; exact
    activity recovers atoms and zero edge cells that the barrier smears.
    Returns polished values or None when the polish fails (caller keeps the
    barrier point).
    """
    h = bar.h
    n = len(vals)
    A = convexity_matrix(bar.grid)
    mean_u = max(1.0, float(vals.mean()))
    thr_nu = max(np.sqrt(sigma_final * h), 1e-3 * h) * mean_u
    thr_box = np.sqrt(sigma_final) * max(1.0, bar.hi - bar.lo)

    nu, sa, sb = bar.slacks(vals)
    act_nu = np.flatnonzero(nu < thr_nu)
    act_a = np.flatnonzero(sa < thr_box)
    act_b = np.flatnonzero(sb < thr_box)

    for _drop_round in range(6):
        rows, rhs, kinds = [], [], []
        for i in act_nu:
            rows.append(A[i])
            rhs.append(0.0)
            kinds.append(("nu", i))
        for i in act_a:
            e = np.zeros(n); e[i] = 1.0
            rows.append(e); rhs.append(bar.lo); kinds.append(("a", i))
        for i in act_b:
            e = np.zeros(n); e[i] = -1.0
            rows.append(e); rhs.append(-bar.hi); kinds.append(("b", i))

        out = _manifold_newton(bar, vals, rows, rhs, kinds)
        if out is None:
            return None
        cand, y = out

        # multiplier sign check: inequality duals must be nonnegative
        ymax = float(np.abs(y).max()) if len(y) else 0.0
        bad = [k for k in range(len(kinds)) if y[k] < -1e-9 * (1.0 + ymax)]
        if not bad:
            nu_c, sa_c, sb_c = bar.slacks(cand)
            if nu_c.min() < -1e-12 * mean_u or sa_c.min() < -1e-10 or sb_c.min() < -1e-10:
                return None
            return np.clip(cand, bar.lo, bar.hi)
        drop = {kinds[k] for k in bad}
        act_nu = np.array([i for i in act_nu if ("nu", i) not in drop], dtype=int)
        act_a = np.array([i for i in act_a if ("a", i) not in drop], dtype=int)
        act_b = np.array([i for i in act_b if ("b", i) not in drop], dtype=int)
    return None


def _manifold_newton(bar: _Barrier, vals, rows, rhs, kinds, max_iter=40):
    """Newton on {C u = rhs} (plus m(u) = m0 in the volume regime)."""
    n = len(vals)
    cand = vals.copy()
    spec = bar.spec
    y = np.zeros(len(kinds) + (1 if bar.volume else 0))
    for _it in range(max_iter):
        u = bar.rf(np.clip(cand, 1e-12, None))
        g = gradient(spec, u)
        if bar.volume:
            c_rows = rows + [area_gradient(u)]
            resid_c = np.array([r @ cand - b for r, b in zip(rows, rhs)]
                               + [area(u) - bar.m0])
        else:
            c_rows = rows
            resid_c = np.array([r @ cand - b for r, b in zip(rows, rhs)])
        m = len(c_rows)
        if m == 0:
            step = _pd_solve(hessian_matrix(spec, u), -g)
            if step is None:
                return None
            if float(np.abs(g).max()) <= 1e-13 or np.abs(step).max() < 1e-15:
                return cand, y
            t = _feasible_cap(bar, cand, step, kinds)
            cand = cand + t * step
            continue
        C = np.vstack(c_rows)
        # restore constraint feasibility (min-norm correction)
        if np.abs(resid_c).max() > 1e-15:
            corr, *_ = np.linalg.lstsq(C, -resid_c, rcond=None)
            t = _feasible_cap(bar, cand, corr, kinds)
            cand = cand + t * corr
            u = bar.rf(np.clip(cand, 1e-12, None))
            g = gradient(spec, u)
        y, *_ = np.linalg.lstsq(C.T, g, rcond=None)
        stat = float(np.abs(g - C.T @ y).max())
        if stat <= 1e-13 * (1.0 + float(np.abs(g).max())):
            return cand, y
        # reduced Newton step in the nullspace of C
        q, _r = np.linalg.qr(C.T, mode="complete")
        Z = q[:, m:] if m < n else np.zeros((n, 0))
        if Z.shape[1] == 0:
            return cand, y
        hess = hessian_matrix(spec, u)
        if bar.volume:
            hess = hess - y[-1] * np.diag(area_hessian_diag(u))
        step_r = _pd_solve(Z.T @ hess @ Z, -(Z.T @ g))
        if step_r is None:
            return None
        step = Z @ step_r
        t = _feasible_cap(bar, cand, step, kinds)
        if t <= 1e-16 or np.abs(step).max() * t < 1e-15 * (1.0 + np.abs(cand).max()):
            return cand, y
        cand = cand + t * step
    return cand, y


def _pd_solve(hess, rhs):
    n = len(rhs)
    tau = 0.0
    for _ in range(40):
        try:
            chol = scipy.linalg.cho_factor(hess + tau * np.eye(n), lower=True)
            return scipy.linalg.cho_solve(chol, rhs)
        except scipy.linalg.LinAlgError:
            tau = max(10.0 * tau, 1e-10 * max(1.0, np.abs(hess).max()))
            if tau > TAU_MAX:
                return None
    return None


def _feasible_cap(bar: _Barrier, vals, d, kinds):
    """Step cap keeping the constraints *not* in the active set nonnegative."""
    active_nu = {i for kind, i in kinds if kind == "nu"}
    active_a = {i for kind, i in kinds if kind == "a"}
    active_b = {i for kind, i in kinds if kind == "b"}
    nu, sa, sb = bar.slacks(vals)
    dn = convexity_masses(d, bar.h)
    t = 1.0
    for slack, delta, skip in ((nu, dn, active_nu), (sa, d, active_a), (sb, -d, active_b)):
        for i in np.flatnonzero(delta < 0.0):
            if i in skip:
                continue
            if slack[i] + t * delta[i] < 0.0:
                t = min(t, max(0.0, slack[i] / -delta[i]))
    return t


# ---------------------------------------------------------------------------
# top-level solve
# ---------------------------------------------------------------------------

def solve(problem: ProblemSpec, options: SolverOptions = SolverOptions(),
          u_init: RadialFunction = None, mu_init: float = 0.0) -> SolveResult:
    """Solve the shape problem to the requested KKT residual.

    Returns a SolveResult whose status is Converged only when the final
    point is feasible at eps_feas and the certificate's stationarity
    residual is at most kkt_tol * (1 + max|grad j|).  mu_init seeds the
    area multiplier when warm-starting the volume regime.
    """
    if problem.regime.kind == "volume":
        lo, hi = problem.regime.box
        m_min, m_max = np.pi / hi ** 2, np.pi / lo ** 2
        if not (m_min <= problem.regime.m0 <= m_max):
            empty = problem.initial_point()
            return SolveResult(empty, np.nan, "Infeasible", 0, np.inf, [],
                               message="volume target unreachable in safeguard box")
        return _solve_volume(problem, options, u_init, mu_init)
    return _solve_annulus(problem, options, u_init)


def _finalize(problem, options, bar, vals, history, iterations, status_hint,
              sigma_final):
    raw_spec = problem.functional

    if options.polish:
        polished = _polish(bar, vals, sigma_final, options.kkt_tol)
        if polished is not None and np.all(polished > 0.0):
            old_res = certificates.recover_multipliers(
                bar.rf(vals), problem).stationarity_residual
            new_res = certificates.recover_multipliers(
                bar.rf(polished), problem).stationarity_residual
            if new_res <= old_res:
                vals = polished

    u_star = bar.rf(vals)
    cert = certificates.recover_multipliers(u_star, problem)
    gnorm = float(np.abs(gradient(raw_spec, u_star)).max())
    feas = check_feasibility(u_star, problem)
    objective = eval_functional(raw_spec, u_star)
    residual = cert.stationarity_residual
    ok = feas.feasible and residual <= options.kkt_tol * (1.0 + gnorm)
    status = "Converged" if ok else status_hint
    bar.note_iterate(vals)
    return SolveResult(u_star, objective, status, iterations, residual,
                       history, certificate=cert,
                       max_slope_iterates=bar.max_slope_seen)


def _solve_annulus(problem, options, u_init):
    bar = _Barrier(problem)
    start = u_init if u_init is not None else problem.initial_point()
    j0 = eval_functional(bar.spec, bar.rf(np.clip(start.values, 1e-12, None)))
    sigma = options.barrier_start
    if sigma is None:
        sigma = 1e-2 * abs(j0) + 1e-2
    sigma_min = min(1e-10, 1e-2 * options.kkt_tol)
    vals = _strictly_inside(start.values.copy(), bar.lo, bar.hi, bar.h, sigma)

    history = []
    iterations = 0
    status_hint = "MaxIterations"
    while iterations < options.max_outer:
        tol_inner = max(1e-11, 1e-3 * sigma)
        vals, nit, st = _newton_loop(bar, vals, sigma, tol_inner)
        iterations += 1
        obj = eval_functional(bar.spec, bar.rf(vals))
        gnorm = float(np.abs(bar.grad(vals, sigma)).max())
        history.append((sigma, obj, gnorm))
        if options.verbose:
            print(json.dumps({"outer": iterations, "sigma": sigma,
                              "objective": obj, "grad_inf": gnorm,
                              "inner_iters": nit}))
        if st == "degenerate":
            status_hint = "Degenerate"
            break
        if sigma <= sigma_min:
            break
        sigma = max(sigma * options.barrier_shrink, sigma_min)
    return _finalize(problem, options, bar, vals, history, iterations,
                     status_hint, sigma)


def _solve_volume(problem, options, u_init, mu_init=0.0):
    start = u_init if u_init is not None else problem.initial_point()
    lo, hi = problem.regime.box
    grid = make_grid(problem.grid_n)
    h = grid.spacing
    # cold starts traverse the multiplier homotopy from a soft penalty; a
    # warm-started multiplier needs a stiff penalty so the first inner
    # minimizer stays on the constraint manifold
    mu, rho = float(mu_init), (10.0 if mu_init == 0.0 else 1e4)
    bar = _Barrier(problem, mu=mu, rho=rho)
    j0 = eval_functional(bar.spec, bar.rf(np.clip(start.values, 1e-12, None)))
    sigma = options.barrier_start
    if sigma is None:
        sigma = 1e-2 * abs(j0) + 1e-2
    vals = _strictly_inside(start.values.copy(), lo, hi, h, sigma,
                            center=np.sqrt(np.pi / problem.regime.m0))
    sigma_min = min(1e-10, 1e-2 * options.kkt_tol)
    gap_tol = 1e-11 * max(1.0, problem.regime.m0)

    history = []
    iterations = 0
    status_hint = "MaxIterations"
    prev_gap = np.inf
    while iterations < options.max_outer:
        bar.mu, bar.rho = mu, rho
        tol_inner = max(1e-11, 1e-3 * sigma)
        vals, nit, st = _newton_loop(bar, vals, sigma, tol_inner)
        iterations += 1
        u = bar.rf(vals)
        gap = area(u) - problem.regime.m0
        obj = eval_functional(bar.spec, u)
        gnorm = float(np.abs(bar.grad(vals, sigma)).max())
        history.append((sigma, obj, gnorm))
        if options.verbose:
            print(json.dumps({"outer": iterations, "sigma": sigma,
                              "objective": obj, "area_gap": gap,
                              "mu": mu, "rho": rho, "inner_iters": nit}))
        if st == "degenerate":
            status_hint = "Degenerate"
            break
        mu = mu - rho * gap
        if abs(gap) > 0.25 * prev_gap:
            rho = min(1e10, 10.0 * rho)
        prev_gap = abs(gap)
        if sigma <= sigma_min and abs(gap) <= gap_tol:
            break
        sigma = max(sigma * options.barrier_shrink, sigma_min)
    bar.mu, bar.rho = mu, rho
    result = _finalize(problem, options, bar, vals, history, iterations,
                       status_hint, sigma)
    margin = 1e-6 * max(1.0, hi - lo)
    result.safeguard_active = bool(
        result.u_star.values.min() < lo + margin
        or result.u_star.values.max() > hi - margin)
    if result.safeguard_active:
        result.message = "safeguard box active: continuous problem may lack a minimizer"
    return result


# ---------------------------------------------------------------------------
# projection and multistart
# ---------------------------------------------------------------------------

def project_feasible(u: RadialFunction, problem: ProblemSpec,
                     tol: float = 1e-10, max_sweeps: int = 40000,
                     relax: float = 1.95) -> RadialFunction:
    """Euclidean projection onto {nu(v) >= 0, a <= v <= b} (annulus regime).

    Over-relaxed dual coordinate ascent (Hildreth) on the linear
    constraints of the strictly convex QP; feasible inputs are returned
    unchanged.  Cone rows three cells apart touch disjoint nodes, so each
    sweep runs as three vectorized color blocks of exact coordinate steps
    plus the (diagonal) box updates.  Plain cyclic steps crawl on the
    nearly dependent cone rows; over-relaxation restores a practical rate.
    """
    if problem.regime.kind != "annulus":
        raise ValueError("project_feasible applies to the annulus regime")
    a, b = problem.regime.a, problem.regime.b
    grid = u.grid
    h = grid.spacing
    n = grid.n_points
    if check_feasibility(u, problem).feasible:
        return u

    v = u.values.copy()
    y_nu = np.zeros(n)
    y_a = np.zeros(n)
    y_b = np.zeros(n)
    diag = h - 2.0 / h
    row_norm2 = 2.0 / h ** 2 + diag ** 2
    # rows three apart touch disjoint nodes; keep the last two rows out of
    # the vector blocks so the periodic wrap never collides
    colors = [np.arange(c, n - 2, 3) for c in range(3)]
    tail = [n - 2, n - 1]
    for _sweep in range(max_sweeps):
        for idx in colors:
            r = (v[idx - 1] - 2.0 * v[idx] + v[(idx + 1) % n]) / h + h * v[idx]
            delta = np.maximum(-y_nu[idx], -relax * r / row_norm2)
            y_nu[idx] += delta
            v[idx - 1] += delta / h
            v[(idx + 1) % n] += delta / h
            v[idx] += delta * diag
        for i in tail:
            r = (v[i - 1] - 2.0 * v[i] + v[(i + 1) % n]) / h + h * v[i]
            delta = max(-y_nu[i], -relax * r / row_norm2)
            y_nu[i] += delta
            v[i - 1] += delta / h
            v[(i + 1) % n] += delta / h
            v[i] += delta * diag
        delta = np.maximum(-y_a, a - v)
        y_a += delta
        v += delta
        delta = np.maximum(-y_b, v - b)
        y_b += delta
        v -= delta
        if _sweep % 16 == 0:
            nu = convexity_masses(v, h)
            if (nu.min() >= -tol and v.min() >= a - tol and v.max() <= b + tol):
                break
    return RadialFunction(grid, np.clip(np.maximum(v, 0.5 * a), a, b))


def solve_refined(problem: ProblemSpec, options: SolverOptions,
                  coarse: SolveResult, n_new: int) -> SolveResult:
    """Re-solve on a finer grid, warm-started from a coarse solution.

    Grid doubling nests the nodes, so the interpolated coarse optimum sits
    in the same basin; the barrier restarts at a small parameter instead of
    the cold-start value.  This is the refinement used by the structure
    stability check (a corner count that survives doubling is the operative
    polygon test).
    """
    from dataclasses import replace as _replace

    prob_fine = problem.with_grid(n_new)
    u0 = refine(coarse.u_star, n_new)
    mu0 = 0.0
    if prob_fine.regime.kind == "annulus":
        u0 = project_feasible(u0, prob_fine)
    elif coarse.certificate is not None:
        mu0 = coarse.certificate.mu
    warm = _replace(options, barrier_start=1e-6 * (1.0 + abs(coarse.objective)))
    return solve(prob_fine, warm, u_init=u0, mu_init=mu0)


def multistart(problem: ProblemSpec, options: SolverOptions = SolverOptions(),
               k: int = 1) -> SolveResult:
    """Best of k solves from seeded smooth perturbations of the start.

    Replica 0 starts from the unperturbed constant; replicas r >= 1 from
    deterministic low-frequency perturbations keyed by (seed, r), so runs
    are reproducible and grid refinement keeps the same start basins.
    Raises SolverError when no replica converges.
    """
    if k < 1:
        raise ValueError("k must be >= 1")

    def run(r):
        scale = 0.0 if r == 0 else 1.0 + 0.5 * (r - 1)
        start = problem.initial_point(seed=options.seed + 1000 * r, scale=scale)
        if problem.regime.kind == "annulus":
            start = project_feasible(start, problem)
        return solve(problem, options, u_init=start)

    workers = int(os.environ.get("CONVEXOPT_THREADS", "1") or "1")
    if workers > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=min(workers, k)) as ex:
            results = list(ex.map(run, range(k)))
    else:
        results = [run(r) for r in range(k)]

    converged = [r for r in results if r.status == "Converged"]
    if not converged:
        raise SolverError(
            "no multistart replica converged: "
            + ", ".join(r.status for r in results))
    best = min(converged, key=lambda r: r.objective)
    spread = max(r.objective for r in converged) - min(r.objective for r in converged)
    best.message = (best.message + f" multistart spread={spread:.3e} over "
                    f"{len(converged)}/{len(results)} converged").strip()
    return best
