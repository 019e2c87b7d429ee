"""Uniform periodic grids on [0, 2pi) and the discrete convexity measure.

A convex body containing the origin is described by the reciprocal radius
u(theta) = 1/r(theta) sampled on a uniform angular grid.  Convexity of the
body is equivalent to nonnegativity of the measure u'' + u; discretely this
becomes one mass per grid cell,

    nu_i = (u_{i-1} - 2 u_i + u_{i+1}) / h + h * u_i,

the integral of u'' + u over the cell [theta_i - h/2, theta_i + h/2).
Corners of the body show up as O(1) atoms of nu, straight edges as cells
with nu = 0, and smooth boundary pieces as O(h) background mass.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid of N nodes theta_i = i*h on [0, 2pi), h = 2pi/N."""

    n_points: int

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n_points

    @property
    def nodes(self) -> np.ndarray:
        return self.spacing * np.arange(self.n_points)

    @property
    def midpoints(self) -> np.ndarray:
        return self.spacing * (np.arange(self.n_points) + 0.5)


def make_grid(n: int) -> PeriodicGrid:
    """Build a PeriodicGrid with n nodes.  n must be even and >= 8."""
    if not isinstance(n, (int, np.integer)):
        raise ValueError(f"N must be an integer, got {n!r}")
    if n < 8 or n % 2 != 0:
        raise ValueError(f"N must be even and >= 8, got {n}")
    return PeriodicGrid(int(n))


@dataclass(frozen=True)
class RadialFunction:
    """Samples u_i > 0 of the reciprocal radius on a periodic grid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} values, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("u contains non-finite values")
        if np.any(vals <= 0.0):
            raise ValueError("u must be strictly positive")
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: PeriodicGrid, c: float) -> "RadialFunction":
        return cls(grid, np.full(grid.n_points, float(c)))

    @classmethod
    def from_callable(cls, grid: PeriodicGrid, f) -> "RadialFunction":
        return cls(grid, np.asarray(f(grid.nodes), dtype=float))


@dataclass(frozen=True)
class ConvexityMeasure:
    """Cell masses nu_i approximating the measure u'' + u."""

    grid: PeriodicGrid
    masses: np.ndarray

    @property
    def total(self) -> float:
        return float(self.masses.sum())


@dataclass(frozen=True)
class FeasibilityReport:
    min_cone_mass: float
    box_violation: float
    volume_gap: float | None
    feasible: bool


def staggered_derivative(u: RadialFunction) -> np.ndarray:
    """Midpoint slopes p_{i+1/2} = (u_{i+1} - u_i)/h, i = 0..N-1."""
    v = u.values
    return (np.roll(v, -1) - v) / u.grid.spacing


def second_difference(values: np.ndarray, h: float) -> np.ndarray:
    """Periodic second difference divided by h (cell-integrated u'')."""
    return (np.roll(values, 1) - 2.0 * values + np.roll(values, -1)) / h


def convexity_masses(values: np.ndarray, h: float) -> np.ndarray:
    """Cell masses of u'' + u for raw nodal values (linear in the values)."""
    return second_difference(values, h) + h * values


def convexity_measure(u: RadialFunction) -> ConvexityMeasure:
    return ConvexityMeasure(u.grid, convexity_masses(u.values, u.grid.spacing))


def convexity_matrix(grid: PeriodicGrid) -> np.ndarray:
    """Dense matrix A with (A u)_i = nu_i.  Symmetric circulant."""
    n, h = grid.n_points, grid.spacing
    a = np.zeros((n, n))
    idx = np.arange(n)
    a[idx, idx] = -2.0 / h + h
    a[idx, (idx + 1) % n] = 1.0 / h
    a[idx, (idx - 1) % n] = 1.0 / h
    return a


def check_feasibility(u: RadialFunction, problem, eps_feas: float = 1e-9) -> FeasibilityReport:
    """Feasibility of u for an annulus or volume problem at tolerance eps_feas."""
    nu = convexity_measure(u).masses
    min_cone = float(nu.min())
    regime = problem.regime
    if regime.kind == "annulus":
        a, b = regime.a, regime.b
        box = float(np.maximum(np.maximum(a - u.values, u.values - b), 0.0).max())
        gap = None
    else:
        lo, hi = regime.box
        box = float(np.maximum(np.maximum(lo - u.values, u.values - hi), 0.0).max())
        h = u.grid.spacing
        gap = abs(0.5 * h * float(np.sum(u.values ** -2)) - regime.m0)
    ok = min_cone >= -eps_feas and box <= eps_feas
    if gap is not None:
        ok = ok and gap <= eps_feas
    return FeasibilityReport(min_cone, box, gap, bool(ok))


def lipschitz_bound_check(u: RadialFunction, b: float, eps_feas: float = 1e-9):
    """Check the a-priori slope bound max|u'| <= 2*pi*b for feasible u.

    Returns (ok, max_slope).  The bound follows from integrating
    u'' + u >= 0 over the period with 0 <= u <= b; it holds exactly for
    the discrete masses as well, by telescoping p over the cells.
    """
    p = staggered_derivative(u)
    max_slope = float(np.abs(p).max())
    return max_slope <= TWO_PI * b + eps_feas, max_slope


def refine(u: RadialFunction, n_new: int) -> RadialFunction:
    """Resample u on a finer grid by periodic linear interpolation.

    Doubling injects the old nodes exactly (the grids nest), so a warm
    start on the refined grid stays in the coarse solution's basin.
    """
    grid_new = make_grid(n_new)
    old_n = u.grid.n_points
    if n_new == old_n:
        return u
    if n_new % old_n == 0:
        theta = grid_new.nodes
        xp = np.concatenate([u.grid.nodes, [TWO_PI]])
        fp = np.concatenate([u.values, [u.values[0]]])
        vals = np.interp(theta, xp, fp)
        return RadialFunction(grid_new, vals)
    xp = np.concatenate([u.grid.nodes, [TWO_PI]])
    fp = np.concatenate([u.values, [u.values[0]]])
    return RadialFunction(grid_new, np.interp(grid_new.nodes, xp, fp))


def write_radial_csv(u: RadialFunction, path) -> None:
    """Write u as CSV with header theta,u at 17 significant digits."""
    with open(path, "w") as f:
        f.write(radial_csv_text(u))


def radial_csv_text(u: RadialFunction) -> str:
    buf = io.StringIO()
    buf.write("theta,u\n")
    for th, val in zip(u.grid.nodes, u.values):
        buf.write(f"{th:.17g},{val:.17g}\n")
    return buf.getvalue()


def read_radial_csv(path) -> RadialFunction:
    """Read a theta,u CSV produced by write_radial_csv."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    theta = np.atleast_1d(data["theta"])
    vals = np.atleast_1d(data["u"])
    n = len(vals)
    grid = make_grid(n)
    if not np.allclose(theta, grid.nodes, atol=1e-12 * TWO_PI):
        raise ValueError(f"{path}: theta column is not the uniform grid of {n} nodes")
    return RadialFunction(grid, vals)
