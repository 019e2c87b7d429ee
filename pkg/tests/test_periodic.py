import numpy as np
import pytest

from convexopt.periodic import (
    RadialFunction,
    check_feasibility,
    convexity_masses,
    convexity_matrix,
    convexity_measure,
    lipschitz_bound_check,
    make_grid,
    radial_csv_text,
    read_radial_csv,
    refine,
    staggered_derivative,
    write_radial_csv,
)
from convexopt.problem import AnnulusRegime, ProblemSpec, VolumeRegime
from convexopt.functionals import builtin


def square_gauge(grid, rho):
    th = grid.nodes
    return RadialFunction(grid, np.maximum(np.abs(np.cos(th)), np.abs(np.sin(th))) / rho)


def annulus_problem(n=256, a=1.0, b=2.0):
    return ProblemSpec(builtin("quad_circle", a=a, b=b), n, AnnulusRegime(a, b))


class TestGrid:
    def test_basic_layout(self):
        g = make_grid(8)
        assert g.spacing == pytest.approx(np.pi / 4)
        assert g.nodes[3] == pytest.approx(3 * np.pi / 4)
        assert g.midpoints[0] == pytest.approx(np.pi / 8)

    def test_endpoint_convention(self):
        g = make_grid(256)
        assert g.nodes[0] == 0.0
        assert g.nodes[255] == pytest.approx(2 * np.pi - g.spacing)
        assert g.spacing * g.n_points == pytest.approx(2 * np.pi, abs=1e-15)

    @pytest.mark.parametrize("bad", [7, 6, 9, 0, -8])
    def test_rejects_bad_sizes(self, bad):
        with pytest.raises(ValueError, match="even"):
            make_grid(bad)

    def test_rejects_non_integer(self):
        with pytest.raises(ValueError):
            make_grid(16.0)


class TestRadialFunction:
    def test_requires_positive(self):
        g = make_grid(8)
        with pytest.raises(ValueError, match="positive"):
            RadialFunction(g, np.linspace(-1, 1, 8))

    def test_requires_matching_length(self):
        g = make_grid(8)
        with pytest.raises(ValueError):
            RadialFunction(g, np.ones(9))


class TestStaggeredDerivative:
    def test_constant(self):
        g = make_grid(64)
        p = staggered_derivative(RadialFunction.constant(g, 3.7))
        assert np.abs(p).max() == 0.0

    def test_sine_accuracy(self):
        g = make_grid(256)
        u = RadialFunction(g, np.sin(g.nodes) + 2.0)
        p = staggered_derivative(u)
        err = np.abs(p - np.cos(g.midpoints)).max()
        assert err <= g.spacing ** 2 / 8

    def test_supporting_line(self):
        # gauge of a straight line on the half-period where it supports
        g = make_grid(256)
        L = 2.0
        mask = np.cos(g.nodes) > 0.3
        u = np.where(mask, np.cos(g.nodes) / L, 0.3 / L)
        p = staggered_derivative(RadialFunction(g, u))
        interior = mask & np.roll(mask, -1) & (np.cos(g.midpoints) > 0.35)
        err = np.abs(p[interior] + np.sin(g.midpoints[interior]) / L).max()
        assert err <= g.spacing ** 2 / (8 * L) * 10


class TestConvexityMeasure:
    def test_constant_is_uniform(self):
        g = make_grid(64)
        nu = convexity_measure(RadialFunction.constant(g, 2.5)).masses
        assert np.allclose(nu, 2.5 * g.spacing, rtol=0, atol=1e-14)

    @pytest.mark.parametrize("n", [256, 512])
    def test_square_atoms(self, n):
        rho = 0.6
        g = make_grid(n)
        u = square_gauge(g, rho)
        nu = convexity_measure(u).masses
        h = g.spacing
        corners = [int(round((np.pi / 4 + k * np.pi / 2) / h)) % n for k in range(4)]
        jump = np.sqrt(2.0) / rho
        assert np.abs(nu[corners] - jump).max() <= 3.0 * h
        off = [i for i in range(n)
               if min(min((i - c) % n, (c - i) % n) for c in corners) > 1]
        assert np.abs(nu[off]).max() <= 10.0 * h ** 2

    def test_nonconvex_dimple(self):
        # reciprocal of the dimpled radius r = |sin| + 1/2 kinks inward
        g = make_grid(256)
        u = RadialFunction(g, 1.0 / (np.abs(np.sin(g.nodes)) + 0.5))
        assert convexity_measure(u).masses.min() < -1.0

    def test_linearity(self):
        g = make_grid(128)
        rng = np.random.default_rng(0)
        x = rng.uniform(1.0, 2.0, 128)
        y = rng.uniform(1.0, 2.0, 128)
        h = g.spacing
        lhs = convexity_masses(2.0 * x + 3.5 * y, h)
        rhs = 2.0 * convexity_masses(x, h) + 3.5 * convexity_masses(y, h)
        assert np.abs(lhs - rhs).max() <= 1e-12

    @pytest.mark.parametrize("n", [64, 256])
    def test_translation_kernel_near_annihilated(self, n):
        g = make_grid(n)
        nu = convexity_masses(np.cos(g.nodes), g.spacing)
        assert np.abs(nu).max() <= 10.0 * g.spacing ** 3

    def test_mass_identity(self):
        g = make_grid(256)
        rng = np.random.default_rng(1)
        u = RadialFunction(g, rng.uniform(0.5, 3.0, 256))
        nu = convexity_measure(u)
        total_u = g.spacing * u.values.sum()
        assert abs(nu.total - total_u) <= 1e-12 * abs(total_u)

    def test_matrix_agrees_with_masses(self):
        g = make_grid(64)
        rng = np.random.default_rng(2)
        x = rng.uniform(0.5, 2.0, 64)
        assert np.allclose(convexity_matrix(g) @ x, convexity_masses(x, g.spacing),
                           atol=1e-13)


class TestFeasibility:
    def test_midpoint_constant_feasible(self):
        prob = annulus_problem()
        g = make_grid(256)
        rep = check_feasibility(RadialFunction.constant(g, 1.5), prob)
        assert rep.feasible
        assert rep.min_cone_mass == pytest.approx(1.5 * g.spacing)
        assert rep.box_violation == 0.0

    def test_box_breach(self):
        prob = annulus_problem()
        g = make_grid(256)
        rep = check_feasibility(RadialFunction.constant(g, 0.99), prob)
        assert not rep.feasible
        assert rep.box_violation == pytest.approx(0.01)

    def test_volume_gap_zero_for_matching_circle(self):
        m0 = 0.7
        prob = ProblemSpec(builtin("quad_circle"), 256, VolumeRegime(m0))
        g = make_grid(256)
        rep = check_feasibility(RadialFunction.constant(g, np.sqrt(np.pi / m0)), prob)
        assert rep.volume_gap == pytest.approx(0.0, abs=1e-12)
        assert rep.feasible


class TestLipschitzBound:
    def test_constant(self):
        g = make_grid(64)
        ok, mx = lipschitz_bound_check(RadialFunction.constant(g, 2.0), b=2.0)
        assert ok and mx == 0.0

    def test_square_within_bound(self):
        g = make_grid(256)
        u = square_gauge(g, 0.6)
        ok, mx = lipschitz_bound_check(u, b=float(u.values.max()))
        assert ok


class TestCsvAndRefine:
    def test_round_trip_bit_exact(self, tmp_path):
        g = make_grid(64)
        rng = np.random.default_rng(3)
        u = RadialFunction(g, rng.uniform(1.0, 2.0, 64))
        path = tmp_path / "u.csv"
        write_radial_csv(u, path)
        back = read_radial_csv(path)
        assert np.array_equal(back.values, u.values)

    def test_csv_header(self):
        g = make_grid(8)
        text = radial_csv_text(RadialFunction.constant(g, 1.0))
        assert text.splitlines()[0] == "theta,u"

    def test_refine_doubling_injects(self):
        g = make_grid(64)
        rng = np.random.default_rng(4)
        u = RadialFunction(g, rng.uniform(1.0, 2.0, 64))
        fine = refine(u, 128)
        assert np.array_equal(fine.values[::2], u.values)
        mids = 0.5 * (u.values + np.roll(u.values, -1))
        assert np.allclose(fine.values[1::2], mids, atol=1e-14)
