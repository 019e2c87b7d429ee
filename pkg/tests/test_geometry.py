import json

import numpy as np
import pytest

from convexopt.geometry import (
    StructureTolerances,
    analyze_structure,
    area,
    area_gradient,
    area_hessian_form,
    atom_mask,
    boundary_points,
    curvature,
    export_csv,
    export_svg,
    perimeter,
    structure_to_dict,
)
from convexopt.periodic import RadialFunction, make_grid, read_radial_csv

A, B = 1.0, 2.0


def square_gauge(grid, rho):
    th = grid.nodes
    return RadialFunction(grid, np.maximum(np.abs(np.cos(th)), np.abs(np.sin(th))) / rho)


def ngon_gauge(grid, sides, rho, phase=0.0):
    th = grid.nodes[:, None] - phase
    normals = 2.0 * np.pi * np.arange(sides)[None, :] / sides
    return RadialFunction(grid, np.max(np.cos(th - normals), axis=1) / rho)


class TestBoundaryPoints:
    def test_unit_circle(self):
        g = make_grid(64)
        pts = boundary_points(RadialFunction.constant(g, 1.0))
        assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-14)

    def test_circle_radius(self):
        g = make_grid(64)
        pts = boundary_points(RadialFunction.constant(g, A))
        assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0 / A, atol=1e-14)

    def test_square_vertices(self):
        g = make_grid(256)
        rho = 0.6
        pts = boundary_points(square_gauge(g, rho))
        vd = rho * np.sqrt(2.0)
        for t in (np.pi / 4, 3 * np.pi / 4, 5 * np.pi / 4, 7 * np.pi / 4):
            target = np.array([vd * np.cos(t), vd * np.sin(t)])
            assert np.hypot(*(pts - target).T).min() <= g.spacing

    def test_reconstruction_convex(self):
        g = make_grid(128)
        u = square_gauge(g, 0.6)
        pts = boundary_points(u)
        edges = np.roll(pts, -1, axis=0) - pts
        cross = edges[:, 0] * np.roll(edges[:, 1], -1) - edges[:, 1] * np.roll(edges[:, 0], -1)
        assert cross.min() >= -1e-12 * np.abs(cross).max()


class TestArea:
    @pytest.mark.parametrize("n", [8, 64, 256])
    def test_disk_exact(self, n):
        g = make_grid(n)
        c = 1.7
        assert area(RadialFunction.constant(g, c)) == pytest.approx(
            np.pi / c ** 2, rel=1e-12)

    def test_gradient_constant(self):
        g = make_grid(64)
        grad = area_gradient(RadialFunction.constant(g, 1.0))
        assert np.allclose(grad, -g.spacing, atol=1e-15)

    def test_gradient_and_hessian_oracle(self):
        g = make_grid(128)
        rng = np.random.default_rng(21)
        u = RadialFunction(g, rng.uniform(0.8, 2.5, 128))
        v = rng.normal(size=128)
        t = 1e-6
        up = RadialFunction(g, u.values + t * v)
        um = RadialFunction(g, u.values - t * v)
        fd_grad = (area(up) - area(um)) / (2 * t)
        assert abs(fd_grad - area_gradient(u) @ v) <= 1e-7 * max(1.0, abs(fd_grad))
        t = 1e-4
        up = RadialFunction(g, u.values + t * v)
        um = RadialFunction(g, u.values - t * v)
        fd_hess = (area(up) - 2 * area(u) + area(um)) / t ** 2
        assert abs(fd_hess - area_hessian_form(u, v)) <= 1e-7 * max(1.0, abs(fd_hess))


class TestPerimeter:
    def test_circle(self):
        g = make_grid(256)
        assert perimeter(RadialFunction.constant(g, A)) == pytest.approx(
            2 * np.pi / A, rel=1e-13)

    def test_square_inradius_one(self):
        g = make_grid(512)
        assert perimeter(square_gauge(g, 1.0)) == pytest.approx(8.0, rel=0.02)

    def test_at_least_polyline_length(self):
        g = make_grid(128)
        rng = np.random.default_rng(22)
        u = RadialFunction(g, 1.2 + 0.2 * np.cos(2 * g.nodes))
        pts = boundary_points(u)
        chord = float(np.hypot(*(np.roll(pts, -1, axis=0) - pts).T).sum())
        assert perimeter(u) >= chord - 1e-9


class TestCurvature:
    def test_circle(self):
        g = make_grid(128)
        c = 1.4
        assert np.allclose(curvature(RadialFunction.constant(g, c)), c, atol=1e-12)

    def test_straight_edges_flat(self):
        # discrete edge curvature carries only the O(h^2) sampling residual
        g = make_grid(256)
        kap = curvature(square_gauge(g, 0.6))
        corners = [int(round((np.pi / 4 + k * np.pi / 2) / g.spacing)) for k in range(4)]
        mask = np.ones(256, bool)
        for c in corners:
            mask[[c - 1, c, (c + 1) % 256]] = False
        assert np.abs(kap[mask]).max() <= g.spacing ** 2

    def test_ellipse_oracle_second_order(self):
        big, small = 1.3, 0.8

        def truth(th):
            uu = np.sqrt(np.cos(th) ** 2 / big ** 2 + np.sin(th) ** 2 / small ** 2)
            ct, st = np.cos(th) / uu / big, np.sin(th) / uu / small
            return big * small / (big ** 2 * st ** 2 + small ** 2 * ct ** 2) ** 1.5

        errs = []
        for n in (128, 256, 512):
            g = make_grid(n)
            th = g.nodes
            u = RadialFunction(g, np.sqrt(np.cos(th) ** 2 / big ** 2
                                          + np.sin(th) ** 2 / small ** 2))
            mask = np.ones(n, bool)
            for ax in np.arange(0.0, 2 * np.pi + 0.1, np.pi / 2):
                mask &= np.abs(((th - ax + np.pi) % (2 * np.pi)) - np.pi) > 0.15
            errs.append(np.abs(curvature(u)[mask] - truth(th[mask])).max())
        assert errs[-1] <= 1e-4
        assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


class TestAnalyzeStructure:
    def test_inner_circle_has_arcs(self):
        g = make_grid(256)
        st = analyze_structure(RadialFunction.constant(g, A), A, B)
        assert st.verdict == "HasArcs"
        assert st.n_corners == 0
        assert st.arcs_a and not st.arcs_b

    def test_interior_circle_has_arcs(self):
        g = make_grid(256)
        st = analyze_structure(RadialFunction.constant(g, 1.5), A, B)
        assert st.verdict == "HasArcs"
        assert st.n_curved == 256

    def test_square_is_polygon(self):
        g = make_grid(256)
        st = analyze_structure(square_gauge(g, 0.6), A, B)
        assert st.verdict == "Polygon"
        assert st.n_corners == 4
        thetas = [t for t, _ in st.corners]
        expected = [np.pi / 4 + k * np.pi / 2 for k in range(4)]
        assert np.allclose(thetas, expected, atol=g.spacing)

    def test_corner_count_stable_under_refinement(self):
        for n in (256, 512):
            g = make_grid(n)
            st = analyze_structure(ngon_gauge(g, 6, 0.55, phase=0.2), A, B)
            assert st.verdict == "Polygon"
            assert st.n_corners == 6

    def test_infeasible_rejected(self):
        g = make_grid(256)
        with pytest.raises(ValueError, match="feasible"):
            analyze_structure(RadialFunction.constant(g, 0.5), A, B)

    def test_corner_masses_sum(self):
        g = make_grid(256)
        u = square_gauge(g, 0.6)
        st = analyze_structure(u, A, B)
        total = sum(m for _t, m in st.corners)
        # all mass of a polygon sits in its corners
        from convexopt.periodic import convexity_measure
        assert total == pytest.approx(convexity_measure(u).total, rel=1e-3)

    def test_structure_json_fields(self):
        g = make_grid(256)
        st = analyze_structure(square_gauge(g, 0.6), A, B)
        doc = structure_to_dict(st)
        assert set(doc) == {"corners", "edges", "arcs_a", "arcs_b", "verdict"}
        assert len(doc["corners"]) == 4
        json.dumps(doc)


class TestExports:
    def test_svg_octagon(self, tmp_path):
        g = make_grid(8)
        path = tmp_path / "shape.svg"
        export_svg(RadialFunction.constant(g, 1.0), path, a=A, b=B)
        text = path.read_text()
        assert text.startswith("<?xml")
        assert "polygon" in text and text.count("<circle") == 2
        assert 'viewBox="-1.1 -1.1 2.2 2.2"' in text

    def test_svg_marks_corners(self, tmp_path):
        g = make_grid(256)
        u = square_gauge(g, 0.6)
        st = analyze_structure(u, A, B)
        path = tmp_path / "square.svg"
        export_svg(u, path, a=A, b=B, structure=st)
        assert path.read_text().count("#c23b22") == 4

    def test_csv_round_trip(self, tmp_path):
        g = make_grid(64)
        rng = np.random.default_rng(23)
        u = RadialFunction(g, rng.uniform(1.0, 2.0, 64))
        path = tmp_path / "u.csv"
        export_csv(u, path)
        assert np.array_equal(read_radial_csv(path).values, u.values)

    def test_unwritable_path(self, tmp_path):
        g = make_grid(8)
        with pytest.raises(OSError, match="SVG"):
            export_svg(RadialFunction.constant(g, 1.0),
                       tmp_path / "missing" / "x.svg", a=A, b=B)


class TestAtomMask:
    def test_square_atoms_only(self):
        g = make_grid(256)
        mask = atom_mask(square_gauge(g, 0.6))
        assert mask.sum() == 4

    def test_smooth_circle_none(self):
        g = make_grid(256)
        assert not atom_mask(RadialFunction.constant(g, 1.5)).any()
