import warnings

import numpy as np
import pytest

from critnodes.discretize import build_grid
from critnodes.geometry import unit_disk
from critnodes.holeflow import mu2_vs_position_sweep
from critnodes.linalg import EigenPair, fix_sign
from critnodes.nodalmap import (NodalError, align_in_eigenspace, boundary_adjacent, extract_nodal_set,
                                locate_f_minima, nodal_report, report_to_csv, small_hole_objective)


def x_branch(grid, op, pair):
    """The member of the square's degenerate eigenspace that varies with x only."""
    close = np.flatnonzero(pair.ritz_values <= pair.mu * (1 + 1e-3))
    x = grid.centers[:, 0]
    psi = align_in_eigenspace(pair.basis[:, close], op.weights, x - op.mean(x))
    psi = fix_sign((psi - op.mean(psi)) / op.norm(psi - op.mean(psi)))
    return EigenPair(pair.mu, psi, 0.0, pair.gap)


@pytest.fixture(scope="module")
def square_x(square64):
    grid, op, pair = square64
    return grid, x_branch(grid, op, pair)


def interior(grid):
    return ~boundary_adjacent(grid)


class TestObjective:
    def test_matches_analytic_square(self, square_x):
        grid, pair = square_x
        f, flag = small_hole_objective(grid, pair)
        exact = 2 * np.pi**2 * np.cos(2 * np.pi * grid.centers[:, 0])
        keep = ~flag
        assert np.max(np.abs(f[keep] - exact[keep])) <= 0.05 * 2 * np.pi**2

    def test_nodal_value_and_wall_value(self, square_x):
        grid, pair = square_x
        f, flag = small_hole_objective(grid, pair)
        x = grid.centers[:, 0]
        mid = np.abs(x - 0.5) < grid.h
        assert np.mean(f[mid & ~flag]) == pytest.approx(-2 * np.pi**2, rel=0.01)
        # the wall value comes from the first interior column, x = h/2 + h
        wall = (np.abs(x - 1.5 * grid.h) < 1e-12) & ~flag
        assert np.mean(f[wall]) == pytest.approx(2 * np.pi**2 * np.cos(3 * np.pi * grid.h), rel=0.02)

    def test_defined_everywhere(self, disk64):
        grid, _, pair = disk64
        f, flag = small_hole_objective(grid, pair)
        assert f.shape == (grid.n,) and np.all(np.isfinite(f))
        assert flag.any() and not flag.all()

    def test_sign_invariance(self, square_x):
        grid, pair = square_x
        neg = EigenPair(pair.mu, -pair.psi, 0.0, pair.gap)
        assert np.array_equal(small_hole_objective(grid, pair)[0], small_hole_objective(grid, neg)[0])

    def test_boundary_flag(self, square_x):
        grid, _ = square_x
        flag = boundary_adjacent(grid)
        ring = (np.min(np.column_stack([grid.centers, 1 - grid.centers]), axis=1) < grid.h)
        assert np.array_equal(flag, ring)


class TestNodalSet:
    def test_square_line(self, square_x):
        grid, pair = square_x
        ns = extract_nodal_set(grid, pair.psi)
        pts = ns.points()
        assert len(pts) > 10
        assert np.max(np.abs(pts[:, 0] - 0.5)) <= grid.h
        assert ns.regions == 2

    def test_disk_diameter(self, disk64):
        grid, _, pair = disk64
        ns = extract_nodal_set(grid, pair.psi)
        pts = ns.points()
        # fit a line through the origin; every nodal point is within 2h of it
        _, _, vt = np.linalg.svd(pts, full_matrices=False)
        normal = vt[1]
        assert np.max(np.abs(pts @ normal)) <= 2 * grid.h
        assert ns.regions == 2

    def test_sign_flip_same_segments(self, disk64):
        grid, _, pair = disk64
        a = extract_nodal_set(grid, pair.psi)
        b = extract_nodal_set(grid, -pair.psi)
        assert len(a.segments) == len(b.segments)
        for s, t in zip(a.segments, b.segments):
            assert np.allclose(s, t)

    def test_no_sign_change(self):
        grid = build_grid(unit_disk(), None, 0.1)
        with pytest.raises(NodalError):
            extract_nodal_set(grid, np.ones(grid.n))

    def test_segments_between_opposite_signs(self, disk64):
        grid, _, pair = disk64
        from critnodes.discretize import interpolate
        ns = extract_nodal_set(grid, pair.psi)
        vals = interpolate(grid, pair.psi, ns.points()).value
        assert np.max(np.abs(vals)) < 0.05 * np.max(np.abs(pair.psi))

    def test_distance(self):
        from critnodes.nodalmap import NodalSet
        ns = NodalSet([np.array([[0.0, 0.0], [1.0, 0.0]])], 2)
        assert np.allclose(ns.distance([[0.5, 0.3], [2.0, 0.0], [-1.0, 1.0]]), [0.3, 1.0, np.sqrt(2)])


class TestMinima:
    def test_square_minima_on_nodal_line(self, square_x):
        grid, pair = square_x
        rep = nodal_report(grid, pair)
        assert rep.minima
        for m in rep.minima:
            assert abs(m.x - 0.5) <= 2 * grid.h
            assert m.dist_to_nodal <= 3 * grid.h

    def test_disk_minima_near_center_diameter(self, disk64):
        grid, _, pair = disk64
        rep = nodal_report(grid, pair)
        assert rep.minima
        for m in rep.minima:
            assert m.dist_to_nodal <= 3 * grid.h
            assert np.hypot(m.x, m.y) < 0.5

    def test_constant_shift_same_argmin(self, square_x):
        grid, pair = square_x
        f, flag = small_hole_objective(grid, pair)
        ns = extract_nodal_set(grid, pair.psi)
        a = [(m.x, m.y) for m in locate_f_minima(grid, f, ns, flag)]
        b = [(m.x, m.y) for m in locate_f_minima(grid, f + 7.25, ns, flag)]
        assert a == b

    def test_minima_exclude_flagged(self, square_x):
        grid, pair = square_x
        f, flag = small_hole_objective(grid, pair)
        ns = extract_nodal_set(grid, pair.psi)
        for m in locate_f_minima(grid, f, ns, flag):
            k = np.flatnonzero((grid.centers[:, 0] == m.x) & (grid.centers[:, 1] == m.y))[0]
            assert not flag[k]

    def test_small_hole_limit_agrees_with_sweep(self, disk64):
        # the sweep minimizer for a small hole sits on the argmin region of f
        grid, _, pair = disk64
        rep = nodal_report(grid, pair)
        h = grid.h
        cand = [(x, y) for x in (-0.1, 0.0, 0.1) for y in (-0.1, 0.0, 0.1)]
        recs = mu2_vs_position_sweep(unit_disk(), 0.05, cand, h)
        best = np.array(cand[int(np.argmin([r.mu2 for r in recs]))])
        pts = np.array([[m.x, m.y] for m in rep.minima])
        assert np.min(np.linalg.norm(pts - best, axis=1)) <= 3 * h

    def test_csv(self, square_x, tmp_path):
        grid, pair = square_x
        rep = nodal_report(grid, pair)
        report_to_csv(grid, rep, tmp_path / "f.csv", tmp_path / "n.csv", tmp_path / "m.csv", "config_hash=1")
        f_lines = (tmp_path / "f.csv").read_text().splitlines()
        assert f_lines[0] == "# config_hash=1" and f_lines[1] == "x,y,f,boundary_adjacent"
        assert len(f_lines) == 2 + grid.n
        assert (tmp_path / "m.csv").read_text().splitlines()[1] == "x,y,f,dist_to_nodal"
