import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from critnodes.discretize import SparseOperator, assemble_neumann_laplacian, build_grid
from critnodes.geometry import Hole, unit_disk, unit_square
from critnodes.linalg import (ConvergenceError, DegenerateEigenvalueWarning, conjugate_gradient_solve, fix_sign,
                              lowest_eigenpairs, second_eigenpair_oracle)

from conftest import bessel_jprime_root

PATH2 = sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]])


class TestConjugateGradient:
    def test_identity(self, rng):
        b = rng.standard_normal(7)
        assert np.allclose(conjugate_gradient_solve(sp.identity(7, format="csr"), b), b)

    def test_deflated_path(self):
        x = conjugate_gradient_solve(PATH2, np.array([1.0, -1.0]), deflate=True)
        assert np.allclose(x, (0.5, -0.5))

    def test_square_residual(self, rng):
        op = assemble_neumann_laplacian(build_grid(unit_square(), None, 1 / 32))
        b = rng.standard_normal(op.n)
        b -= b.mean()
        x = conjugate_gradient_solve(op.matrix, b, tol=1e-10, deflate=True)
        assert np.linalg.norm(op.matrix @ x - b) <= 1e-10 * np.linalg.norm(b)
        assert abs(x.mean()) < 1e-12

    def test_shifted(self, rng):
        op = assemble_neumann_laplacian(build_grid(unit_disk(), None, 0.1))
        b = rng.standard_normal(op.n)
        x = conjugate_gradient_solve(op.matrix, b, shift=2.0, tol=1e-12)
        assert np.allclose(op.matrix @ x + 2.0 * x, b)

    def test_nonconvergence_reports_residual(self, rng):
        op = assemble_neumann_laplacian(build_grid(unit_square(), None, 1 / 32))
        b = rng.standard_normal(op.n)
        with pytest.raises(ConvergenceError) as exc:
            conjugate_gradient_solve(op.matrix, b - b.mean(), deflate=True, max_iter=3, tol=1e-14)
        assert exc.value.residual > 1e-14


class TestFixSign:
    def test_flip(self):
        assert np.array_equal(fix_sign(np.array([-3.0, 1.0])), [3.0, -1.0])

    def test_keep(self):
        assert np.array_equal(fix_sign(np.array([2.0, -1.0])), [2.0, -1.0])

    def test_tie_lowest_index(self):
        assert np.array_equal(fix_sign(np.array([-1.0, 1.0])), [1.0, -1.0])

    def test_zero(self):
        with pytest.raises(ValueError):
            fix_sign(np.zeros(3))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20).filter(lambda v: max(map(abs, v)) > 1e-6))
    def test_idempotent_and_sign_blind(self, vals):
        v = np.array(vals)
        a = fix_sign(v)
        assert np.array_equal(fix_sign(a), a)
        assert np.array_equal(fix_sign(-v), a)


class TestOracle:
    def test_path_two_cells(self):
        pair = second_eigenpair_oracle(SparseOperator.from_matrix(PATH2))
        assert pair.mu == pytest.approx(2.0)
        assert np.allclose(pair.psi, (1 / np.sqrt(2), -1 / np.sqrt(2)))

    def test_square(self):
        op = assemble_neumann_laplacian(build_grid(unit_square(), None, 1 / 64))
        with pytest.warns(DegenerateEigenvalueWarning):
            pair = second_eigenpair_oracle(op)
        assert abs(pair.mu - np.pi**2) / np.pi**2 < 0.005
        assert pair.degenerate
        # psi lies in span{cos(pi x), cos(pi y)}
        g = build_grid(unit_square(), None, 1 / 64)
        B = np.column_stack([np.cos(np.pi * g.centers[:, 0]), np.cos(np.pi * g.centers[:, 1])])
        c, *_ = np.linalg.lstsq(B, pair.psi, rcond=None)
        assert np.linalg.norm(B @ c - pair.psi) / np.linalg.norm(pair.psi) < 1e-3

    def test_disk(self):
        op = assemble_neumann_laplacian(build_grid(unit_disk(), None, 1 / 64))
        with pytest.warns(DegenerateEigenvalueWarning):
            pair = second_eigenpair_oracle(op)
        exact = bessel_jprime_root() ** 2
        assert exact == pytest.approx(3.3900, abs=1e-4)
        assert abs(pair.mu - exact) / exact < 0.02

    def test_matches_dense_solver(self):
        from scipy.linalg import eigh
        op = assemble_neumann_laplacian(build_grid(unit_disk(), Hole((0.3, 0.1), 0.25), 0.08))
        w = eigh(op.matrix.toarray(), np.diag(op.weights), eigvals_only=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
            pair = second_eigenpair_oracle(op)
        assert pair.mu == pytest.approx(w[1], rel=1e-10)
        assert pair.mu3 == pytest.approx(w[2], rel=1e-8)

    @pytest.mark.parametrize("method", ["direct", "cg"])
    def test_postconditions(self, method):
        op = assemble_neumann_laplacian(build_grid(unit_disk(), Hole((0.4, -0.2), 0.2), 0.05))
        pair = second_eigenpair_oracle(op, method=method)
        Anorm = abs(op.matrix).sum(axis=1).max()
        assert np.linalg.norm(op.matrix @ pair.psi - pair.mu * op.weights * pair.psi) <= 1e-8 * Anorm
        assert op.norm(pair.psi) == pytest.approx(1.0, abs=1e-12)
        assert abs(op.inner(pair.psi, np.ones(op.n))) <= 1e-10
        assert pair.mu == pytest.approx(op.energy(pair.psi) / op.inner(pair.psi, pair.psi), rel=1e-10)
        assert not pair.degenerate

    def test_rectangle_nondegenerate(self):
        from critnodes.geometry import rectangle
        op = assemble_neumann_laplacian(build_grid(rectangle(1.0, 0.75), None, 1 / 32))
        with warnings.catch_warnings():
            warnings.simplefilter("error", DegenerateEigenvalueWarning)
            pair = second_eigenpair_oracle(op)
        assert pair.gap > 0.5 * pair.mu

    def test_lowest_eigenpairs_are_orthonormal(self):
        op = assemble_neumann_laplacian(build_grid(unit_square(), None, 1 / 16))
        theta, V, res = lowest_eigenpairs(op, k=3)
        G = V.T @ (op.weights[:, None] * V)
        assert np.allclose(G, np.eye(V.shape[1]), atol=1e-10)
        assert np.all(np.diff(theta) >= -1e-12)
