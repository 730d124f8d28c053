"""Sparse kernels and the direct second-eigenpair solver used as a cross-check."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import SparseOperator

GRID_GAP_TOL = 1e-3
GRAPH_GAP_TOL = 1e-8


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class DegenerateEigenvalueWarning(UserWarning):
    """The second eigenvalue is (numerically) multiple."""


@dataclass
class EigenPair:
    mu: float
    psi: np.ndarray
    residual: float
    gap: float  # mu3 - mu2
    mu3: float = float("nan")
    degenerate: bool = False
    basis: Optional[np.ndarray] = field(default=None, repr=False)  # Ritz vectors, columns
    ritz_values: Optional[np.ndarray] = field(default=None, repr=False)


def conjugate_gradient_solve(A, b, shift: float = 0.0, tol: float = 1e-10, max_iter: int = 10_000,
                             deflate: bool = False, x0=None):
    """Jacobi-preconditioned CG for ``(A + shift I) x = b``.

    With ``deflate`` the iterates stay orthogonal to the constant vector,
    which makes a singular Neumann/graph Laplacian solvable for zero-mean ``b``.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    diag = np.asarray(A.diagonal(), dtype=float) + shift
    dinv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    def op(v):
        return A @ v + shift * v

    def center(v):
        return v - v.mean() if deflate else v

    if deflate:
        b = center(b)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else center(np.array(x0, dtype=float))
    if bnorm == 0:
        return np.zeros(n)
    r = b - op(x)
    z = center(dinv * r)
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * bnorm:
            return center(x)
        Ap = op(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        z = center(dinv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        if deflate:
            x = center(x)
    res = np.linalg.norm(b - op(x)) / bnorm
    if res <= tol:
        return center(x)
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations (relative residual {res:.3e})", res)


def fix_sign(psi: np.ndarray, rel_tol: float = 1e-9) -> np.ndarray:
    """Flip ``psi`` so that its largest-magnitude entry is positive.

    Entries within ``rel_tol`` of the maximum magnitude count as ties; the lowest
    index among them decides.
    """
    psi = np.asarray(psi, dtype=float)
    mag = np.abs(psi)
    top = mag.max()
    if top == 0:
        raise ValueError("cannot fix the sign of a zero vector")
    k = int(np.flatnonzero(mag >= top * (1 - rel_tol))[0])
    return -psi if psi[k] < 0 else psi.copy()


class _ShiftedSolver:
    """Solves ``(A + s W) x = y`` by a factorization or by deflation-free CG."""

    def __init__(self, op: SparseOperator, shift: float, method: str):
        self.method = method
        mat = op.matrix + shift * sp.diags(op.weights)
        if method == "cg":
            self.mat = sp.csr_matrix(mat)
        elif op.n <= 400:
            self.factor = sla.cho_factor(mat.toarray())
            self.method = "dense"
        else:
            self.factor = spla.splu(sp.csc_matrix(mat))

    def __call__(self, Y):
        if self.method == "dense":
            return sla.cho_solve(self.factor, Y)
        if self.method == "cg":
            return np.column_stack([conjugate_gradient_solve(self.mat, y, tol=1e-13) for y in Y.T])
        return self.factor.solve(Y)


def lowest_eigenpairs(op: SparseOperator, k: int = 2, block: int = 6, tol: float = 1e-12,
                      max_iter: int = 2000, start=None, seed: int = 0, method: str = "direct"):
    """Lowest ``k`` nonzero eigenpairs of ``A psi = mu W psi`` by block inverse iteration.

    The constant null vector is projected out at every step (deflation).  The
    shifted operator ``A + s W`` with ``s = 1/|domain|`` is positive definite,
    so a Cholesky/LU factor or CG can be reused across iterations.  Returns
    Ritz values, W-orthonormal Ritz vectors and residual norms.
    """
    n = op.n
    dim = n - 1  # the constant direction is removed
    if dim < 1:
        raise ValueError("operator too small to have a nonconstant eigenvector")
    p = min(max(block, k + 2), dim)
    k = min(k, dim)
    w = op.weights
    shift = 1.0 / float(op.mass.sum()) if op.cell_area != 1.0 else 1.0 / n
    solve = _ShiftedSolver(op, shift, method)
    wsum = w.sum()

    def deflate(V):
        return V - np.outer(np.ones(n), (w @ V) / wsum)

    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, p))
    if start is not None:
        S = np.atleast_2d(np.asarray(start, dtype=float).T).T
        V[:, : S.shape[1]] = S[:, :p]
    V = deflate(V)
    Anorm = float(abs(op.matrix).sum(axis=1).max())
    theta = res = None
    for it in range(max_iter):
        V = deflate(solve(w[:, None] * V))
        # Rayleigh-Ritz in the W inner product
        G = V.T @ (w[:, None] * V)
        H = V.T @ (op.matrix @ V)
        G, H = 0.5 * (G + G.T), 0.5 * (H + H.T)
        try:
            theta, C = sla.eigh(H, G)
        except np.linalg.LinAlgError:
            V, _ = np.linalg.qr(V)
            continue
        V = V @ C
        V /= np.sqrt(np.einsum("ij,ij->j", V, w[:, None] * V))
        R = op.matrix @ V[:, :k] - (w[:, None] * V[:, :k]) * theta[:k]
        res = np.linalg.norm(R, axis=0) / (Anorm * np.linalg.norm(V[:, :k], axis=0))
        if np.all(res <= tol):
            break
    return theta, V, res


def second_eigenpair_oracle(op: SparseOperator, gap_tol: float = GRID_GAP_TOL, start=None,
                            seed: int = 0, method: str = "direct", tol: float = 1e-12) -> EigenPair:
    """(mu2, psi2) of the discrete problem, with mu3 for the spectral gap.

    ``psi`` is normalized in the mass inner product and sign-fixed.  A relative
    gap ``(mu3 - mu2) / mu2 < gap_tol`` marks the pair degenerate and warns.
    """
    theta, V, res = lowest_eigenpairs(op, k=2, start=start, seed=seed, method=method, tol=tol)
    psi = V[:, 0] / np.sqrt(op.cell_area)
    psi = psi - op.mean(psi)
    psi = fix_sign(psi / op.norm(psi))
    mu = op.energy(psi) / op.inner(psi, psi)
    mu3 = float(theta[1]) if len(theta) > 1 else float("inf")
    gap = max(mu3 - mu, 0.0)
    degenerate = bool(gap < gap_tol * abs(mu))
    if degenerate:
        warnings.warn(f"second eigenvalue is numerically multiple (mu2={mu:.8g}, mu3={mu3:.8g})",
                      DegenerateEigenvalueWarning, stacklevel=2)
    residual = float(np.linalg.norm(op.matrix @ psi - mu * op.weights * psi))
    basis = V / np.sqrt(op.cell_area)
    return EigenPair(float(mu), psi, residual, float(gap), mu3, degenerate, basis, theta)
