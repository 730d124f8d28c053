"""Finite graphs: algebraic connectivity, Fiedler vectors and node-removal sweeps."""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from scipy.stats import spearmanr

from .discretize import SparseOperator, assemble_neumann_laplacian, build_grid, interpolate
from .geometry import unit_square
from .linalg import GRAPH_GAP_TOL, DegenerateEigenvalueWarning, fix_sign, second_eigenpair_oracle

MAX_DRAWS = 1000
DENSE_MAX = 200


class GraphError(ValueError):
    pass


@dataclass(eq=False)
class SimpleGraph:
    n: int
    edges: np.ndarray  # (m, 2), i < j, sorted
    positions: Optional[np.ndarray] = None
    seed: Optional[int] = None
    retries: int = 0
    kind: str = "custom"

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        if len(e) and (np.any(e < 0) or np.any(e >= self.n)):
            raise GraphError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise GraphError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0)
        self.edges = e

    @property
    def m(self) -> int:
        return len(self.edges)

    def adjacency(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sp.coo_matrix((data, (np.concatenate([i, j]), np.concatenate([j, i]))),
                             shape=(self.n, self.n)).tocsr()

    def is_connected(self) -> bool:
        return self.n <= 1 or connected_components(self.adjacency(), directed=False)[0] == 1

    def remove_node(self, k: int) -> "SimpleGraph":
        keep = (self.edges[:, 0] != k) & (self.edges[:, 1] != k)
        e = self.edges[keep]
        e = np.where(e > k, e - 1, e)
        pos = None if self.positions is None else np.delete(self.positions, k, axis=0)
        return SimpleGraph(self.n - 1, e, pos, self.seed, 0, self.kind)


def laplacian(g: SimpleGraph) -> sp.csr_matrix:
    A = g.adjacency()
    deg = np.asarray(A.sum(axis=1)).ravel()
    return (sp.diags(deg) - A).tocsr()


def path_graph(n: int) -> SimpleGraph:
    return SimpleGraph(n, [(i, i + 1) for i in range(n - 1)], kind="path")


def cycle_graph(n: int) -> SimpleGraph:
    return SimpleGraph(n, [(i, (i + 1) % n) for i in range(n)], kind="cycle")


def complete_graph(n: int) -> SimpleGraph:
    return SimpleGraph(n, [(i, j) for i in range(n) for j in range(i + 1, n)], kind="complete")


def star_graph(n: int) -> SimpleGraph:
    """Hub 0 joined to leaves 1..n-1."""
    return SimpleGraph(n, [(0, i) for i in range(1, n)], kind="star")


def generate_graph(kind: str, n: int, seed: int, p: Optional[float] = None,
                   radius: Optional[float] = None) -> SimpleGraph:
    """Seeded connected random graph; redraws until connected.

    ``kind`` is ``"er"`` (each pair independently with probability ``p``) or
    ``"geometric"`` (uniform points in the unit square, linked within ``radius``).
    """
    if n < 3:
        raise GraphError("need n >= 3")
    rng = np.random.default_rng(seed)
    if kind in ("er", "erdos_renyi"):
        if p is None or not 0 < p <= 1:
            raise GraphError("erdos_renyi needs 0 < p <= 1")
        iu = np.triu_indices(n, 1)
        for draw in range(MAX_DRAWS):
            hit = rng.random(len(iu[0])) < p
            g = SimpleGraph(n, np.column_stack([iu[0][hit], iu[1][hit]]), None, seed, draw, "erdos_renyi")
            if g.is_connected():
                return g
        raise GraphError(f"{MAX_DRAWS} disconnected draws; increase p")
    if kind == "geometric":
        if radius is None or radius <= 0:
            raise GraphError("geometric graph needs a positive radius")
        for draw in range(MAX_DRAWS):
            pts = rng.random((n, 2))
            pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
            g = SimpleGraph(n, pairs, pts, seed, draw, "geometric")
            if g.is_connected():
                return g
        raise GraphError(f"{MAX_DRAWS} disconnected draws; increase radius")
    raise GraphError(f"unknown graph kind {kind!r}")


def radius_for_degree(n: int, degree: float) -> float:
    # bulk expected degree (n-1) pi R^2, ignoring the boundary deficit
    return float(np.sqrt(degree / (np.pi * (n - 1))))


@dataclass
class Fiedler:
    lam2: float
    vector: np.ndarray
    lam3: float
    degenerate: bool


def _dense_fiedler(L: np.ndarray, gap_tol: float) -> Fiedler:
    w, V = np.linalg.eigh(L)
    v = V[:, 1] - V[:, 1].mean()
    v = fix_sign(v / np.linalg.norm(v))
    lam2, lam3 = float(w[1]), float(w[2]) if len(w) > 2 else float("inf")
    degenerate = bool(lam3 - lam2 < gap_tol * abs(lam2))
    if degenerate:
        warnings.warn(f"algebraic connectivity is numerically multiple (lambda2={lam2:.8g}, lambda3={lam3:.8g})",
                      DegenerateEigenvalueWarning, stacklevel=3)
    return Fiedler(lam2, v, lam3, degenerate)


def fiedler(g: SimpleGraph, gap_tol: float = GRAPH_GAP_TOL, method: str = "auto") -> Fiedler:
    """Algebraic connectivity and the unit-norm, zero-mean, sign-fixed Fiedler vector.

    ``method="auto"`` uses a dense LAPACK eigensolve up to ``DENSE_MAX`` nodes,
    which keeps the brute-force removal sweep independent of the sparse solver.
    """
    if not g.is_connected():
        raise GraphError("graph is disconnected")
    L = laplacian(g)
    if method == "dense" or (method == "auto" and g.n <= DENSE_MAX):
        return _dense_fiedler(L.toarray(), gap_tol)
    pair = second_eigenpair_oracle(SparseOperator.from_matrix(L), gap_tol=gap_tol)
    return Fiedler(pair.mu, pair.psi, pair.mu3, pair.degenerate)


def algebraic_connectivity(g: SimpleGraph) -> float:
    """lambda2 of L(g); exactly 0 for a disconnected graph."""
    if g.n < 2 or not g.is_connected():
        return 0.0
    if g.n == 2:
        return 2.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        return fiedler(g).lam2


@dataclass
class RemovalSweep:
    node: np.ndarray
    lambda2_residual: np.ndarray
    fiedler_abs: np.ndarray
    fiedler_rank: np.ndarray  # 0 = smallest |v_i|
    lambda2: float = float("nan")
    fiedler_vector: Optional[np.ndarray] = field(default=None, repr=False)

    def __len__(self):
        return len(self.node)

    def to_csv(self, path, header_comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "lambda2_residual", "fiedler_abs", "fiedler_rank"])
            for row in zip(self.node, self.lambda2_residual, self.fiedler_abs, self.fiedler_rank):
                w.writerow([int(row[0]), f"{row[1]:.12g}", f"{row[2]:.12g}", int(row[3])])


def removal_row(g: SimpleGraph, k: int) -> float:
    return algebraic_connectivity(g.remove_node(k))


def removal_sweep(g: SimpleGraph, workers: int = 1) -> RemovalSweep:
    """Exhaustive single-node removal: lambda2 of every induced subgraph G - {i}."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        fv = fiedler(g)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            lam = np.array(list(pool.map(lambda k: removal_row(g, k), range(g.n))))
    else:
        lam = np.array([removal_row(g, k) for k in range(g.n)])
    mag = np.abs(fv.vector)
    order = np.argsort(mag, kind="stable")
    rank = np.empty(g.n, dtype=int)
    rank[order] = np.arange(g.n)
    return RemovalSweep(np.arange(g.n), lam, mag, rank, fv.lam2, fv.vector)


@dataclass
class Agreement:
    agree: bool
    flat: bool
    argmin_nodes: list
    best_rank: int
    rank_limit: int
    spearman: float


def heuristic_agreement(sweep: RemovalSweep, quantile: float = 0.2, rtol: float = 1e-9) -> Agreement:
    """Does the most damaging removal hit a node with one of the smallest |Fiedler| entries?"""
    lam = sweep.lambda2_residual
    n = len(lam)
    limit = int(np.ceil(quantile * n - 1e-12))
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.ptp(lam) <= rtol * scale:
        return Agreement(True, True, list(range(n)), 0, limit, float("nan"))
    argmin = np.flatnonzero(lam <= lam.min() + rtol * scale)
    best = int(sweep.fiedler_rank[argmin].min())
    rho = spearmanr(lam, sweep.fiedler_abs).statistic
    return Agreement(best < limit, False, [int(k) for k in argmin], best, limit, float(rho))


# --------------------------------------------------------------------------- continuum check


@dataclass
class Consistency:
    n: int
    radius: float
    seed: int
    mismatch: float
    lam2: float
    mu2_grid: float
    subspace_dim: int


_GRID_CACHE: dict = {}


def _square_eigenspace(grid_h: float, gap_tol: float = 1e-3):
    key = round(grid_h, 15)
    if key not in _GRID_CACHE:
        grid = build_grid(unit_square(), None, grid_h)
        op = assemble_neumann_laplacian(grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
            pair = second_eigenpair_oracle(op)
        close = np.flatnonzero(pair.ritz_values <= pair.mu * (1 + gap_tol))
        _GRID_CACHE[key] = (grid, pair, pair.basis[:, close])
    return _GRID_CACHE[key]


def continuum_consistency(n: int, radius: Optional[float] = None, grid_h: float = 1 / 64, seed: int = 0,
                          degree: float = 15.0, control: bool = False, align: str = "eigenspace") -> Consistency:
    """Relative mismatch between a geometric graph's Fiedler vector and psi2 sampled at the nodes.

    With ``align="eigenspace"`` the sampled field is fitted to the Fiedler
    vector by least squares over the grid's whole second eigenspace
    (two-dimensional on the square).  That absorbs sign, scale and the
    arbitrary rotation inside a degenerate pair.  ``align="x-branch"`` fixes
    the member of the eigenspace that best matches the x coordinate and fits
    only a scalar.  ``control=True`` swaps the eigenspace for random fields.
    """
    if align not in ("eigenspace", "x-branch"):
        raise GraphError("align must be 'eigenspace' or 'x-branch'")
    r = radius_for_degree(n, degree) if radius is None else radius
    g = generate_graph("geometric", n, seed, radius=r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        fv = fiedler(g)
    grid, pair, basis = _square_eigenspace(grid_h)
    if control:
        rng = np.random.default_rng(seed + 1)
        basis = rng.standard_normal((grid.n, basis.shape[1]))
    if align == "x-branch":
        w = grid.volume
        B = basis * np.sqrt(w)[:, None]
        target = grid.centers[:, 0] - np.average(grid.centers[:, 0], weights=w)
        c, *_ = np.linalg.lstsq(B, target * np.sqrt(w), rcond=None)
        basis = (basis @ c)[:, None]
    S = np.column_stack([interpolate(grid, basis[:, k], g.positions).value for k in range(basis.shape[1])])
    coef, *_ = np.linalg.lstsq(S, fv.vector, rcond=None)
    mismatch = float(np.linalg.norm(fv.vector - S @ coef) / np.linalg.norm(fv.vector))
    return Consistency(n, r, seed, mismatch, fv.lam2, pair.mu, basis.shape[1])


def consistency_curve(ns: Sequence[int], seeds: Sequence[int], **kw) -> dict:
    """Mean mismatch over ``seeds`` for each graph size."""
    return {n: float(np.mean([continuum_consistency(n, seed=s, **kw).mismatch for s in seeds])) for n in ns}


# --------------------------------------------------------------------------- I/O


def write_edge_list(g: SimpleGraph, path):
    with open(path, "w") as fh:
        fh.write(f"n={g.n}\n")
        for i, j in g.edges:
            fh.write(f"{int(i)} {int(j)}\n")


def read_edge_list(path) -> SimpleGraph:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("n="):
        raise GraphError("edge list must start with a header line 'n=<count>'")
    n = int(lines[0][2:])
    edges = [tuple(int(t) for t in ln.split()[:2]) for ln in lines[1:]]
    return SimpleGraph(n, np.array(edges, dtype=int).reshape(-1, 2), kind="file")
