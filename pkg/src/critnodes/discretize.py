"""Masked cell-centered grids and the discrete Neumann Laplacian on them.

The outer boundary is a staircase (a cell is kept when its center lies inside
the domain).  The hole is resolved with cut cells: every cell carries the
fraction of its area lying outside the ball and every face the fraction of its
length lying outside the ball.  The assembled operator is then the Laplacian of
a weighted grid graph whose edge weights are those face fractions, and the mass
of a cell is its open area.  Without a hole all fractions are one and the
operator is the plain 5-point graph Laplacian scaled by 1/h**2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .geometry import GeometryError, Hole, Shape, hole_fits, signed_distance

# Cells whose open area is below this fraction of h**2 are dropped.
MIN_VOLUME_FRACTION = 1e-3


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    h: float
    origin: tuple[float, float]  # lower-left corner of the lattice
    shape_ij: tuple[int, int]
    mask: np.ndarray  # (nx, ny) active cells
    index: np.ndarray  # (nx, ny) compact row index, -1 when inactive
    ij: np.ndarray  # (n, 2) lattice indices of active cells
    centers: np.ndarray  # (n, 2)
    volume: np.ndarray  # (n,) open-area fraction of each active cell
    aperture_x: np.ndarray  # (nx-1, ny) open fraction of the face between (i, j) and (i+1, j)
    aperture_y: np.ndarray  # (nx, ny-1) open fraction of the face between (i, j) and (i, j+1)
    domain: Shape
    hole: Optional[Hole]

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def area(self) -> float:
        """Discrete measure of the residual domain."""
        return float(self.volume.sum() * self.cell_area)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Active neighbor pairs ``(i, j)`` with positive face weight, plus the weights."""
        m, idx = self.mask, self.index
        ii, jj, ww = [], [], []
        for ap, di, dj in ((self.aperture_x, 1, 0), (self.aperture_y, 0, 1)):
            nx, ny = m.shape
            both = m[: nx - di, : ny - dj] & m[di:, dj:] & (ap > 0)
            ii.append(idx[: nx - di, : ny - dj][both])
            jj.append(idx[di:, dj:][both])
            ww.append(ap[both])
        return np.concatenate(ii), np.concatenate(jj), np.concatenate(ww)

    def to_lattice(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        out = np.full(self.mask.shape, fill, dtype=float)
        out[self.mask] = values[self.index[self.mask]]
        return out

    def cell_centers_1d(self):
        x0, y0 = self.origin
        nx, ny = self.shape_ij
        return x0 + self.h * (np.arange(nx) + 0.5), y0 + self.h * (np.arange(ny) + 0.5)


# --------------------------------------------------------------------------- circle / box overlap


def _chord_integral(t, r):
    # antiderivative of sqrt(r^2 - t^2)
    t = np.clip(t, -r, r)
    return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(t / r))


def _positive_part_integral(a, b, r):
    return np.where(b > a, _chord_integral(b, r) - _chord_integral(a, r), 0.0)


def _quadrant_area(x, y, r):
    """Area of the disk of radius r at the origin intersected with {X <= x, Y <= y}."""
    x = np.clip(x, -r, r)
    yc = np.clip(y, -r, r)
    w = np.sqrt(np.maximum(r * r - yc * yc, 0.0))
    lo_mid = -w
    hi_mid = np.minimum(w, x)
    mid_len = np.maximum(hi_mid - lo_mid, 0.0)
    mid = yc * mid_len + _positive_part_integral(lo_mid, hi_mid, r)
    sides = 2.0 * (_positive_part_integral(-r, np.minimum(-w, x), r)
                   + _positive_part_integral(w, np.minimum(r, x), r))
    return np.where(yc >= 0, mid + sides, mid)


def disk_box_overlap(center, r, x0, x1, y0, y1):
    """Exact area of the disk ``B_r(center)`` intersected with the boxes ``[x0,x1]x[y0,y1]``."""
    cx, cy = center
    x0, x1, y0, y1 = x0 - cx, x1 - cx, y0 - cy, y1 - cy
    return (_quadrant_area(x1, y1, r) - _quadrant_area(x0, y1, r)
            - _quadrant_area(x1, y0, r) + _quadrant_area(x0, y0, r))


def _segment_outside_fraction(fixed, lo, hi, c_fixed, c_free, r):
    """Fraction of the axis-aligned segments {fixed} x [lo, hi] lying outside the circle."""
    s = np.sqrt(np.maximum(r * r - (fixed - c_fixed) ** 2, 0.0))
    covered = np.clip(np.minimum(hi, c_free + s) - np.maximum(lo, c_free - s), 0.0, None)
    return 1.0 - covered / (hi - lo)


# --------------------------------------------------------------------------- grid construction


def build_grid(shape: Shape, hole: Optional[Hole], h: float) -> Grid:
    """Masked lattice over ``shape`` minus ``hole`` with spacing ``h``.

    The lattice covers the bounding box padded by 2h and is centered on it, so
    a domain symmetric about its bounding-box center gives a symmetric grid.
    """
    if not h > 0:
        raise GridError("grid spacing h must be positive")
    if hole is not None:
        if not h < hole.radius / 3:
            raise GridError(f"hole under-resolved: need h < r/3 = {hole.radius / 3:.6g}, got h={h:.6g}")
        if not hole_fits(shape, hole):
            raise GeometryError(f"hole at {hole.center} with radius {hole.radius} is not inside the domain")

    xmin, ymin, xmax, ymax = shape.bounds
    nx = int(np.ceil((xmax - xmin + 4 * h) / h - 1e-9))
    ny = int(np.ceil((ymax - ymin + 4 * h) / h - 1e-9))
    x0 = 0.5 * (xmin + xmax) - 0.5 * nx * h
    y0 = 0.5 * (ymin + ymax) - 0.5 * ny * h
    xc = x0 + h * (np.arange(nx) + 0.5)
    yc = y0 + h * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = (signed_distance(shape, pts) < 0).reshape(nx, ny)

    volume = np.ones((nx, ny))
    ap_x = np.ones((nx - 1, ny))
    ap_y = np.ones((nx, ny - 1))
    if hole is not None:
        cx, cy = hole.center
        r = hole.radius
        near = (np.abs(X - cx) < r + h) & (np.abs(Y - cy) < r + h)
        ov = disk_box_overlap((cx, cy), r, X[near] - h / 2, X[near] + h / 2, Y[near] - h / 2, Y[near] + h / 2)
        volume[near] = np.clip(1.0 - ov / (h * h), 0.0, 1.0)
        xf = x0 + h * (np.arange(1, nx))[:, None] * np.ones((1, ny))
        yl = (yc - h / 2)[None, :] * np.ones((nx - 1, 1))
        ap_x = _segment_outside_fraction(xf, yl, yl + h, cx, cy, r)
        yf = y0 + h * (np.arange(1, ny))[None, :] * np.ones((nx, 1))
        xl = (xc - h / 2)[:, None] * np.ones((1, ny - 1))
        ap_y = _segment_outside_fraction(yf, xl, xl + h, cy, cx, r)

    mask = inside & (volume >= MIN_VOLUME_FRACTION)
    mask = _drop_debris(mask, volume, ap_x, ap_y)

    index = -np.ones((nx, ny), dtype=int)
    index[mask] = np.arange(int(mask.sum()))
    ij = np.argwhere(mask)
    order = index[ij[:, 0], ij[:, 1]]
    ij = ij[np.argsort(order)]
    centers = np.column_stack([xc[ij[:, 0]], yc[ij[:, 1]]])
    if len(centers) == 0:
        raise GridError("no active cells; h too coarse for the domain")
    return Grid(h, (x0, y0), (nx, ny), mask, index, ij, centers, volume[mask],
                np.where(inside[:-1] & inside[1:], ap_x, 0.0),
                np.where(inside[:, :-1] & inside[:, 1:], ap_y, 0.0), shape, hole)


def _components(mask, ap_x, ap_y):
    nx, ny = mask.shape
    index = -np.ones((nx, ny), dtype=int)
    index[mask] = np.arange(int(mask.sum()))
    rows, cols = [], []
    for ap, di, dj in ((ap_x, 1, 0), (ap_y, 0, 1)):
        both = mask[: nx - di, : ny - dj] & mask[di:, dj:] & (ap > 0)
        rows.append(index[: nx - di, : ny - dj][both])
        cols.append(index[di:, dj:][both])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    n = int(mask.sum())
    adj = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    return index, ncomp, labels


def _drop_debris(mask, volume, ap_x, ap_y):
    """Remove isolated cut-cell slivers; fail when the domain itself is disconnected."""
    index, ncomp, labels = _components(mask, ap_x, ap_y)
    if ncomp <= 1:
        return mask
    vol = volume[mask]
    sizes = np.bincount(labels, weights=vol)
    big = np.flatnonzero(sizes >= 1.0)
    if len(big) > 1:
        desc = ", ".join(f"#{k}: {int(np.sum(labels == k))} cells" for k in big)
        raise GridError(f"active cells form {len(big)} disconnected components ({desc})")
    keep_label = int(np.argmax(sizes))
    keep = np.zeros_like(mask)
    cells = np.argwhere(mask)
    sel = labels[index[cells[:, 0], cells[:, 1]]] == keep_label
    keep[cells[sel, 0], cells[sel, 1]] = True
    return keep


# --------------------------------------------------------------------------- operator


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Symmetric Laplacian ``matrix`` with a diagonal mass.

    The discrete eigenproblem is ``matrix @ psi = mu * weights * psi`` and the
    inner product is ``<u, v> = cell_area * sum(weights * u * v)``.  Graphs use
    unit weights and unit cell area.
    """

    matrix: sp.csr_matrix
    weights: np.ndarray
    cell_area: float = 1.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def mass(self) -> np.ndarray:
        return self.cell_area * self.weights

    def inner(self, u, v) -> float:
        return float(np.dot(self.mass * u, v))

    def norm(self, u) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def mean(self, u) -> float:
        return float(np.dot(self.mass, u) / self.mass.sum())

    def energy(self, u) -> float:
        return float(self.cell_area * np.dot(u, self.matrix @ u))

    def apply(self, u):
        """Mass-weighted action ``W^{-1} A u`` (the discrete -Laplacian)."""
        return (self.matrix @ u) / self.weights

    @classmethod
    def from_matrix(cls, matrix, weights=None, cell_area: float = 1.0) -> "SparseOperator":
        m = sp.csr_matrix(matrix, dtype=float)
        w = np.ones(m.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        return cls(m, w, cell_area)


def assemble_neumann_laplacian(grid: Grid) -> SparseOperator:
    """5-point Laplacian with natural (dropped-flux) Neumann conditions.

    Off-diagonals are ``-aperture / h**2``; the diagonal makes every row sum to zero.
    """
    i, j, w = grid.edges()
    n = grid.n
    vals = -w / grid.cell_area
    off = sp.coo_matrix((np.concatenate([vals, vals]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                        shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    A = (off + sp.diags(diag)).tocsr()
    A.sort_indices()
    return SparseOperator(A, grid.volume.copy(), grid.cell_area)


def dirichlet_energy(grid: Grid, psi: np.ndarray) -> float:
    """Discrete ``\\int |grad psi|^2`` summed face by face."""
    i, j, w = grid.edges()
    return float(np.sum(w * (psi[i] - psi[j]) ** 2))


# --------------------------------------------------------------------------- interpolation


@dataclass(frozen=True)
class Sample:
    value: np.ndarray
    extrapolated: np.ndarray  # True where a stencil corner was inactive


def interpolate(grid: Grid, psi: np.ndarray, p) -> Sample:
    """Bilinear interpolation of a cell-centered field at points ``p`` ((2,) or (k, 2)).

    When some of the four stencil cells are inactive the remaining ones are
    reweighted and the point is flagged as extrapolated.
    """
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    x0, y0 = grid.origin
    nx, ny = grid.shape_ij
    fx = (pts[:, 0] - x0) / grid.h - 0.5
    fy = (pts[:, 1] - y0) / grid.h - 0.5
    i0 = np.floor(fx).astype(int)
    j0 = np.floor(fy).astype(int)
    tx, ty = fx - i0, fy - j0
    total = np.zeros(len(pts))
    wsum = np.zeros(len(pts))
    missing = np.zeros(len(pts), dtype=bool)
    for di, dj, wgt in ((0, 0, (1 - tx) * (1 - ty)), (1, 0, tx * (1 - ty)),
                        (0, 1, (1 - tx) * ty), (1, 1, tx * ty)):
        ii, jj = i0 + di, j0 + dj
        inb = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        k = np.full(len(pts), -1)
        k[inb] = grid.index[ii[inb], jj[inb]]
        ok = k >= 0
        total[ok] += wgt[ok] * psi[k[ok]]
        wsum[ok] += wgt[ok]
        missing |= ~ok & (wgt > 1e-14)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(wsum > 0, total / wsum, np.nan)
    if np.ndim(p) == 1:
        return Sample(value[0], missing[0])
    return Sample(value, missing)


def interpolate_gradient(grid: Grid, psi: np.ndarray, p, width: Optional[float] = None) -> Sample:
    """Central differences of the interpolant with half-width ``width`` (default h)."""
    pts = np.atleast_2d(np.asarray(p, dtype=float))
    d = grid.h if width is None else width
    ex = np.array([d, 0.0])
    ey = np.array([0.0, d])
    c = interpolate(grid, psi, pts).value
    xp, xm = interpolate(grid, psi, pts + ex), interpolate(grid, psi, pts - ex)
    yp, ym = interpolate(grid, psi, pts + ey), interpolate(grid, psi, pts - ey)

    def diff(plus, minus):
        # one-sided where the stencil runs off the active cells
        out = (plus - minus) / (2 * d)
        out = np.where(np.isnan(minus), (plus - c) / d, out)
        out = np.where(np.isnan(plus), (c - minus) / d, out)
        return np.where(np.isnan(plus) & np.isnan(minus), 0.0, out)

    g = np.column_stack([diff(xp.value, xm.value), diff(yp.value, ym.value)])
    flag = (xp.extrapolated | xm.extrapolated | yp.extrapolated | ym.extrapolated
            | np.isnan(xp.value) | np.isnan(xm.value) | np.isnan(yp.value) | np.isnan(ym.value))
    if np.ndim(p) == 1:
        return Sample(g[0], flag[0])
    return Sample(g, flag)
