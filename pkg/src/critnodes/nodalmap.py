"""Small-hole limit: the objective f = mu2 psi2^2 - |grad psi2|^2 and its minima."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage
from skimage import measure

from .discretize import Grid, interpolate_gradient
from .linalg import EigenPair


class NodalError(ValueError):
    pass


def boundary_adjacent(grid: Grid) -> np.ndarray:
    """Active cells with an inactive cell among their 8 neighbors (per compact index)."""
    padded = np.pad(grid.mask, 1, constant_values=False)
    full = ndimage.binary_erosion(padded, structure=np.ones((3, 3)), border_value=0)[1:-1, 1:-1]
    ij = grid.ij
    return ~full[ij[:, 0], ij[:, 1]]


def boundary_band(grid: Grid, cells: float) -> np.ndarray:
    """Active cells whose center lies within ``cells`` grid cells of an inactive one."""
    padded = np.pad(grid.mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    ij = grid.ij
    return dist[ij[:, 0], ij[:, 1]] <= cells


def small_hole_objective(grid: Grid, pair: EigenPair) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell f and a flag for cells whose gradient stencil touches the boundary."""
    grad = interpolate_gradient(grid, pair.psi, grid.centers)
    f = pair.mu * pair.psi**2 - np.sum(grad.value**2, axis=1)
    return f, boundary_adjacent(grid) | grad.extrapolated


@dataclass
class NodalSet:
    segments: list  # polylines, each (k, 2)
    regions: int  # connected sign regions of psi

    def points(self) -> np.ndarray:
        if not self.segments:
            return np.empty((0, 2))
        return np.vstack(self.segments)

    def distance(self, p) -> np.ndarray:
        """Distance from points ``p`` ((k, 2)) to the nearest polyline piece."""
        pts = np.atleast_2d(np.asarray(p, dtype=float))
        best = np.full(len(pts), np.inf)
        for seg in self.segments:
            if len(seg) == 1:
                best = np.minimum(best, np.linalg.norm(pts - seg[0], axis=1))
                continue
            a, b = seg[:-1], seg[1:]
            ab = b - a
            L2 = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
            t = np.clip(np.sum((pts[:, None, :] - a[None]) * ab[None], axis=2) / L2, 0.0, 1.0)
            q = a[None, :, :] + t[..., None] * ab[None, :, :]
            d = np.linalg.norm(pts[:, None, :] - q, axis=2).min(axis=1)
            best = np.minimum(best, d)
        return best


def _canonical(seg: np.ndarray) -> np.ndarray:
    """Fixed start point and direction, so the result does not depend on the sign of psi."""
    key = np.round(seg, 12)
    if len(seg) > 2 and np.array_equal(key[0], key[-1]):
        body = seg[:-1]
        k = int(np.lexsort((np.round(body[:, 1], 12), np.round(body[:, 0], 12)))[0])
        body = np.roll(body, -k, axis=0)
        if tuple(np.round(body[-1], 12)) < tuple(np.round(body[1], 12)):
            body = np.vstack([body[:1], body[:0:-1]])
        return np.vstack([body, body[:1]])
    return seg[::-1].copy() if tuple(key[-1]) < tuple(key[0]) else seg


def extract_nodal_set(grid: Grid, psi: np.ndarray) -> NodalSet:
    """Zero level set of psi by marching squares over the cell-center lattice."""
    if not (np.any(psi > 0) and np.any(psi < 0)):
        raise NodalError("field has no sign change; not a nonconstant eigenvector")
    lat = grid.to_lattice(psi, fill=0.0)
    contours = measure.find_contours(lat, 0.0, mask=grid.mask)
    x0, y0 = grid.origin
    segments = [np.column_stack([x0 + (c[:, 0] + 0.5) * grid.h, y0 + (c[:, 1] + 0.5) * grid.h])
                for c in contours]
    segments = [_canonical(seg) for seg in segments]
    segments.sort(key=lambda s: (round(float(s[0, 0]), 12), round(float(s[0, 1]), 12), len(s)))
    pos = grid.mask & (lat > 0)
    neg = grid.mask & (lat < 0)
    regions = ndimage.label(pos)[1] + ndimage.label(neg)[1]
    return NodalSet(segments, int(regions))


@dataclass
class FMinimum:
    x: float
    y: float
    f: float
    dist_to_nodal: float


def locate_f_minima(grid: Grid, f: np.ndarray, nodal: NodalSet, exclude: Optional[np.ndarray] = None,
                    rtol: float = 1e-9) -> list[FMinimum]:
    """Grid-local minima of f over the 8-neighborhood; excluded cells neither qualify nor compete."""
    f_in = f if exclude is None else np.where(exclude, np.inf, f)
    lat = grid.to_lattice(f_in, fill=np.inf)
    neigh = ndimage.minimum_filter(lat, footprint=np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]]),
                                   mode="constant", cval=np.inf)
    slack = rtol * float(np.max(np.abs(f[np.isfinite(f_in)]), initial=0.0))
    ij = grid.ij
    is_min = f <= neigh[ij[:, 0], ij[:, 1]] + slack
    if exclude is not None:
        is_min &= ~exclude
    idx = np.flatnonzero(is_min)
    pts = grid.centers[idx]
    dist = nodal.distance(pts) if len(idx) else np.empty(0)
    return [FMinimum(float(p[0]), float(p[1]), float(f[k]), float(d)) for k, p, d in zip(idx, pts, dist)]


@dataclass
class NodalReport:
    f: np.ndarray
    boundary_flag: np.ndarray
    nodal: NodalSet
    minima: list = field(default_factory=list)


def nodal_report(grid: Grid, pair: EigenPair, margin: float = 3.0) -> NodalReport:
    """f, the nodal set and the interior minima of f.

    Minima are searched only at least ``margin`` cells away from the boundary:
    next to a staircase wall the gradient error creates spurious shallow dips.
    """
    f, flag = small_hole_objective(grid, pair)
    nodal = extract_nodal_set(grid, pair.psi)
    exclude = flag | boundary_band(grid, margin)
    return NodalReport(f, flag, nodal, locate_f_minima(grid, f, nodal, exclude))


def align_in_eigenspace(basis: np.ndarray, weights: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Combination of the columns of ``basis`` closest to ``target`` in the weighted norm.

    Used to pick a reproducible member of a degenerate eigenspace, e.g. the
    branch of the square that varies with x.
    """
    B = basis * np.sqrt(weights)[:, None]
    c, *_ = np.linalg.lstsq(B, target * np.sqrt(weights), rcond=None)
    v = basis @ c
    return v


def report_to_csv(grid: Grid, report: NodalReport, f_path, nodal_path, minima_path=None,
                  header_comment: Optional[str] = None):
    def head(fh):
        if header_comment:
            fh.write(f"# {header_comment}\n")

    with open(f_path, "w", newline="") as fh:
        head(fh)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "f", "boundary_adjacent"])
        for (x, y), fv, b in zip(grid.centers, report.f, report.boundary_flag):
            w.writerow([f"{x:.10g}", f"{y:.10g}", f"{fv:.10e}", int(b)])
    with open(nodal_path, "w", newline="") as fh:
        head(fh)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment", "x", "y"])
        for k, seg in enumerate(report.nodal.segments):
            for x, y in seg:
                w.writerow([k, f"{x:.10g}", f"{y:.10g}"])
    if minima_path is not None:
        with open(minima_path, "w", newline="") as fh:
            head(fh)
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "f", "dist_to_nodal"])
            for m in report.minima:
                w.writerow([f"{m.x:.10g}", f"{m.y:.10g}", f"{m.f:.10e}", f"{m.dist_to_nodal:.6e}"])
