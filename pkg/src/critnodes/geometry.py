"""Planar domains, ball-shaped holes and the admissible set of hole centers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Relative slack used when deciding whether a point sits on a level set.
_ON_SET_TOL = 1e-10


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"disk radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def area(self) -> float:
        return np.pi * self.radius**2

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        r = self.radius
        return cx - r, cy - r, cx + r, cy + r


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with counterclockwise vertices; may be non-convex."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 3:
            raise GeometryError("polygon needs at least 3 two-dimensional vertices")
        if _signed_area(verts) <= 0:
            raise GeometryError("polygon vertices must be ordered counterclockwise")
        if not _is_simple(verts):
            raise GeometryError("polygon is self-intersecting")
        object.__setattr__(self, "vertices", tuple(map(tuple, verts.tolist())))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        return _signed_area(self.array)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        v = self.array
        return v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max()


Shape = Disk | Polygon


def unit_square() -> Polygon:
    return Polygon(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


def rectangle(width: float, height: float) -> Polygon:
    return Polygon(((0.0, 0.0), (width, 0.0), (width, height), (0.0, height)))


def unit_disk() -> Disk:
    return Disk((0.0, 0.0), 1.0)


def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class Hole:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"hole radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def area(self) -> float:
        return np.pi * self.radius**2


def hole_fits(shape: Shape, hole: Hole) -> bool:
    """True when the closed ball lies in the closure of the domain (tangency allowed)."""
    d = signed_distance(shape, hole.center)
    return d <= -hole.radius * (1.0 - _ON_SET_TOL)


# --------------------------------------------------------------------------- distances


def _polygon_nearest(v: np.ndarray, p: np.ndarray):
    """Distances and nearest points of each query point to each polygon edge."""
    a = v[None, :, :]
    b = np.roll(v, -1, axis=0)[None, :, :]
    ab = b - a
    ap = p[:, None, :] - a
    t = np.clip(np.sum(ap * ab, axis=2) / np.sum(ab * ab, axis=2), 0.0, 1.0)
    q = a + t[..., None] * ab
    d = np.linalg.norm(p[:, None, :] - q, axis=2)
    return d, q


def _polygon_inside(v: np.ndarray, p: np.ndarray) -> np.ndarray:
    # even-odd crossing rule
    x, y = p[:, 0:1], p[:, 1:2]
    x1, y1 = v[None, :, 0], v[None, :, 1]
    x2, y2 = np.roll(v[:, 0], -1)[None, :], np.roll(v[:, 1], -1)[None, :]
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddle & (x < xcross)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


def signed_distance(shape: Shape, p) -> np.ndarray | float:
    """Signed distance to the boundary, negative inside. Accepts (2,) or (k, 2) input.

    Points on a polygon edge are classified as outside (distance +0.0).
    """
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if isinstance(shape, Disk):
        c = np.asarray(shape.center)
        out = np.linalg.norm(pts - c, axis=1) - shape.radius
    else:
        v = shape.array
        d, _ = _polygon_nearest(v, pts)
        dmin = d.min(axis=1)
        on_edge = dmin <= 1e-14 * max(1.0, float(np.abs(v).max()))
        dmin = np.where(on_edge, 0.0, dmin)
        inside = _polygon_inside(v, pts) & ~on_edge
        out = np.where(inside, -dmin, dmin)
    return float(out[0]) if single else out


def distance_gradient(shape: Shape, p) -> np.ndarray:
    """Unit gradient of the signed distance (points outward through the nearest boundary)."""
    p = np.asarray(p, dtype=float)
    if isinstance(shape, Disk):
        rel = p - np.asarray(shape.center)
        nrm = np.linalg.norm(rel)
        return rel / nrm if nrm > 0 else np.array([1.0, 0.0])
    v = shape.array
    d, q = _polygon_nearest(v, p[None, :])
    k = int(np.argmin(d[0]))
    dmin = d[0, k]
    if dmin <= 1e-14 * max(1.0, float(np.abs(v).max())):
        edge = np.roll(v, -1, axis=0)[k] - v[k]
        return np.array([edge[1], -edge[0]]) / np.linalg.norm(edge)
    g = (p - q[0, k]) / dmin
    return g if signed_distance(shape, p) > 0 else -g


# --------------------------------------------------------------------------- admissible set


@dataclass(frozen=True)
class AdmissibleSet:
    """Hole centers whose ball of radius ``radius`` stays inside ``shape``."""

    shape: Shape
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("erosion radius must be positive")


def admissible_contains(adm: AdmissibleSet, x) -> bool:
    return bool(signed_distance(adm.shape, x) < -adm.radius)


def on_admissible_boundary(adm: AdmissibleSet, x) -> bool:
    d = signed_distance(adm.shape, x)
    return abs(d + adm.radius) <= _ON_SET_TOL * max(1.0, adm.radius)


@dataclass(frozen=True)
class Projection:
    point: np.ndarray
    normal: Optional[np.ndarray]
    ambiguous: bool = False


def _nearest_features(shape: Polygon, p: np.ndarray, tol: float):
    d, q = _polygon_nearest(shape.array, p[None, :])
    d, q = d[0], q[0]
    dmin = d.min()
    picks = np.flatnonzero(d <= dmin + tol)
    # collapse features sharing the same nearest point (shared vertex)
    pts = np.unique(np.round(q[picks], 12), axis=0)
    return dmin, pts


def project_to_admissible(adm: AdmissibleSet, x, max_iter: int = 60) -> Projection:
    """Nearest point of the closed admissible set, plus its outward normal when on the boundary.

    Interior points come back unchanged with ``normal=None``.
    """
    x = np.asarray(x, dtype=float)
    shape, r = adm.shape, adm.radius
    if signed_distance(shape, x) < -r:
        return Projection(x.copy(), None)
    if isinstance(shape, Disk):
        c = np.asarray(shape.center)
        rel = x - c
        nrm = np.linalg.norm(rel)
        n = rel / nrm if nrm > 0 else np.array([1.0, 0.0])
        return Projection(c + (shape.radius - r) * n, n)

    ambiguous = False
    p = x.copy()
    for _ in range(max_iter):
        sd = signed_distance(shape, p)
        if abs(sd + r) <= _ON_SET_TOL * max(1.0, r) and sd <= -r * (1 - _ON_SET_TOL):
            break
        dmin, feats = _nearest_features(shape, p, 1e-12 * max(1.0, r))
        candidates = []
        for q in feats:
            g = q - p if sd < 0 else p - q
            g = g / np.linalg.norm(g) if np.linalg.norm(g) > 0 else distance_gradient(shape, p)
            candidates.append(p - (sd + r) * g)
        if len(candidates) > 1:
            ambiguous = True
            candidates.sort(key=lambda c: (c[0], c[1]))
        p = candidates[0]
    normal = distance_gradient(shape, p)
    return Projection(p, normal, ambiguous)


# --------------------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class CircleQuadrature:
    points: np.ndarray
    normals: np.ndarray  # outward from the ball
    weights: np.ndarray
    angles: np.ndarray = field(repr=False)


def circle_quadrature(hole: Hole, m: int) -> CircleQuadrature:
    """Equispaced rule on the hole boundary; normals point away from the hole center."""
    if m < 3:
        raise GeometryError("circle quadrature needs at least 3 nodes")
    theta = 2.0 * np.pi * np.arange(m) / m
    normals = np.column_stack([np.cos(theta), np.sin(theta)])
    points = np.asarray(hole.center) + hole.radius * normals
    weights = np.full(m, 2.0 * np.pi * hole.radius / m)
    return CircleQuadrature(points, normals, weights, theta)


def parse_shape(spec: str | Sequence[float] | dict) -> Shape:
    """Build a shape from a preset name, a dict, or a flat number list.

    Three numbers are read as ``center_x, center_y, radius``; an even count of
    six or more as polygon vertices.
    """
    if isinstance(spec, dict):
        kind = spec.get("kind") or spec.get("type")
        if kind == "disk":
            return Disk((spec["center_x"], spec["center_y"]), spec["radius"])
        if kind == "polygon":
            return parse_shape(spec["vertices"])
        if kind in PRESETS:
            return PRESETS[kind]()
        raise GeometryError(f"unknown shape kind {kind!r}")
    if isinstance(spec, str):
        if spec in PRESETS:
            return PRESETS[spec]()
        spec = [float(t) for t in spec.replace(";", ",").split(",") if t.strip()]
    vals = [float(t) for t in np.ravel(spec)]
    if len(vals) == 3:
        return Disk((vals[0], vals[1]), vals[2])
    if len(vals) >= 6 and len(vals) % 2 == 0:
        return Polygon(tuple(zip(vals[0::2], vals[1::2])))
    raise GeometryError(f"cannot read a shape from {spec!r}")


PRESETS = {
    "square": unit_square,
    "disk": unit_disk,
    # convex pentagon and an L-like non-convex outline for the polygon runs
    "convex": lambda: Polygon(((-1.0, -1.0), (1.2, -0.9), (1.4, 0.4), (0.2, 1.2), (-1.1, 0.6))),
    "nonconvex": lambda: Polygon(((-1.0, -1.0), (1.0, -1.0), (1.0, 0.0), (0.0, 0.2),
                                  (0.2, 1.0), (-1.0, 1.0))),
}
