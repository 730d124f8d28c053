"""Hole-placement dynamics: moving the center of a removed ball to lower mu2.

Orientation convention: every vector integral returned by
:func:`boundary_integrals` uses the ball's outward normal ``n`` (pointing away
from the hole center, into the residual domain).  The residual domain's own
outward normal on the hole boundary is ``-n``; :func:`hole_velocity` applies
that sign flip.  With this convention the gradient of ``x -> mu2`` is
``-I_grad + mu2 * I_sq`` and the hole velocity is its negative.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .discretize import Grid, GridError, assemble_neumann_laplacian, build_grid, interpolate
from .eigenflow import FlowConfig, project_to_constraints, random_start, run_flow
from .geometry import (AdmissibleSet, GeometryError, Hole, Shape, circle_quadrature,
                       on_admissible_boundary, project_to_admissible, signed_distance)
from .linalg import DegenerateEigenvalueWarning, EigenPair, second_eigenpair_oracle

log = logging.getLogger(__name__)


class HoleFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class BoundaryIntegrals:
    grad: np.ndarray  # \oint |grad psi|^2 n
    sq: np.ndarray  # \oint psi^2 n
    lin: np.ndarray  # \oint psi n
    s_sq: float  # \oint psi^2
    s_lin: float  # \oint psi
    extrapolated: bool = False


def _angular_derivative(values: np.ndarray) -> np.ndarray:
    m = len(values)
    k = np.fft.fftfreq(m, 1.0 / m)
    if m % 2 == 0:
        k[m // 2] = 0.0
    return np.real(np.fft.ifft(1j * k * np.fft.fft(values)))


def boundary_integrals(grid: Grid, psi: np.ndarray, hole: Hole, m: int = 64, delta: float = 1.5,
                       extrapolation: str = "neumann") -> BoundaryIntegrals:
    """Quadrature of |grad psi|^2 n, psi^2 n, psi n, psi^2 and psi over the hole boundary.

    ``psi`` is sampled on two rings at distances ``delta*h`` and ``2*delta*h``
    outside the circle and carried back to the circle.  Nodes facing a nearby
    outer wall use a smaller offset so that both samples stay inside.  ``"neumann"`` fits a
    profile with zero normal slope at the circle (right for converged
    eigenfunctions); ``"linear"`` extrapolates linearly and keeps the normal
    derivative, which is exact for affine fields.  The tangential derivative is
    taken spectrally along the circle.
    """
    if m < 8:
        raise ValueError("boundary quadrature needs m >= 8")
    quad = circle_quadrature(hole, m)
    # where the wall is closer than the rings, pull them in to fit the gap
    gap = -np.asarray(signed_distance(grid.domain, quad.points))
    a = np.clip(gap / 2.5, 0.25 * grid.h, delta * grid.h)
    n = quad.normals
    s1 = interpolate(grid, psi, quad.points + a[:, None] * n)
    s2 = interpolate(grid, psi, quad.points + 2 * a[:, None] * n)
    bad = ~np.isfinite(s1.value) | ~np.isfinite(s2.value)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise HoleFlowError(f"quadrature point {tuple(np.round(quad.points[k], 6))} cannot be interpolated")
    if extrapolation == "neumann":
        val = (4.0 * s1.value - s2.value) / 3.0
        dn = np.zeros(m)
    elif extrapolation == "linear":
        val = 2.0 * s1.value - s2.value
        dn = (s2.value - s1.value) / a
    else:
        raise ValueError(f"unknown extrapolation {extrapolation!r}")
    dt = _angular_derivative(val) / hole.radius
    grad2 = dt * dt + dn * dn
    w = quad.weights
    return BoundaryIntegrals(
        grad=(w * grad2) @ n,
        sq=(w * val * val) @ n,
        lin=(w * val) @ n,
        s_sq=float(w @ (val * val)),
        s_lin=float(w @ val),
        extrapolated=bool(np.any(s1.extrapolated | s2.extrapolated)),
    )


def mu2_gradient(integrals: BoundaryIntegrals, mu: float) -> np.ndarray:
    """Shape gradient of ``x -> mu2`` assembled from ball-oriented integrals."""
    return -integrals.grad + mu * integrals.sq


@dataclass(frozen=True)
class Velocity:
    v: np.ndarray
    v_int: np.ndarray
    a: float
    b: float
    tangential: bool


def hole_velocity(integrals: BoundaryIntegrals, J: float, adm: AdmissibleSet, x,
                  normal: Optional[np.ndarray] = None, domain_area: Optional[float] = None) -> Velocity:
    """Velocity of the hole center and the two constraint-preserving coefficients.

    ``v_int = -\\oint|grad psi|^2 n_res + J \\oint psi^2 n_res`` with ``n_res = -n``.
    On the boundary of the admissible set an outward-pointing ``v_int`` loses
    its normal component.  ``a`` and ``b`` are the coefficients that keep the
    unit-norm and zero-mean constraints under simultaneous motion.
    """
    v_int = integrals.grad - J * integrals.sq
    x = np.asarray(x, dtype=float)
    tangential = False
    v = v_int.copy()
    if normal is None and on_admissible_boundary(adm, x):
        normal = project_to_admissible(adm, x).normal
    if normal is not None:
        vn = float(v_int @ normal)
        if vn > 0:
            v = v_int - vn * normal
            tangential = True
    area = adm.shape.area if domain_area is None else domain_area
    c = np.pi * adm.radius**2
    a = 0.5 * float(v @ integrals.sq)
    b = float(v @ integrals.lin) / (area - c)
    return Velocity(v, v_int, a, b, tangential)


# --------------------------------------------------------------------------- trajectories


@dataclass
class HoleFlowConfig:
    r: float = 0.1
    h: float = 0.02
    step_fraction: float = 0.1  # outer step length cap, in units of r
    v_floor: float = 0.02
    m: int = 64
    delta: float = 1.5
    inner: str = "flow"  # "flow" (explicit flow, then direct polish) or "oracle"
    inner_steps: int = 200
    inner_tol: float = 1e-8
    tol: float = 2e-3  # stop when ||v|| <= tol
    max_iter: int = 300
    gap_tol: float = 1e-3
    seed: int = 0
    min_step: float = 0.01  # stop as stalled once a step moves less than this many cells

    def __post_init__(self):
        if self.r <= 0 or self.h <= 0 or self.step_fraction <= 0:
            raise ValueError("r, h and step_fraction must be positive")
        if self.m < 32:
            raise ValueError("m must be at least 32")
        if not 1.0 <= self.delta <= 3.0:
            raise ValueError("delta must lie in [1, 3] grid cells")
        if self.inner not in ("flow", "oracle"):
            raise ValueError("inner must be 'flow' or 'oracle'")


@dataclass
class HoleStep:
    step: int
    t: float
    x: np.ndarray
    mu2: float
    v_norm: float
    on_boundary: bool
    degenerate: bool
    a: float = 0.0
    b: float = 0.0
    norm_drift: float = 0.0
    mean_drift: float = 0.0


@dataclass
class HoleTrajectory:
    steps: list = field(default_factory=list)
    converged: bool = False
    stalled: bool = False  # step length collapsed by repeated direction reversals
    critical_residual: float = float("nan")  # ||-I_grad + mu2 I_sq|| at the last point

    @property
    def xs(self) -> np.ndarray:
        return np.array([s.x for s in self.steps])

    @property
    def mu2(self) -> np.ndarray:
        return np.array([s.mu2 for s in self.steps])

    @property
    def final(self) -> HoleStep:
        return self.steps[-1]

    def to_csv(self, path, header_comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "t", "x", "y", "mu2", "v_norm", "on_boundary", "degenerate"])
            for s in self.steps:
                w.writerow([s.step, f"{s.t:.10g}", f"{s.x[0]:.10g}", f"{s.x[1]:.10g}", f"{s.mu2:.12g}",
                            f"{s.v_norm:.6e}", int(s.on_boundary), int(s.degenerate)])


def _transfer(prev_grid: Optional[Grid], prev_psi, grid: Grid):
    """Carry a field to a new mask on the same lattice; new cells copy the nearest old value."""
    if prev_grid is None or prev_grid.shape_ij != grid.shape_ij:
        return None
    lat = prev_grid.to_lattice(prev_psi)
    _, (ii, jj) = ndimage.distance_transform_edt(~prev_grid.mask, return_indices=True)
    filled = lat[ii, jj]
    return filled[grid.mask][np.argsort(grid.index[grid.mask])]


def solve_residual_domain(shape: Shape, x, r: float, h: float, warm=None, inner: str = "oracle",
                          inner_steps: int = 200, inner_tol: float = 1e-8, gap_tol: float = 1e-3,
                          seed: int = 0):
    """Grid, operator and second eigenpair of ``shape`` minus ``B_r(x)``."""
    grid = build_grid(shape, Hole(tuple(x), r), h)
    op = assemble_neumann_laplacian(grid)
    start = None
    if warm is not None:
        start = _transfer(warm[0], warm[1], grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        if inner == "flow":
            psi0 = random_start(op, seed) if start is None else start
            try:
                psi0 = project_to_constraints(op, psi0)
            except ValueError:
                psi0 = random_start(op, seed)
            res = run_flow(op, psi0, FlowConfig(tol=inner_tol, max_steps=inner_steps, polish=True,
                                                gap_tol=gap_tol))
            pair = res.pair
        else:
            pair = second_eigenpair_oracle(op, gap_tol=gap_tol, start=start, seed=seed)
    return grid, op, pair


def run_hole_flow(shape: Shape, x0, cfg: Optional[HoleFlowConfig] = None) -> HoleTrajectory:
    """Quasi-static two-timescale hole dynamics started at ``x0``."""
    cfg = cfg or HoleFlowConfig()
    adm = AdmissibleSet(shape, cfg.r)
    x = np.asarray(x0, dtype=float)
    if signed_distance(shape, x) > -cfg.r * (1 - 1e-10):
        raise GeometryError(f"initial center {tuple(x)} is not admissible for r={cfg.r}")
    normal = project_to_admissible(adm, x).normal if on_admissible_boundary(adm, x) else None
    traj = HoleTrajectory()
    warm = None
    t = 0.0
    scale = 1.0
    v_prev = None
    for k in range(cfg.max_iter + 1):
        try:
            grid, op, pair = solve_residual_domain(shape, x, cfg.r, cfg.h, warm, cfg.inner, cfg.inner_steps,
                                                   cfg.inner_tol, cfg.gap_tol, cfg.seed)
        except (GridError, GeometryError) as exc:
            raise HoleFlowError(f"step {k}: hole at {tuple(np.round(x, 6))} left the resolvable region: {exc}")
        warm = (grid, pair.psi)
        integ = boundary_integrals(grid, pair.psi, Hole(tuple(x), cfg.r), cfg.m, cfg.delta)
        vel = hole_velocity(integ, pair.mu, adm, x, normal, domain_area=shape.area)
        vnorm = float(np.linalg.norm(vel.v))
        traj.steps.append(HoleStep(k, t, x.copy(), pair.mu, vnorm, normal is not None, pair.degenerate,
                                   vel.a, vel.b, op.norm(pair.psi) - 1.0, op.mean(pair.psi)))
        traj.critical_residual = float(np.linalg.norm(mu2_gradient(integ, pair.mu)))
        log.debug("hole step %d x=(%.5f, %.5f) mu2=%.8f |v|=%.3e", k, x[0], x[1], pair.mu, vnorm)
        if vnorm <= cfg.tol:
            traj.converged = True
            break
        if k == cfg.max_iter:
            break
        if v_prev is not None and float(vel.v @ v_prev) < 0:
            scale *= 0.5  # overshoot: the velocity turned around
        v_prev = vel.v
        eta = scale * cfg.step_fraction * cfg.r / max(vnorm, cfg.v_floor)
        if eta * vnorm < cfg.min_step * cfg.h:
            traj.stalled = True
            break
        proj = project_to_admissible(adm, x + eta * vel.v)
        x, normal = proj.point, proj.normal
        t += eta
    return traj


# --------------------------------------------------------------------------- sweeps


@dataclass
class SweepRecord:
    x: float
    y: float
    mu2: float
    gap: float
    error: Optional[str] = None


def _sweep_one(args) -> SweepRecord:
    shape, r, h, p = args
    try:
        _, _, pair = solve_residual_domain(shape, p, r, h, inner="oracle")
        return SweepRecord(float(p[0]), float(p[1]), pair.mu, pair.gap)
    except (GridError, GeometryError, ValueError, RuntimeError) as exc:
        return SweepRecord(float(p[0]), float(p[1]), float("nan"), float("nan"), str(exc))


def mu2_vs_position_sweep(shape: Shape, r: float, positions: Sequence, h: float,
                          workers: int = 1) -> list[SweepRecord]:
    """mu2 of the residual domain for each hole position, in input order."""
    jobs = [(shape, r, h, tuple(map(float, p))) for p in positions]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(j) for j in jobs]


def mu2_at(shape: Shape, r: float, h: float, x) -> float:
    rec = _sweep_one((shape, r, h, tuple(map(float, x))))
    if rec.error:
        raise HoleFlowError(rec.error)
    return rec.mu2


def finite_difference_gradient(shape: Shape, r: float, h: float, x, step: Optional[float] = None) -> np.ndarray:
    """Central differences of ``x -> mu2`` through the direct solver (default step 2h)."""
    s = 2 * h if step is None else step
    x = np.asarray(x, dtype=float)
    g = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = s
        g[k] = (mu2_at(shape, r, h, x + e) - mu2_at(shape, r, h, x - e)) / (2 * s)
    return g


def sweep_to_csv(records: Sequence[SweepRecord], path, header_comment: Optional[str] = None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "mu2", "gap"])
        for rec in records:
            w.writerow([f"{rec.x:.10g}", f"{rec.y:.10g}", f"{rec.mu2:.12g}", f"{rec.gap:.6e}"])
