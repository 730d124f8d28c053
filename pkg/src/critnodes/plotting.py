"""Diagnostic SVG figures.  Output is byte-stable: fixed hash salt, no date stamp."""

from __future__ import annotations

from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .discretize import Grid  # noqa: E402
from .geometry import Disk, Shape  # noqa: E402

plt.rcParams.update({
    "svg.hashsalt": "critnodes",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
})


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")
    plt.close(fig)


def _outline(ax, shape: Shape, **kw):
    kw = {"color": "k", "lw": 0.8, **kw}
    if isinstance(shape, Disk):
        t = np.linspace(0, 2 * np.pi, 257)
        ax.plot(shape.center[0] + shape.radius * np.cos(t), shape.center[1] + shape.radius * np.sin(t), **kw)
    else:
        v = np.vstack([shape.array, shape.array[:1]])
        ax.plot(v[:, 0], v[:, 1], **kw)


def heatmap(grid: Grid, values: np.ndarray, path, title: str = "", segments: Optional[Sequence] = None,
            points: Optional[np.ndarray] = None, cmap: str = "RdBu_r"):
    """Cell field over the active mask, optionally with nodal polylines and marked points."""
    lat = np.ma.masked_invalid(grid.to_lattice(values))
    nx, ny = grid.shape_ij
    x0, y0 = grid.origin
    ext = (x0, x0 + nx * grid.h, y0, y0 + ny * grid.h)
    vmax = float(np.nanmax(np.abs(values))) or 1.0
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    im = ax.imshow(lat.T, origin="lower", extent=ext, cmap=cmap, vmin=-vmax, vmax=vmax, interpolation="nearest")
    fig.colorbar(im, ax=ax, shrink=0.85)
    _outline(ax, grid.domain)
    if grid.hole is not None:
        _outline(ax, Disk(grid.hole.center, grid.hole.radius))
    for seg in segments or ():
        ax.plot(seg[:, 0], seg[:, 1], color="k", lw=1.0, ls="--")
    if points is not None and len(points):
        ax.plot(points[:, 0], points[:, 1], "o", ms=4, mfc="none", mec="k")
    ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)


def trajectory(shape: Shape, paths: Sequence[np.ndarray], path, r: Optional[float] = None, title: str = ""):
    """Hole-center paths; the final hole is drawn when ``r`` is given."""
    fig, ax = plt.subplots(figsize=(3.8, 3.8))
    _outline(ax, shape)
    for xs in paths:
        xs = np.asarray(xs)
        ax.plot(xs[:, 0], xs[:, 1], "-", lw=1.2)
        ax.plot(xs[0, 0], xs[0, 1], "o", ms=3, color="C3")
        if r is not None:
            _outline(ax, Disk(tuple(xs[-1]), r), color="C0", lw=0.8)
    ax.set_aspect("equal")
    ax.set_title(title)
    _save(fig, path)


def sweep_curve(d: np.ndarray, mu2: np.ndarray, path, xlabel: str = "distance of hole center", title: str = ""):
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.plot(d, mu2, "o-", ms=3, lw=1.0)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(r"$\mu_2$")
    ax.set_title(title)
    _save(fig, path)


def removal_scatter(fiedler_abs: np.ndarray, lambda2_residual: np.ndarray, path, title: str = ""):
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.plot(fiedler_abs, lambda2_residual, "o", ms=3)
    ax.set_xlabel(r"$|v^F_i|$")
    ax.set_ylabel(r"$\lambda_2(G \setminus \{i\})$")
    ax.set_title(title)
    _save(fig, path)


def consistency_curve(ns: Sequence[int], mismatch: Sequence[float], path, control: Optional[Sequence[float]] = None):
    fig, ax = plt.subplots(figsize=(4.2, 3.0))
    ax.plot(ns, mismatch, "o-", label=r"$\psi_2$")
    if control is not None:
        ax.plot(ns, control, "s--", label="random field")
        ax.legend(frameon=False)
    ax.set_xscale("log")
    ax.set_xlabel("nodes")
    ax.set_ylabel("relative mismatch")
    _save(fig, path)
