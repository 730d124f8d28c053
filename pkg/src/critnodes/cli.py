"""Batch command-line front end.

Each subcommand resolves its effective configuration (built-in defaults, then a
JSON config file, then command-line flags), validates it, echoes it to
``<out>/config.json`` and writes CSV output tagged with the config hash.
Exit codes: 0 success, 1 configuration error, 2 solver/module failure or a run
that did not converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import graphlab, holeflow, nodalmap
from .discretize import GridError, assemble_neumann_laplacian, build_grid
from .eigenflow import FlowConfig, FlowError, random_start, run_flow
from .geometry import Disk, GeometryError, parse_shape
from .linalg import ConvergenceError, DegenerateEigenvalueWarning, fix_sign, second_eigenpair_oracle

log = logging.getLogger("critnodes")

MODULE_ERRORS = (GeometryError, GridError, FlowError, ConvergenceError, holeflow.HoleFlowError,
                 graphlab.GraphError, nodalmap.NodalError)


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"config error: {key}: {msg}")
        self.key = key


DEFAULTS = {
    "eig": {"shape": "square", "h": None, "seed": 0, "dt": None, "tol": 1e-8, "max_steps": 200_000,
            "polish": False, "dump_mask": False},
    "hole-sweep": {"shape": "disk", "h": None, "r": 0.1, "scan": "0:0.88:0.02", "direction": [1.0, 0.0],
                   "workers": 1},
    "hole-flow": {"shape": "disk", "h": None, "r": 0.1, "x0": None, "seed": 0, "step_fraction": 0.1,
                  "tol": 2e-3, "max_iter": 300, "inner": "flow"},
    "nodal-map": {"shape": "square", "h": None, "align": "x", "margin": 3.0},
    "graph-sweep": {"model": "er", "n": 50, "p": 0.15, "radius": None, "seed": 0, "quantile": 0.2,
                    "edges": None, "workers": 1},
    "consistency": {"ns": [100, 400, 1600], "samples": 10, "seed": 0, "grid_h": 1 / 64, "degree": 15.0,
                    "align": "eigenspace"},
}


# --------------------------------------------------------------------------- config


def _floats(value, key: str, count=None) -> list[float]:
    if isinstance(value, str):
        value = [t for t in value.replace(";", ",").split(",") if t.strip()]
    try:
        out = [float(v) for v in np.ravel(value)]
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected numbers, got {value!r}") from None
    if count is not None and len(out) != count:
        raise ConfigError(key, f"expected {count} numbers, got {len(out)}")
    return out


def _positive(cfg: dict, key: str, integer: bool = False):
    v = cfg.get(key)
    if v is None:
        raise ConfigError(key, "missing required value")
    try:
        v = int(v) if integer else float(v)
    except (TypeError, ValueError):
        raise ConfigError(key, f"not a number: {v!r}") from None
    if not v > 0:
        raise ConfigError(key, "must be positive")
    cfg[key] = v
    return v


def parse_scan(text: str) -> np.ndarray:
    """``a:b:c`` -> a, a+c, ..., up to and including b (within round-off)."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError("scan", "expected start:stop:step")
    a, b, c = _floats(parts, "scan")
    if c <= 0 or b < a:
        raise ConfigError("scan", "need step > 0 and stop >= start")
    k = int(np.floor((b - a) / c + 1e-9))
    return np.round(a + c * np.arange(k + 1), 12)


def validate(cmd: str, cfg: dict) -> dict:
    cfg = dict(cfg)
    if "shape" in cfg:
        try:
            parse_shape(cfg["shape"])
        except (GeometryError, ValueError, KeyError) as exc:
            raise ConfigError("shape", str(exc)) from None
    if cmd in ("eig", "hole-sweep", "hole-flow", "nodal-map"):
        _positive(cfg, "h")
    if cmd in ("hole-sweep", "hole-flow"):
        r = _positive(cfg, "r")
        if cfg["h"] >= r / 3:
            raise ConfigError("h", f"must be below r/3 = {r / 3:.4g} to resolve the hole")
    if "seed" in cfg:
        try:
            cfg["seed"] = int(cfg["seed"])
        except (TypeError, ValueError):
            raise ConfigError("seed", f"not an integer: {cfg['seed']!r}") from None
        if not 0 <= cfg["seed"] < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if cmd == "eig":
        if cfg["dt"] is not None:
            _positive(cfg, "dt")
        _positive(cfg, "tol")
        _positive(cfg, "max_steps", integer=True)
    elif cmd == "hole-sweep":
        parse_scan(cfg["scan"])
        d = _floats(cfg["direction"], "direction", 2)
        if np.hypot(*d) == 0:
            raise ConfigError("direction", "must be nonzero")
        cfg["direction"] = d
        _positive(cfg, "workers", integer=True)
    elif cmd == "hole-flow":
        if cfg["x0"] is None:
            raise ConfigError("x0", "missing required value")
        cfg["x0"] = _floats(cfg["x0"], "x0", 2)
        _positive(cfg, "step_fraction")
        _positive(cfg, "tol")
        _positive(cfg, "max_iter", integer=True)
        if cfg["inner"] not in ("flow", "oracle"):
            raise ConfigError("inner", "must be 'flow' or 'oracle'")
    elif cmd == "nodal-map":
        if cfg["align"] not in ("x", "y", "none"):
            raise ConfigError("align", "must be 'x', 'y' or 'none'")
        cfg["margin"] = float(cfg["margin"])
        if cfg["margin"] < 1:
            raise ConfigError("margin", "must be at least one cell")
    elif cmd == "graph-sweep":
        if cfg["edges"] is None:
            if cfg["model"] not in ("er", "geometric"):
                raise ConfigError("model", "must be 'er' or 'geometric'")
            n = _positive(cfg, "n", integer=True)
            if n < 3:
                raise ConfigError("n", "need at least 3 nodes")
            if cfg["model"] == "er":
                p = _positive(cfg, "p")
                if p > 1:
                    raise ConfigError("p", "must lie in (0, 1]")
            elif cfg["radius"] is not None:
                _positive(cfg, "radius")
        q = _positive(cfg, "quantile")
        if q > 1:
            raise ConfigError("quantile", "must lie in (0, 1]")
        _positive(cfg, "workers", integer=True)
    elif cmd == "consistency":
        ns = [int(v) for v in _floats(cfg["ns"], "ns")]
        if not ns or min(ns) < 3:
            raise ConfigError("ns", "need graph sizes of at least 3")
        cfg["ns"] = ns
        _positive(cfg, "samples", integer=True)
        _positive(cfg, "grid_h")
        _positive(cfg, "degree")
        if cfg["align"] not in ("eigenspace", "x-branch"):
            raise ConfigError("align", "must be 'eigenspace' or 'x-branch'")
    return cfg


def resolve_config(cmd: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(loaded, dict):
            raise ConfigError("config", "file must hold a JSON object")
        for k, v in loaded.items():
            k = k.replace("-", "_")
            if k not in cfg:
                raise ConfigError(k, f"unknown key for '{cmd}'")
            cfg[k] = v
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None and v is not False:
            cfg[k] = v
    return validate(cmd, cfg)


def config_hash(cmd: str, cfg: dict) -> str:
    blob = json.dumps({"command": cmd, **cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------- helpers


class Run:
    def __init__(self, cmd: str, cfg: dict, out: Path, svg: bool):
        self.cmd, self.cfg, self.out, self.svg = cmd, cfg, out, svg
        self.hash = config_hash(cmd, cfg)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.json", "w") as fh:
            json.dump({"command": cmd, "config_hash": self.hash, **cfg}, fh, indent=2, sort_keys=True,
                      default=str)
            fh.write("\n")

    @property
    def tag(self) -> str:
        return f"config_hash={self.hash}"

    def csv(self, name: str, header, rows):
        with open(self.out / name, "w", newline="") as fh:
            fh.write(f"# {self.tag}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


def _grid_oracle(shape, h, start=None):
    grid = build_grid(shape, None, h)
    op = assemble_neumann_laplacian(grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        pair = second_eigenpair_oracle(op, start=start)
    return grid, op, pair


def _bool(b) -> str:
    return "true" if b else "false"


# --------------------------------------------------------------------------- subcommands


def cmd_eig(run: Run) -> int:
    cfg = run.cfg
    shape = parse_shape(cfg["shape"])
    grid = build_grid(shape, None, cfg["h"])
    op = assemble_neumann_laplacian(grid)
    res = run_flow(op, random_start(op, cfg["seed"]),
                   FlowConfig(dt=cfg["dt"], tol=cfg["tol"], max_steps=cfg["max_steps"], polish=cfg["polish"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateEigenvalueWarning)
        ref = second_eigenpair_oracle(op, start=res.pair.psi)
    mu = res.pair.mu
    run.csv("eigenpair.csv", ["x", "y", "psi2"],
            ([f"{x:.10g}", f"{y:.10g}", f"{v:.12e}"] for (x, y), v in zip(grid.centers, res.pair.psi)))
    res.trace.to_csv(run.out / "trace.csv", run.tag)
    if cfg["dump_mask"]:
        run.csv("mask.csv", ["i", "j", "x", "y", "volume"],
                ([int(i), int(j), f"{x:.10g}", f"{y:.10g}", f"{v:.10g}"]
                 for (i, j), (x, y), v in zip(grid.ij, grid.centers, grid.volume)))
    if run.svg:
        from . import plotting
        plotting.heatmap(grid, res.pair.psi, run.out / "psi2.svg", title=f"psi2, mu2={mu:.5f}")
    rel = abs(mu - ref.mu) / ref.mu
    print(f"mu2={mu:.6f} gap={ref.gap:.6e} degenerate={_bool(ref.degenerate)}")
    print(f"steps={res.steps} converged={_bool(res.converged)} oracle_mu2={ref.mu:.10f} rel_diff={rel:.3e}")
    return 0 if res.converged else 2


def _scan_positions(cfg) -> tuple[np.ndarray, np.ndarray]:
    d = parse_scan(cfg["scan"])
    u = np.asarray(cfg["direction"]) / np.hypot(*cfg["direction"])
    shape = parse_shape(cfg["shape"])
    base = np.asarray(shape.center) if isinstance(shape, Disk) else np.zeros(2)
    return d, base + d[:, None] * u[None, :]


def cmd_hole_sweep(run: Run) -> int:
    cfg = run.cfg
    shape = parse_shape(cfg["shape"])
    d, pos = _scan_positions(cfg)
    recs = holeflow.mu2_vs_position_sweep(shape, cfg["r"], pos, cfg["h"], workers=cfg["workers"])
    run.csv("sweep.csv", ["d", "x", "y", "mu2", "gap"],
            ([f"{dk:.10g}", f"{rec.x:.10g}", f"{rec.y:.10g}", f"{rec.mu2:.12g}", f"{rec.gap:.6e}"]
             for dk, rec in zip(d, recs)))
    bad = [rec for rec in recs if rec.error]
    for rec in bad:
        print(f"position ({rec.x:.6g}, {rec.y:.6g}) failed: {rec.error}", file=sys.stderr)
    mu = np.array([rec.mu2 for rec in recs])
    if run.svg:
        from . import plotting
        plotting.sweep_curve(d, mu, run.out / "sweep.svg")
    if np.all(np.isfinite(mu)):
        k = int(np.argmax(mu))
        print(f"points={len(mu)} mu2_min={mu.min():.6f} mu2_max={mu.max():.6f} argmax_d={d[k]:.6g}")
    return 2 if bad else 0


def cmd_hole_flow(run: Run) -> int:
    cfg = run.cfg
    shape = parse_shape(cfg["shape"])
    hcfg = holeflow.HoleFlowConfig(r=cfg["r"], h=cfg["h"], step_fraction=cfg["step_fraction"], tol=cfg["tol"],
                                   max_iter=cfg["max_iter"], inner=cfg["inner"], seed=cfg["seed"])
    traj = holeflow.run_hole_flow(shape, cfg["x0"], hcfg)
    traj.to_csv(run.out / "trajectory.csv", run.tag)
    if run.svg:
        from . import plotting
        plotting.trajectory(shape, [traj.xs], run.out / "trajectory.svg", r=cfg["r"])
    f = traj.final
    print(f"x*=({f.x[0]:.6f}, {f.x[1]:.6f}) mu2*={f.mu2:.8f} v_norm={f.v_norm:.3e} "
          f"steps={len(traj.steps)} converged={_bool(traj.converged)}")
    return 0 if traj.converged else 2


def cmd_nodal_map(run: Run) -> int:
    cfg = run.cfg
    grid, op, pair = _grid_oracle(parse_shape(cfg["shape"]), cfg["h"])
    if cfg["align"] != "none":
        # pick a reproducible member of a (near-)degenerate eigenspace
        close = np.flatnonzero(pair.ritz_values <= pair.mu * (1 + 1e-3))
        if len(close) > 1:
            c = grid.centers[:, 0 if cfg["align"] == "x" else 1]
            psi = nodalmap.align_in_eigenspace(pair.basis[:, close], op.weights, c - op.mean(c))
            psi = psi - op.mean(psi)
            pair.psi = fix_sign(psi / op.norm(psi))
    rep = nodalmap.nodal_report(grid, pair, cfg["margin"])
    nodalmap.report_to_csv(grid, rep, run.out / "f.csv", run.out / "nodal.csv", run.out / "minima.csv", run.tag)
    if run.svg:
        from . import plotting
        pts = np.array([[m.x, m.y] for m in rep.minima]).reshape(-1, 2)
        plotting.heatmap(grid, rep.f, run.out / "f.svg", title="f", segments=rep.nodal.segments, points=pts)
        plotting.heatmap(grid, pair.psi, run.out / "psi2.svg", title="psi2", segments=rep.nodal.segments)
    far = max((m.dist_to_nodal for m in rep.minima), default=0.0)
    print(f"mu2={pair.mu:.6f} regions={rep.nodal.regions} minima={len(rep.minima)} "
          f"max_dist_to_nodal={far:.3e}")
    return 0


def cmd_graph_sweep(run: Run) -> int:
    cfg = run.cfg
    if cfg["edges"] is not None:
        g = graphlab.read_edge_list(cfg["edges"])
    elif cfg["model"] == "er":
        g = graphlab.generate_graph("er", cfg["n"], cfg["seed"], p=cfg["p"])
    else:
        radius = cfg["radius"] or graphlab.radius_for_degree(cfg["n"], 15.0)
        g = graphlab.generate_graph("geometric", cfg["n"], cfg["seed"], radius=radius)
    sweep = graphlab.removal_sweep(g, workers=cfg["workers"])
    sweep.to_csv(run.out / "sweep.csv", run.tag)
    graphlab.write_edge_list(g, run.out / "edges.txt")
    ag = graphlab.heuristic_agreement(sweep, cfg["quantile"])
    if run.svg:
        from . import plotting
        plotting.removal_scatter(sweep.fiedler_abs, sweep.lambda2_residual, run.out / "sweep.svg")
    print(f"lambda2={sweep.lambda2:.6f} argmin={ag.argmin_nodes} best_rank={ag.best_rank} "
          f"limit={ag.rank_limit} agree={_bool(ag.agree)} flat={_bool(ag.flat)} spearman={ag.spearman:.4f}")
    return 0


def cmd_consistency(run: Run) -> int:
    cfg = run.cfg
    seeds = range(cfg["seed"], cfg["seed"] + cfg["samples"])
    kw = {"grid_h": cfg["grid_h"], "degree": cfg["degree"], "align": cfg["align"]}
    rows = []
    for n in cfg["ns"]:
        m = [graphlab.continuum_consistency(n, seed=s, **kw).mismatch for s in seeds]
        c = [graphlab.continuum_consistency(n, seed=s, control=True, **kw).mismatch for s in seeds]
        rows.append((n, float(np.mean(m)), float(np.std(m)), float(np.mean(c))))
    run.csv("consistency.csv", ["n", "mismatch_mean", "mismatch_std", "control_mean"],
            ([n, f"{a:.8f}", f"{b:.8f}", f"{c:.8f}"] for n, a, b, c in rows))
    if run.svg:
        from . import plotting
        plotting.consistency_curve([r[0] for r in rows], [r[1] for r in rows], run.out / "consistency.svg",
                                   control=[r[3] for r in rows])
    for n, a, _, c in rows:
        print(f"n={n} mismatch={a:.4f} control={c:.4f}")
    return 0


COMMANDS = {
    "eig": cmd_eig,
    "hole-sweep": cmd_hole_sweep,
    "hole-flow": cmd_hole_flow,
    "nodal-map": cmd_nodal_map,
    "graph-sweep": cmd_graph_sweep,
    "consistency": cmd_consistency,
}


# --------------------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critnodes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=True):
        p.add_argument("--config", help="JSON file with default values; flags override it")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--svg", action="store_true", help="also render SVG figures")
        if grid:
            p.add_argument("--shape", help="preset (square, disk, convex, nonconvex), 'cx,cy,r' or polygon xy list")
            p.add_argument("--h", type=float, help="grid spacing")

    p = sub.add_parser("eig", help="second eigenpair by the projected gradient flow")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--polish", action="store_true", default=None, help="finish with the direct solver")
    p.add_argument("--dump-mask", dest="dump_mask", action="store_true", default=None)

    p = sub.add_parser("hole-sweep", help="mu2 against hole position along a ray")
    common(p)
    p.add_argument("--r", type=float)
    p.add_argument("--scan", help="start:stop:step distances from the center")
    p.add_argument("--direction", help="ray direction 'dx,dy' (default 1,0)")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("hole-flow", help="gradient-flow trajectory of the hole center")
    common(p)
    p.add_argument("--r", type=float)
    p.add_argument("--x0", help="initial center 'x,y'")
    p.add_argument("--seed", type=int)
    p.add_argument("--step-fraction", dest="step_fraction", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--inner", choices=["flow", "oracle"])

    p = sub.add_parser("nodal-map", help="small-hole objective f and the nodal set of psi2")
    common(p)
    p.add_argument("--align", choices=["x", "y", "none"])
    p.add_argument("--margin", type=float, help="cells kept clear of the wall when locating minima")

    p = sub.add_parser("graph-sweep", help="brute-force node-removal sweep on a random graph")
    common(p, grid=False)
    p.add_argument("--model", choices=["er", "geometric"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--quantile", type=float)
    p.add_argument("--edges", help="read the graph from an edge-list file instead")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("consistency", help="geometric-graph Fiedler vector against the square's psi2")
    common(p, grid=False)
    p.add_argument("--ns", help="comma-separated graph sizes")
    p.add_argument("--samples", type=int, help="number of seeds averaged per size")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--grid-h", dest="grid_h", type=float)
    p.add_argument("--degree", type=float, help="target mean degree")
    p.add_argument("--align", choices=["eigenspace", "x-branch"])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args.command, args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    run = Run(args.command, cfg, Path(args.out), args.svg)
    try:
        return COMMANDS[args.command](run)
    except MODULE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
