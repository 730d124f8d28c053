"""Projected gradient flow ``d psi/dt = Laplace(psi) + J(psi) psi`` on a fixed domain.

Explicit Euler steps followed by re-projection onto the constraint set
(zero mean, unit norm in the mass inner product).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretize import SparseOperator
from .linalg import EigenPair, fix_sign, second_eigenpair_oracle

log = logging.getLogger(__name__)


class FlowError(ValueError):
    pass


def stability_bound(op: SparseOperator) -> float:
    """Largest stable explicit step, from a Gershgorin bound on ``W^{-1} A``."""
    lam_max = float(np.max(2.0 * op.matrix.diagonal() / op.weights))
    return 2.0 / lam_max


def default_dt(op: SparseOperator) -> float:
    # 0.8 of the bound; equals 0.2 h**2 on an uncut grid
    return 0.8 * stability_bound(op)


@dataclass
class FlowConfig:
    dt: Optional[float] = None  # None -> default_dt(op)
    tol: float = 1e-8  # stop when ||d psi/dt||_M <= tol
    max_steps: int = 200_000
    renormalize: str = "each-step"  # or "drift"
    drift_tol: float = 1e-10
    polish: bool = False  # hand over to the direct solver once J stagnates
    stagnation_window: int = 100
    stagnation_rtol: float = 1e-6
    gap_tol: float = 1e-3

    def __post_init__(self):
        if self.tol <= 0 or self.drift_tol <= 0:
            raise FlowError("tolerances must be positive")
        if self.renormalize not in ("each-step", "drift"):
            raise FlowError("renormalize must be 'each-step' or 'drift'")
        if self.dt is not None and self.dt <= 0:
            raise FlowError("dt must be positive")


@dataclass
class FlowTrace:
    step: list = field(default_factory=list)
    J: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    norm_drift: list = field(default_factory=list)
    mean_drift: list = field(default_factory=list)
    polished_at: Optional[int] = None

    def append(self, step, J, g, nd, md):
        self.step.append(step)
        self.J.append(J)
        self.grad_norm.append(g)
        self.norm_drift.append(nd)
        self.mean_drift.append(md)

    def __len__(self):
        return len(self.step)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.step, self.J, self.grad_norm, self.norm_drift, self.mean_drift])

    def to_csv(self, path, header_comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "J", "grad_norm", "norm_drift", "mean_drift"])
            for row in zip(self.step, self.J, self.grad_norm, self.norm_drift, self.mean_drift):
                w.writerow([row[0]] + [f"{v:.12e}" for v in row[1:]])


@dataclass
class FlowResult:
    pair: EigenPair
    trace: FlowTrace
    converged: bool
    steps: int


def rayleigh(op: SparseOperator, psi) -> float:
    return op.energy(psi) / op.inner(psi, psi)


def project_to_constraints(op: SparseOperator, psi) -> np.ndarray:
    """Subtract the mass-weighted mean and scale to unit mass norm."""
    psi = np.asarray(psi, dtype=float)
    scale = np.max(np.abs(psi)) if psi.size else 0.0
    out = psi - op.mean(psi)
    out = out - op.mean(out)
    nrm = op.norm(out)
    if not np.isfinite(nrm) or nrm <= 1e-13 * max(scale, 1e-300) * np.sqrt(op.mass.sum()):
        raise FlowError("initial condition in nullspace: field is constant after centering")
    return out / nrm


def flow_direction(op: SparseOperator, psi) -> tuple[np.ndarray, float]:
    J = rayleigh(op, psi)
    return -op.apply(psi) + J * psi, J


def flow_step(op: SparseOperator, psi, dt: float) -> np.ndarray:
    """One explicit Euler step followed by re-projection."""
    g, _ = flow_direction(op, psi)
    with np.errstate(over="ignore", invalid="ignore"):
        nxt = psi + dt * g
    if not np.all(np.isfinite(nxt)):
        raise FlowError(f"non-finite state; dt={dt:.3e} exceeds the stability bound {stability_bound(op):.3e}")
    return project_to_constraints(op, nxt)


def random_start(op: SparseOperator, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return project_to_constraints(op, rng.uniform(-1.0, 1.0, op.n))


def run_flow(op: SparseOperator, psi0, cfg: Optional[FlowConfig] = None) -> FlowResult:
    """Integrate the flow until ``||-W^{-1}A psi + J psi||_M <= cfg.tol`` or ``cfg.max_steps``."""
    cfg = cfg or FlowConfig()
    dt = default_dt(op) if cfg.dt is None else cfg.dt
    bound = stability_bound(op)
    if dt > bound:
        raise FlowError(f"dt={dt:.3e} exceeds the explicit stability bound {bound:.3e}")

    psi = project_to_constraints(op, psi0)
    trace = FlowTrace()
    converged = False
    polished = False
    step = 0
    while True:
        g, J = flow_direction(op, psi)
        gnorm = op.norm(g)
        trace.append(step, J, gnorm, op.norm(psi) - 1.0, op.mean(psi))
        if gnorm <= cfg.tol:
            converged = True
            break
        if step >= cfg.max_steps:
            break
        if cfg.polish and step >= cfg.stagnation_window:
            J_old = trace.J[-1 - cfg.stagnation_window]
            if abs(J_old - J) <= cfg.stagnation_rtol * abs(J):
                polished = True
                break
        nxt = psi + dt * g
        if not np.all(np.isfinite(nxt)):
            raise FlowError(f"non-finite state at step {step}; reduce dt below {bound:.3e}")
        if cfg.renormalize == "each-step":
            psi = project_to_constraints(op, nxt)
        else:
            psi = nxt
            if abs(op.norm(psi) - 1.0) > cfg.drift_tol or abs(op.mean(psi)) > cfg.drift_tol:
                psi = project_to_constraints(op, psi)
        step += 1

    if cfg.polish and not converged:
        polished = True
    if polished:
        log.debug("flow handed over to direct solver at step %d", step)
        pair = second_eigenpair_oracle(op, gap_tol=cfg.gap_tol, start=psi)
        trace.polished_at = step
        g, J = flow_direction(op, pair.psi)
        trace.append(step + 1, J, op.norm(g), op.norm(pair.psi) - 1.0, op.mean(pair.psi))
        return FlowResult(pair, trace, True, step)

    psi = fix_sign(psi)
    mu = rayleigh(op, psi)
    residual = float(np.linalg.norm(op.matrix @ psi - mu * op.weights * psi))
    pair = EigenPair(mu, psi, residual, float("nan"))
    return FlowResult(pair, trace, converged, step)
