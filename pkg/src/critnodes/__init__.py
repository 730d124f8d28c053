"""Critical nodes of Neumann eigenfunctions: hole placement on planar domains and node removal on graphs."""

from .discretize import Grid, SparseOperator, assemble_neumann_laplacian, build_grid
from .eigenflow import FlowConfig, run_flow
from .geometry import Disk, Hole, Polygon, parse_shape, unit_disk, unit_square
from .graphlab import SimpleGraph, fiedler, generate_graph, removal_sweep
from .holeflow import HoleFlowConfig, mu2_vs_position_sweep, run_hole_flow
from .linalg import DegenerateEigenvalueWarning, EigenPair, second_eigenpair_oracle
from .nodalmap import nodal_report

__version__ = "0.1.0"

__all__ = [
    "Disk", "Polygon", "Hole", "parse_shape", "unit_disk", "unit_square",
    "Grid", "SparseOperator", "build_grid", "assemble_neumann_laplacian",
    "EigenPair", "DegenerateEigenvalueWarning", "second_eigenpair_oracle",
    "FlowConfig", "run_flow", "HoleFlowConfig", "run_hole_flow", "mu2_vs_position_sweep",
    "nodal_report", "SimpleGraph", "generate_graph", "fiedler", "removal_sweep",
]
