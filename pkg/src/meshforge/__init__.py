"""meshforge: cache-backed 3D asset pipeline with quadric mesh simplification."""

__version__ = "0.1.0"

from .mesh import Mesh, MeshStats, ValidationReport, stats, validate
from .meshio import read_mesh, write_mesh
from .decimate import SimplifyConfig, SimplifyReport, simplify, vertex_budget_sweep

__all__ = [
    "Mesh",
    "MeshStats",
    "ValidationReport",
    "stats",
    "validate",
    "read_mesh",
    "write_mesh",
    "SimplifyConfig",
    "SimplifyReport",
    "simplify",
    "vertex_budget_sweep",
]
