"""Divergence-free virtual element solvers for the 2D steady Navier-Stokes equations."""
from .assembly import Discretization, SolverSettings, newton_solve, recover_pressure
from .mesh import PolygonalMesh, check_mesh, generate_cvt, generate_disk_meshes, generate_distorted_quads, read_mesh, write_mesh
from .polybasis import CellGeometry
from .stream import StreamElement
from .velocity import VelocityElement

__all__ = [
    "CellGeometry",
    "Discretization",
    "PolygonalMesh",
    "SolverSettings",
    "StreamElement",
    "VelocityElement",
    "check_mesh",
    "generate_cvt",
    "generate_disk_meshes",
    "generate_distorted_quads",
    "newton_solve",
    "read_mesh",
    "recover_pressure",
    "write_mesh",
]
