from fastcm.mesh.core import MeshError, RwgBasis, SurfaceMesh, build_rwg
from fastcm.mesh.io import FORMATS, load_mesh, write_mesh
from fastcm.mesh.stats import mesh_stats

__all__ = [
    "FORMATS",
    "MeshError",
    "RwgBasis",
    "SurfaceMesh",
    "build_rwg",
    "load_mesh",
    "mesh_stats",
    "write_mesh",
]
