"""Characteristic-mode analysis of PEC surfaces with an MLFMA-accelerated
Arnoldi eigensolver and a dense QZ reference path."""

from fastcm.constants import C0, ETA0, wavenumber, wavelength
from fastcm.mesh import SurfaceMesh, RwgBasis, MeshError, load_mesh, write_mesh, build_rwg

__all__ = [
    "C0",
    "ETA0",
    "wavenumber",
    "wavelength",
    "SurfaceMesh",
    "RwgBasis",
    "MeshError",
    "load_mesh",
    "write_mesh",
    "build_rwg",
]

__version__ = "0.1.0"
