"""Summary statistics for a mesh and its RWG basis."""

import numpy as np

from fastcm.constants import wavelength


def mesh_stats(mesh, basis, frequency=None):
    lengths = mesh.edge_lengths()
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    stats = {
        "unknowns": basis.n,
        "triangles": mesh.n_triangles,
        "vertices": mesh.n_vertices,
        "edge_min": float(lengths.min()),
        "edge_mean": float(lengths.mean()),
        "edge_max": float(lengths.max()),
        "bbox_min": lo.tolist(),
        "bbox_max": hi.tolist(),
    }
    if frequency is not None:
        lam = wavelength(frequency)
        radius = np.linalg.norm(mesh.vertices - (lo + hi) / 2, axis=1).max()
        stats.update(
            frequency=float(frequency),
            wavelength=lam,
            extent_wavelengths=float(np.linalg.norm(hi - lo) / lam),
            ka=float(2 * np.pi * radius / lam),
            edges_per_wavelength=float(lam / lengths.mean()),
        )
    return stats
