"""Structured test surfaces: rectangular plates and near-uniform spheres.

These are fixtures for validation and scaling studies, not a general mesher.
"""

import numpy as np
from scipy.spatial import ConvexHull

from fastcm.mesh.core import SurfaceMesh


def plate(width, height, nx, ny, crossed_cells=()):
    """Flat plate in the z = 0 plane, centered at the origin.

    Each of the ``nx * ny`` cells is split along one diagonal, except cells
    listed in ``crossed_cells`` (``(ix, iy)`` pairs) which get a center vertex
    and four triangles. A plain grid has ``3 nx ny - nx - ny`` interior edges;
    every crossed cell adds three.
    """
    xs = np.linspace(-width / 2, width / 2, nx + 1)
    ys = np.linspace(-height / 2, height / 2, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vertices = [np.stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)], axis=1)]

    def vid(i, j):
        return i * (ny + 1) + j

    crossed = {tuple(c) for c in crossed_cells}
    next_id = (nx + 1) * (ny + 1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i, j) in crossed:
                center = [(xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2, 0.0]
                vertices.append(np.array([center]))
                m = next_id
                next_id += 1
                tris += [[a, b, m], [b, c, m], [c, d, m], [d, a, m]]
            else:
                tris += [[a, b, c], [a, c, d]]
    return SurfaceMesh(np.concatenate(vertices), np.array(tris))


def reference_plate():
    """1.0 m x 0.6 m plate with exactly 947 interior edges.

    A 23 x 14 grid gives 929 interior edges; six crossed cells, spread
    symmetrically over the plate, add the remaining 18.
    """
    cells = [(3, 3), (11, 3), (19, 3), (3, 10), (11, 10), (19, 10)]
    return plate(1.0, 0.6, 23, 14, crossed_cells=cells)


def sphere(n_vertices, radius=1.0):
    """Closed sphere from the convex hull of a Fibonacci point set.

    The hull has ``2 n_vertices - 4`` triangles and ``3 n_vertices - 6``
    edges, all interior.
    """
    k = np.arange(n_vertices) + 0.5
    z = 1 - 2 * k / n_vertices
    golden = np.pi * (3 - np.sqrt(5))
    r = np.sqrt(1 - z**2)
    phi = golden * k
    pts = radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    hull = ConvexHull(pts)
    tris = hull.simplices.copy()
    # orient outward
    cen = pts[tris].mean(axis=1)
    nrm = np.cross(pts[tris[:, 1]] - pts[tris[:, 0]], pts[tris[:, 2]] - pts[tris[:, 0]])
    flip = (nrm * cen).sum(axis=1) < 0
    tris[flip] = tris[flip][:, ::-1]
    return SurfaceMesh(pts, tris)


def sphere_with_unknowns(n_unknowns, radius=1.0):
    """Sphere whose RWG count is the closest achievable to ``n_unknowns``."""
    return sphere(max(4, round((n_unknowns + 6) / 3)), radius)
