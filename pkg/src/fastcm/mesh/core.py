"""Triangulated PEC surfaces and the RWG basis defined over interior edges."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class MeshError(ValueError):
    """Invalid mesh. ``indices`` holds the offending vertex/triangle/edge ids."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in np.ravel(indices))


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _edge_table(triangles):
    """Directed half-edges of every triangle.

    Local slot ``e`` of a triangle is the edge opposite vertex ``e``, traversed
    from vertex ``e+1`` to vertex ``e+2`` in the triangle's own orientation.
    """
    t = np.asarray(triangles)
    start = np.stack([t[:, 1], t[:, 2], t[:, 0]], axis=1).ravel()
    stop = np.stack([t[:, 2], t[:, 0], t[:, 1]], axis=1).ravel()
    tri = np.repeat(np.arange(len(t)), 3)
    slot = np.tile(np.arange(3), len(t))
    return start, stop, tri, slot


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Validated triangle surface. Coordinates in meters.

    Construction checks the invariants that make the mesh usable for an
    EFIE discretization: non-degenerate triangles, no duplicated vertices and
    a consistent orientation across every edge shared by two triangles.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    duplicate_tol: float = 1e-9
    normals: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        t = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must have shape (m, 3), got {t.shape}")
        if len(t) == 0:
            raise MeshError("mesh has no triangles")
        bad = np.flatnonzero((t < 0).any(axis=1) | (t >= len(v)).any(axis=1))
        if bad.size:
            raise MeshError("triangle references a missing vertex", bad)

        cross = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
        twice_area = np.linalg.norm(cross, axis=1)
        longest = np.max(
            [np.linalg.norm(v[t[:, i]] - v[t[:, (i + 1) % 3]], axis=1) for i in range(3)],
            axis=0,
        )
        degenerate = np.flatnonzero(twice_area <= 1e-12 * np.maximum(longest, 1e-300) ** 2)
        if degenerate.size:
            raise MeshError(f"{degenerate.size} degenerate triangle(s)", degenerate)

        scale = max(np.ptp(v, axis=0).max(), 1e-300)
        pairs = cKDTree(v).query_pairs(self.duplicate_tol * scale, output_type="ndarray")
        if len(pairs):
            raise MeshError(f"{len(pairs)} duplicated vertex pair(s)", pairs[0])

        start, stop, tri, _ = _edge_table(t)
        key = np.minimum(start, stop) * len(v) + np.maximum(start, stop)
        _, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
        n_forward = np.bincount(inverse, weights=start < stop, minlength=len(counts))
        # a 2-triangle edge must be traversed once in each direction
        flipped = np.flatnonzero((counts == 2) & (n_forward != 1))
        if flipped.size:
            offenders = tri[inverse == flipped[0]]
            raise MeshError(
                f"inconsistent orientation between triangles {offenders[0]} and {offenders[1]}",
                offenders,
            )

        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "triangles", _readonly(t))
        object.__setattr__(self, "normals", _readonly(cross / twice_area[:, None]))
        object.__setattr__(self, "areas", _readonly(twice_area / 2))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edge_lengths(self):
        """Lengths of all unique edges (boundary and interior)."""
        start, stop, _, _ = _edge_table(self.triangles)
        key = np.unique(np.minimum(start, stop) * self.n_vertices + np.maximum(start, stop))
        a, b = np.divmod(key, self.n_vertices)
        return np.linalg.norm(self.vertices[a] - self.vertices[b], axis=1)

    def scaled(self, factor):
        return SurfaceMesh(self.vertices * factor, self.triangles, self.duplicate_tol)


@dataclass(frozen=True, eq=False)
class RwgBasis:
    """RWG functions, one per interior edge.

    Sign convention: the shared edge ``(a, b)`` is stored with ``a < b``.
    ``tri_plus`` is the triangle that traverses the edge from ``a`` to ``b`` in
    its own orientation; current flows from ``tri_plus`` into ``tri_minus``::

        f(r) = l / (2 A+) (r - v+)   on tri_plus
        f(r) = l / (2 A-) (v- - r)   on tri_minus

    so the divergence is ``+l/A+`` on ``tri_plus`` and ``-l/A-`` on
    ``tri_minus``.
    """

    mesh: SurfaceMesh
    edges: np.ndarray
    tri_plus: np.ndarray
    tri_minus: np.ndarray
    free_plus: np.ndarray
    free_minus: np.ndarray
    lengths: np.ndarray
    # per triangle and local slot (edge opposite local vertex): basis id or -1
    tri_basis: np.ndarray
    tri_sign: np.ndarray

    @property
    def n(self):
        return len(self.edges)

    def __len__(self):
        return self.n

    @property
    def centroids(self):
        """Midpoints of the shared edges, used for octree membership."""
        v = self.mesh.vertices
        return 0.5 * (v[self.edges[:, 0]] + v[self.edges[:, 1]])

    def evaluate(self, index, points, triangle):
        """Value of basis ``index`` at ``points`` (n, 3) lying in ``triangle``."""
        v = self.mesh.vertices
        pts = np.atleast_2d(points)
        if triangle == self.tri_plus[index]:
            a = self.mesh.areas[triangle]
            return self.lengths[index] / (2 * a) * (pts - v[self.free_plus[index]])
        if triangle == self.tri_minus[index]:
            a = self.mesh.areas[triangle]
            return self.lengths[index] / (2 * a) * (v[self.free_minus[index]] - pts)
        return np.zeros_like(pts)

    def divergence(self, index, triangle):
        if triangle == self.tri_plus[index]:
            return self.lengths[index] / self.mesh.areas[triangle]
        if triangle == self.tri_minus[index]:
            return -self.lengths[index] / self.mesh.areas[triangle]
        return 0.0


def build_rwg(mesh):
    """Build one RWG function per interior edge of ``mesh``.

    Raises
    ------
    MeshError
        If an edge is shared by more than two triangles.
    """
    t = mesh.triangles
    nv = mesh.n_vertices
    start, stop, tri, slot = _edge_table(t)
    lo, hi = np.minimum(start, stop), np.maximum(start, stop)
    key = lo * nv + hi
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    if (counts > 2).any():
        bad = uniq[counts > 2]
        raise MeshError(
            f"{bad.size} non-manifold edge(s) shared by more than two triangles",
            np.stack(np.divmod(bad, nv), axis=1),
        )

    interior = np.flatnonzero(counts == 2)
    basis_of_edge = np.full(len(uniq), -1)
    basis_of_edge[interior] = np.arange(len(interior))

    half_basis = basis_of_edge[inverse]
    use = half_basis >= 0
    forward = start < stop  # a -> b traversal marks the plus triangle
    n = len(interior)
    tri_plus = np.empty(n, dtype=np.int64)
    tri_minus = np.empty(n, dtype=np.int64)
    slot_plus = np.empty(n, dtype=np.int64)
    slot_minus = np.empty(n, dtype=np.int64)
    m = use & forward
    tri_plus[half_basis[m]] = tri[m]
    slot_plus[half_basis[m]] = slot[m]
    m = use & ~forward
    tri_minus[half_basis[m]] = tri[m]
    slot_minus[half_basis[m]] = slot[m]

    edges = np.stack(np.divmod(uniq[interior], nv), axis=1)
    v = mesh.vertices
    lengths = np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1)

    tri_basis = np.full((len(t), 3), -1, dtype=np.int64)
    tri_sign = np.zeros((len(t), 3))
    tri_basis[tri_plus, slot_plus] = np.arange(n)
    tri_sign[tri_plus, slot_plus] = 1.0
    tri_basis[tri_minus, slot_minus] = np.arange(n)
    tri_sign[tri_minus, slot_minus] = -1.0

    return RwgBasis(
        mesh=mesh,
        edges=_readonly(edges),
        tri_plus=_readonly(tri_plus),
        tri_minus=_readonly(tri_minus),
        free_plus=_readonly(t[tri_plus, slot_plus]),
        free_minus=_readonly(t[tri_minus, slot_minus]),
        lengths=_readonly(lengths),
        tri_basis=_readonly(tri_basis),
        tri_sign=_readonly(tri_sign),
    )
