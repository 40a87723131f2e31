"""Galerkin EFIE impedance entries on RWG functions.

Conventions
-----------
The kernel is ``g = exp(ikR) / R`` with no ``4 pi``. The Galerkin form::

    K_ij = <f_i, (I - grad grad' / k^2) g, f_j>
         = int int [f_i . f_j - (div f_i)(div' f_j) / k^2] g

splits as ``K = C + iS`` into the ``cos(kR)/R`` and ``sin(kR)/R`` forms.
The impedance matrix reported here is::

    R = k eta S      (radiated power form, positive semidefinite)
    X = k eta C
    Z = R + iX = i k eta conj(K)

Characteristic values from ``X J = lambda R J`` are invariant to any real
rescaling of ``Z``, so only the relative sign of ``R`` and ``X`` matters.

Triangle pairs whose centroids are closer than ``extraction_radius`` times
the longest edge involved are integrated with the 1/R part of the inner
integral done analytically; all others use plain product rules.
"""

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from fastcm.constants import ETA0
from fastcm.potentials import triangle_potentials
from fastcm.quadrature import subdivided_rule, triangle_rule

DEFAULT_DENSE_CAP = 5000


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    """Triangle rules: ``regular`` for far pairs and ``singular`` for
    extraction pairs. For pairs sharing a vertex the outer rule is
    ``singular`` replicated over ``4**singular_levels`` sub-triangles, since
    the analytic potentials have log-type edge behavior there."""

    regular: int = 7
    singular: int = 16
    extraction_radius: float = 2.0
    singular_levels: int = 2


class _TriangleGeometry:
    def __init__(self, mesh, rules):
        self.vertices = mesh.vertices[mesh.triangles]  # (F, 3, 3)
        self.areas = mesh.areas
        self.centroids = self.vertices.mean(axis=1)
        edges = self.vertices - np.roll(self.vertices, 1, axis=1)
        self.longest = np.linalg.norm(edges, axis=2).max(axis=1)
        self.points = {}
        self.weights = {}
        for key in set(rules):
            n, levels = key
            bary, w = subdivided_rule(n, levels) if levels else triangle_rule(n)
            self.points[key] = np.einsum("qa,fad->fqd", bary, self.vertices)
            self.weights[key] = np.asarray(w)


class EfieAssembler:
    """Computes impedance entries for one basis at one wavenumber.

    Parameters
    ----------
    basis : RwgBasis
    k : float
        Wavenumber in rad/m.
    quadrature : QuadratureConfig, optional
    eta : float, optional
        Wave impedance; free space by default.
    """

    def __init__(self, basis, k, quadrature=None, eta=ETA0):
        if k <= 0:
            raise ValueError("wavenumber must be positive")
        self.basis = basis
        self.k = float(k)
        self.eta = float(eta)
        self.quadrature = quadrature or QuadratureConfig()
        q = self.quadrature
        self._rules = {
            "regular": ((q.regular, 0), (q.regular, 0)),
            "near": ((q.singular, 0), (q.singular, 0)),
            "touching": ((q.singular, q.singular_levels), (q.singular, 0)),
        }
        self._extract = {"regular": False, "near": True, "touching": True}
        self.geometry = _TriangleGeometry(basis.mesh, [r for pair in self._rules.values() for r in pair])
        self.n_triangles = basis.mesh.n_triangles
        # slot of each basis inside its plus/minus triangle
        tb = basis.tri_basis
        self._slot_plus = np.argmax(tb[basis.tri_plus] == np.arange(basis.n)[:, None], axis=1)
        self._slot_minus = np.argmax(tb[basis.tri_minus] == np.arange(basis.n)[:, None], axis=1)

    # ------------------------------------------------------------------
    # triangle-pair blocks
    def _needs_extraction(self, t, s):
        g = self.geometry
        dist = np.linalg.norm(g.centroids[t] - g.centroids[s], axis=1)
        h = np.maximum(g.longest[t], g.longest[s])
        return dist < self.quadrature.extraction_radius * h

    def triangle_blocks(self, t, s):
        """Local 3x3 Galerkin blocks of the kernel form ``K`` for triangle pairs.

        ``block[p, q]`` couples the half-RWG with free vertex ``p`` on ``t``
        to the half-RWG with free vertex ``q`` on ``s``, without the
        ``sign * length`` factors.
        """
        t = np.asarray(t, dtype=np.int64)
        s = np.asarray(s, dtype=np.int64)
        out = np.empty((len(t), 3, 3), dtype=complex)
        tris = self.basis.mesh.triangles
        touching = (tris[t][:, :, None] == tris[s][:, None, :]).any(axis=(1, 2))
        kind = np.where(touching, 2, np.where(self._needs_extraction(t, s), 1, 0))
        q = self.quadrature
        chunks = {"regular": 20000, "near": 2000, "touching": max(1, 2000 // 4**q.singular_levels)}
        for code, name in enumerate(("regular", "near", "touching")):
            idx = np.flatnonzero(kind == code)
            for start in range(0, len(idx), chunks[name]):
                sel = idx[start : start + chunks[name]]
                out[sel] = self._blocks(t[sel], s[sel], name)
        self_pairs = t == s
        if self_pairs.any():
            b = out[self_pairs]
            out[self_pairs] = 0.5 * (b + b.transpose(0, 2, 1))
        return out

    def _blocks(self, t, s, name):
        g = self.geometry
        k = self.k
        extract = self._extract[name]
        ro, ri = self._rules[name]
        xo, xi = g.points[ro][t], g.points[ri][s]  # (P, no, 3), (P, ni, 3)
        w, wi = g.weights[ro], g.weights[ri]
        a_s = g.areas[s]
        diff = xo[:, :, None, :] - xi[:, None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))  # (P, n, n)
        if extract:
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = np.expm1(1j * k * dist) / dist
            kern = np.where(dist > 0, kern, 1j * k)
        else:
            kern = np.exp(1j * k * dist) / dist
        kw = kern * (wi * a_s[:, None])[:, None, :]
        j0 = np.sum(kw, axis=-1)  # (P, n)
        j1 = np.stack([np.sum(kw * xi[:, None, :, d], axis=-1) for d in range(3)], axis=-1)
        if extract:
            i0, i1 = triangle_potentials(xo, g.vertices[s][:, None, :, :])
            j0 = j0 + i0
            j1 = j1 + i1

        s0 = j0 @ w  # (P,)
        s1 = np.einsum("pad,a->pd", j1, w)
        sx0 = np.einsum("pad,pa,a->pd", xo, j0, w)
        sxj = np.einsum("pad,pad,a->p", xo, j1, w)
        vt, vs = g.vertices[t], g.vertices[s]
        term = (
            sxj[:, None, None]
            - np.einsum("pqd,pd->pq", vs, sx0)[:, None, :]
            - np.einsum("pad,pd->pa", vt, s1)[:, :, None]
            + np.einsum("pad,pqd->paq", vt, vs) * s0[:, None, None]
        )
        return (term / 4 - s0[:, None, None] / k**2) / a_s[:, None, None]

    # ------------------------------------------------------------------
    # basis entries
    def _combos(self, rows, cols):
        b = self.basis
        tp, tm = b.tri_plus, b.tri_minus
        sp_, sm = self._slot_plus, self._slot_minus
        # order: (+,+), (-,-), (+,-), (-,+)
        return [
            (tp[rows], sp_[rows], tp[cols], sp_[cols], 1.0),
            (tm[rows], sm[rows], tm[cols], sm[cols], 1.0),
            (tp[rows], sp_[rows], tm[cols], sm[cols], -1.0),
            (tm[rows], sm[rows], tp[cols], sp_[cols], -1.0),
        ]

    def _pair_keys(self, t, s):
        lo, hi = np.minimum(t, s), np.maximum(t, s)
        return lo * self.n_triangles + hi

    def _block_table(self, keys):
        keys = np.unique(keys)
        lo, hi = np.divmod(keys, self.n_triangles)
        return keys, self.triangle_blocks(lo, hi)

    def _gather(self, table, rows, cols):
        keys, blocks = table
        vals = []
        for t, p, s, q, sign in self._combos(rows, cols):
            pos = np.searchsorted(keys, self._pair_keys(t, s))
            forward = t <= s
            v = np.where(forward, blocks[pos, p, q], blocks[pos, q, p])
            vals.append(sign * v)
        lengths = self.basis.lengths
        kform = ((vals[0] + vals[1]) + (vals[2] + vals[3])) * (lengths[rows] * lengths[cols])
        return 1j * self.k * self.eta * np.conj(kform)

    def entries(self, rows, cols):
        """Impedance ``Z[rows, cols]`` for paired index arrays."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= self.basis.n):
            raise IndexError("basis index out of range")
        needed = np.concatenate([self._pair_keys(t, s) for t, _, s, _, _ in self._combos(rows, cols)])
        return self._gather(self._block_table(needed), rows, cols)

    def dense(self, cap=DEFAULT_DENSE_CAP, row_chunk=256):
        n = self.basis.n
        if n > cap:
            raise AssemblyError(f"dense assembly of N={n} exceeds the cap of {cap}")
        f = self.n_triangles
        lo, hi = np.triu_indices(f)
        table = self._block_table(lo * f + hi)
        z = np.empty((n, n), dtype=complex)
        cols = np.arange(n)
        for start in range(0, n, row_chunk):
            rows = np.arange(start, min(start + row_chunk, n))
            rr, cc = np.repeat(rows, n), np.tile(cols, len(rows))
            z[rows] = self._gather(table, rr, cc).reshape(len(rows), n)
        return z

    def near(self, rows, cols):
        """Sparse matrix holding ``Z`` on the given (row, col) pattern."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = self.entries(rows, cols)
        n = self.basis.n
        m = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        m.sort_indices()
        return m


@dataclass(eq=False)
class NearBlock:
    """Sparse ``Z`` restricted to basis pairs in mutually near finest boxes."""

    matrix: sp.csr_matrix
    rows: np.ndarray
    cols: np.ndarray

    @property
    def density(self):
        n = self.matrix.shape[0]
        return self.matrix.nnz / float(n * n)


def assemble_near(basis, tree, k, quadrature=None, mode="standard", eta=ETA0):
    """Near block over the octree's near-pair set for ``mode``."""
    if tree.basis_box.shape != (basis.n,):
        raise AssemblyError("octree was not built over this basis")
    rows, cols = tree.near_basis_pairs(mode)
    m = EfieAssembler(basis, k, quadrature, eta).near(rows, cols)
    return NearBlock(m, rows, cols)


def galerkin_entry(basis, i, j, k, quadrature=None):
    """Single impedance entry ``Z_ij`` in ohms at wavenumber ``k``."""
    return complex(EfieAssembler(basis, k, quadrature).entries([i], [j])[0])


def assemble_dense(basis, k, quadrature=None, cap=DEFAULT_DENSE_CAP):
    """Full impedance matrix; ``R = Z.real`` and ``X = Z.imag``."""
    if basis.n > cap:
        raise AssemblyError(f"dense assembly of N={basis.n} exceeds the cap of {cap}")
    return EfieAssembler(basis, k, quadrature).dense(cap=cap)


# ----------------------------------------------------------------------
# binary dump/load
#
# Little-endian layout:
#   magic   4s   b"FCMZ"
#   version u4   2
#   kind    u4   0 = dense, 1 = sparse CSR
#   n       u8
#   k       f8
#   regular u4, singular u4 (quadrature point counts)
#   extraction_radius f8
#   singular_levels u4
#   dense : n*n complex128 row-major
#   sparse: nnz u8, indptr (n+1) i8, indices nnz i8, data nnz complex128
_MAGIC = b"FCMZ"
_HEADER = struct.Struct("<4sIIQdIIdI")
_VERSION = 2


def dump_matrix(path, matrix, k, quadrature=None):
    q = quadrature or QuadratureConfig()
    sparse = sp.issparse(matrix)
    n = matrix.shape[0]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, int(sparse), n, float(k), q.regular, q.singular,
                              q.extraction_radius, q.singular_levels))
        if sparse:
            m = sp.csr_matrix(matrix)
            fh.write(struct.pack("<Q", m.nnz))
            fh.write(m.indptr.astype("<i8").tobytes())
            fh.write(m.indices.astype("<i8").tobytes())
            fh.write(m.data.astype("<c16").tobytes())
        else:
            fh.write(np.ascontiguousarray(matrix, dtype="<c16").tobytes())


def load_matrix(path):
    """Returns ``(matrix, k, QuadratureConfig)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, kind, n, k, reg, sing, radius, levels = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path} is not a matrix dump")
    off = _HEADER.size
    quad = QuadratureConfig(reg, sing, radius, levels)
    if kind == 0:
        z = np.frombuffer(raw, dtype="<c16", count=n * n, offset=off).reshape(n, n).copy()
        return z, k, quad
    (nnz,) = struct.unpack_from("<Q", raw, off)
    off += 8
    indptr = np.frombuffer(raw, dtype="<i8", count=n + 1, offset=off)
    off += 8 * (n + 1)
    indices = np.frombuffer(raw, dtype="<i8", count=nnz, offset=off)
    off += 8 * nnz
    data = np.frombuffer(raw, dtype="<c16", count=nnz, offset=off)
    return sp.csr_matrix((data.copy(), indices.copy(), indptr.copy()), shape=(n, n)), k, quad
