"""Multilevel far-field engine and Z/R/X operator handles.

``MlfmaEngine`` applies the far part of one kernel form::

    far(u)_i = sum_{j far from i} K_ij u_j,   K = <f_i, (I - grad grad'/k^2) g, f_j>

for ``g`` in {exp(ikR)/R, cos(kR)/R, sin(kR)/R}. Operator handles add the
near block and the impedance scaling::

    Z u = Z_near u + i k eta conj(K_far conj(u))
    R u = Re(Z_near) u + k eta S_far u
    X u = Im(Z_near) u + k eta C_far u
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from fastcm.assembly import QuadratureConfig, assemble_near
from fastcm.constants import ETA0
from fastcm.fmm.signatures import compute_signatures
from fastcm.fmm.sphere import anterpolation_operator, interpolation_operator, sphere_quadrature
from fastcm.fmm.translators import KERNELS, build_translator_table, truncation_number
from fastcm.octree import COARSEST, MODES, build_octree, interaction_lists

KINDS = ("Z", "R", "X")
LOW_FREQUENCY_BOX = 0.4


class LowFrequencyWarning(UserWarning):
    """The cos-kernel expansion loses accuracy on boxes below ~0.4 wavelengths."""


@dataclass(eq=False)
class _LevelData:
    level: int
    quad: object
    n_boxes: int
    table: object = None
    targets: np.ndarray = None  # translated pairs, sorted by target
    sources: np.ndarray = None
    operator: sp.csr_matrix = None  # translation over (direction, box) rows
    up_shift: sp.csr_matrix = None  # child signatures -> parent box sums, parent grid
    down_shift: sp.csr_matrix = None  # adjoint, parent -> child
    interp: np.ndarray = None  # this level's grid -> parent grid
    anterp: np.ndarray = None  # parent grid -> this level's grid


def _translation_operator(data, il):
    """Sparse matrix with entry alpha_q(offset) at ((q, t), (q, s))."""
    q = data.quad.size
    size = data.n_boxes * q
    if not len(il):
        return sp.csr_matrix((size, size), dtype=complex)
    pos = data.table.index(il.offsets)
    qs = np.arange(q)
    nb = data.n_boxes
    rows = (il.targets[:, None] + qs * nb).ravel()
    cols = (il.sources[:, None] + qs * nb).ravel()
    vals = data.table.alphas[pos].ravel()
    m = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    m.sum_duplicates()
    return m


def _shift_operator(phase, parent, n_parents):
    """Sparse phase shift and child-to-parent sum on the parent grid.

    Entry ``phase[q, c]`` sits at row ``q * n_parents + parent[c]`` and
    column ``q * n_children + c``.
    """
    q, nc = phase.shape
    qs = np.arange(q)[:, None]
    rows = (qs * n_parents + parent[None, :]).ravel()
    cols = (qs * nc + np.arange(nc)[None, :]).ravel()
    return sp.csr_matrix((phase.ravel(), (rows, cols)), shape=(q * n_parents, q * nc))


def _receive_operator(radiation, basis_box, n_boxes):
    """Sparse map from finest-level incoming fields to tested values.

    Row ``j`` holds ``conj(V_j(q, d))`` at column ``(q * n_boxes + box_j) * 3 + d``,
    matching the (Q, n_boxes, 3) signature layout. Its conjugate transpose
    radiates basis weights into outgoing box signatures.
    """
    n, q, _ = radiation.shape
    qd = np.arange(3 * q)
    cols = (qd // 3)[None, :] * (3 * n_boxes) + 3 * basis_box[:, None] + (qd % 3)[None, :]
    ptr = np.arange(0, 3 * q * n + 1, 3 * q)
    return sp.csr_matrix((np.conj(radiation).reshape(-1), cols.reshape(-1), ptr), shape=(n, 3 * q * n_boxes))


class MlfmaEngine:
    """Far interactions of one kernel over an octree.

    Parameters
    ----------
    basis : RwgBasis
    k : float
    tree : Octree
    kernel : {"helmholtz", "cos", "sin"}
    mode : interaction-list mode; non-standard modes need the sin kernel.
    d0 : int
        Digits of accuracy for the truncation number.
    interpolation : {"spectral", "lagrange"}
    order : int
        Lagrange stencil size per direction.
    """

    def __init__(self, basis, k, tree, kernel="helmholtz", mode="standard", d0=3,
                 interpolation="spectral", order=4, rule=7):
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
        if mode not in MODES:
            raise ValueError(f"unknown interaction-list mode {mode!r}; expected one of {MODES}")
        if mode != "standard" and kernel != "sin":
            raise ValueError(
                f"{kernel} kernel cannot use {mode!r} lists: near-box translation "
                "violates its addition theorem; only the sin kernel allows it"
            )
        self.basis = basis
        self.k = float(k)
        self.tree = tree
        self.kernel = kernel
        self.mode = mode
        self.d0 = d0
        self.interpolation = interpolation
        self.order = order
        self.n = basis.n
        self.active = not tree.dense_fallback
        if kernel == "cos" and self.active:
            box = tree.box_size_wavelengths(tree.finest)
            if box < LOW_FREQUENCY_BOX:
                warnings.warn(
                    f"finest box is {box:.3f} wavelengths; the cos(kR)/R plane-wave "
                    f"expansion degrades below {LOW_FREQUENCY_BOX} wavelengths",
                    LowFrequencyWarning,
                    stacklevel=2,
                )
        if not self.active:
            return
        self.coarsest = COARSEST[mode]
        self.levels = {}
        lists = interaction_lists(tree, mode)
        for lvl in range(self.coarsest, tree.finest + 1):
            L = truncation_number(tree.box_size_wavelengths(lvl), d0)
            data = _LevelData(lvl, sphere_quadrature(L), tree.levels[lvl].n_boxes)
            il = lists[lvl]
            data.table = build_translator_table(kernel, lvl, L, self.k, tree.box_size(lvl), il.offsets, data.quad)
            data.targets, data.sources = il.targets, il.sources
            data.operator = _translation_operator(data, il)
            self.levels[lvl] = data
        for lvl in range(self.coarsest + 1, tree.finest + 1):
            child, parent = self.levels[lvl], self.levels[lvl - 1]
            lv = tree.levels[lvl]
            shift = tree.levels[lvl - 1].centers[lv.parent] - lv.centers  # r_P - r_c
            phase = np.exp(1j * self.k * (parent.quad.directions @ shift.T))  # (Q_parent, n_boxes)
            child.up_shift = _shift_operator(phase, lv.parent, parent.n_boxes)
            child.down_shift = child.up_shift.conj().T.tocsr()
            child.interp = interpolation_operator(child.quad, parent.quad, interpolation, order)
            child.anterp = anterpolation_operator(child.quad, parent.quad, interpolation, order)
        fine = self.levels[tree.finest]
        sig = compute_signatures(basis, tree, fine.quad, self.k, rule=rule)
        self.signature = sig
        self._receive = _receive_operator(sig.radiation, tree.basis_box, fine.n_boxes)
        self._radiate = self._receive.conj().T.tocsr()

    # ------------------------------------------------------------------
    @staticmethod
    def _mat(mat, x):
        # complex data viewed as interleaved reals: one real operator application
        q, *rest = x.shape
        flat = np.ascontiguousarray(x, dtype=complex).reshape(q, -1).view(float)
        out = (mat @ flat).view(complex)
        return out.reshape((mat.shape[0],) + tuple(rest))

    def aggregate(self, u):
        """Outgoing box signatures per level, each (Q_l, n_boxes_l, 3)."""
        tree = self.tree
        fine = self.levels[tree.finest]
        out = {tree.finest: (self._radiate @ u).reshape(fine.quad.size, fine.n_boxes, 3)}
        for lvl in range(tree.finest, self.coarsest, -1):
            data = self.levels[lvl]
            moved = self._mat(data.interp, out[lvl])
            parent = self.levels[lvl - 1]
            out[lvl - 1] = (data.up_shift @ moved.reshape(-1, 3)).reshape(parent.quad.size, parent.n_boxes, 3)
        return out

    def translate(self, outgoing):
        incoming = {}
        for lvl, data in self.levels.items():
            src = outgoing[lvl]
            incoming[lvl] = (data.operator @ src.reshape(-1, 3)).reshape(src.shape)
        return incoming

    def disaggregate(self, incoming):
        tree = self.tree
        for lvl in range(self.coarsest + 1, tree.finest + 1):
            data = self.levels[lvl]
            moved = data.down_shift @ incoming[lvl - 1].reshape(-1, 3)
            incoming[lvl] += self._mat(data.anterp, moved.reshape(-1, data.n_boxes, 3))
        return incoming[tree.finest]

    def apply(self, u):
        """Far part of the kernel form applied to ``u`` (complex, length N)."""
        u = np.asarray(u, dtype=complex)
        if u.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {u.shape}")
        if not self.active:
            return np.zeros(self.n, dtype=complex)
        fine_in = self.disaggregate(self.translate(self.aggregate(u)))
        w = self.levels[self.tree.finest].quad.weights
        fine_in *= w[:, None, None]
        return 1j * self.k / (4 * math.pi) * (self._receive @ fine_in.ravel())

    def stats(self):
        if not self.active:
            return {"kernel": self.kernel, "mode": self.mode, "levels": []}
        return {
            "kernel": self.kernel,
            "mode": self.mode,
            "d0": self.d0,
            "levels": [
                {
                    "level": lvl,
                    "L": d.quad.L,
                    "samples": d.quad.size,
                    "boxes": d.n_boxes,
                    "offsets": len(d.table.offsets),
                    "pairs": int(len(d.targets)),
                }
                for lvl, d in sorted(self.levels.items())
            ],
        }


# ----------------------------------------------------------------------
# operator handles


class OperatorHandle:
    """Matvec-capable Z, R or X.

    ``near`` holds the sparse near block actually used by the matvec (the
    real or imaginary part of ``Z_near`` for R and X); it is ``None`` for
    dense handles, which carry ``matrix`` instead.
    """

    def __init__(self, kind, n, apply, backend, near=None, matrix=None, engine=None):
        if kind not in KINDS:
            raise ValueError(f"unknown operator {kind!r}; expected one of {KINDS}")
        self.kind = kind
        self.n = n
        self.shape = (n, n)
        self.backend = backend
        self.near = near
        self.matrix = matrix
        self.engine = engine
        self._apply = apply
        self.n_matvecs = 0
        self.matvec_seconds = 0.0

    def matvec(self, u):
        t0 = time.perf_counter()
        out = self._apply(np.asarray(u))
        self.matvec_seconds += time.perf_counter() - t0
        self.n_matvecs += 1
        return out

    __call__ = matvec

    def linear_operator(self):
        return LinearOperator(self.shape, matvec=self.matvec, dtype=complex)


def dense_operators(z):
    """Z, R, X handles backed by a dense impedance matrix."""
    z = np.asarray(z)
    n = z.shape[0]
    r, x = np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag)
    return {
        "Z": OperatorHandle("Z", n, lambda u: z @ u, "dense", matrix=z),
        "R": OperatorHandle("R", n, lambda u: r @ u, "dense", matrix=r),
        "X": OperatorHandle("X", n, lambda u: x @ u, "dense", matrix=x),
    }


class MlfmaSystem:
    """Near block plus lazily built far engines for one mesh and frequency.

    Parameters
    ----------
    basis : RwgBasis
    k : float
    d0 : int
    target_box : float
        Finest box edge in wavelengths.
    r_mode : str
        Interaction-list mode for the R operator (sin kernel).
    """

    def __init__(self, basis, k, d0=3, target_box=0.25, r_mode="all_translate",
                 interpolation="spectral", order=4, quadrature=None, eta=ETA0, tree=None):
        self.basis = basis
        self.k = float(k)
        self.eta = float(eta)
        self.d0 = d0
        self.r_mode = r_mode
        self.interpolation = interpolation
        self.order = order
        self.quadrature = quadrature or QuadratureConfig()
        self.tree = tree if tree is not None else build_octree(basis, k, target_box)
        t0 = time.perf_counter()
        self.near_block = assemble_near(basis, self.tree, self.k, self.quadrature, eta=eta)
        self.setup_seconds = {"near": time.perf_counter() - t0}
        self._engines = {}
        self._ops = {}

    @property
    def z_near(self):
        return self.near_block.matrix

    def engine(self, kernel, mode="standard"):
        key = (kernel, mode)
        if key not in self._engines:
            t0 = time.perf_counter()
            self._engines[key] = MlfmaEngine(
                self.basis, self.k, self.tree, kernel, mode, self.d0,
                self.interpolation, self.order, rule=self.quadrature.regular,
            )
            self.setup_seconds[f"{kernel}/{mode}"] = time.perf_counter() - t0
        return self._engines[key]

    def _near_for(self, mode):
        z = self.z_near
        if mode == "standard" or self.tree.dense_fallback:
            return z
        coo = z.tocoo()
        box = self.tree.basis_box
        keep = box[coo.row] == box[coo.col]
        m = sp.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=z.shape)
        m.sort_indices()
        return m

    def operator(self, kind, mode=None):
        """Handle for ``kind`` in {Z, R, X}; ``mode`` overrides the list mode."""
        if kind not in KINDS:
            raise ValueError(f"unknown operator {kind!r}; expected one of {KINDS}")
        if mode is None:
            mode = self.r_mode if kind == "R" else "standard"
        key = (kind, mode)
        if key in self._ops:
            return self._ops[key]
        scale = self.k * self.eta
        if kind == "Z":
            eng = self.engine("helmholtz", mode)
            near = self._near_for(mode)

            def apply(u):
                return near @ u + 1j * scale * np.conj(eng.apply(np.conj(u)))

        elif kind == "R":
            eng = self.engine("sin", mode)
            near = self._near_for(mode).real.tocsr()

            def apply(u):
                return near @ u + scale * eng.apply(u)

        else:
            eng = self.engine("cos", mode)
            near = self._near_for(mode).imag.tocsr()

            def apply(u):
                return near @ u + scale * eng.apply(u)

        op = OperatorHandle(kind, self.basis.n, apply, "mlfma", near=near, engine=eng)
        self._ops[key] = op
        return op

    def stats(self):
        return {
            "unknowns": self.basis.n,
            "levels": self.tree.n_levels,
            "finest_box_wavelengths": self.tree.box_size_wavelengths(self.tree.finest),
            "dense_fallback": self.tree.dense_fallback,
            "near_nnz": int(self.z_near.nnz),
            "near_density": self.z_near.nnz / float(self.basis.n) ** 2,
            "engines": [e.stats() for e in self._engines.values()],
            "setup_seconds": dict(self.setup_seconds),
        }

