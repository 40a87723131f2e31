"""Far-field signatures of RWG functions on the finest-level direction grid.

Convention::

    radiation  V_s,j(k_hat) = (I - k_hat k_hat) . int f_j(r) exp(ik k_hat . (c - r)) dS
    receiving  V_f,i(k_hat) = (I - k_hat k_hat) . int f_i(r) exp(ik k_hat . (r - c)) dS
                            = conj(V_s,i(k_hat))

where ``c`` is the center of the basis's finest box. With these, a far
pair of the kernel form is ``(ik/4pi) sum_q w_q alpha_q V_f,i . V_s,j``.
"""

from dataclasses import dataclass

import numpy as np

from fastcm.quadrature import triangle_rule


@dataclass(eq=False)
class FarFieldSignature:
    """Per-basis radiation patterns, shape (N, Q, 3), about ``centers``."""

    k: float
    directions: np.ndarray
    centers: np.ndarray
    radiation: np.ndarray

    @property
    def receiving(self):
        return np.conj(self.radiation)

    def shifted(self, d):
        """Radiation patterns about centers moved by ``d`` (meters)."""
        phase = np.exp(1j * self.k * (self.directions @ np.asarray(d, dtype=float)))
        return FarFieldSignature(self.k, self.directions, self.centers + d, self.radiation * phase[None, :, None])


def radiation_patterns(basis, k, directions, centers, rule=7, chunk_elems=4_000_000):
    """Transverse radiation integrals for every basis about its own center."""
    mesh = basis.mesh
    v = mesh.vertices
    bary, w = triangle_rule(rule)
    dirs = np.asarray(directions, dtype=float)
    nq = len(dirs)
    n = basis.n
    out = np.zeros((n, nq, 3), dtype=complex)
    step = max(1, chunk_elems // (len(w) * nq))
    for start in range(0, n, step):
        idx = np.arange(start, min(start + step, n))
        acc = np.zeros((len(idx), nq, 3), dtype=complex)
        for tri, free, sign in (
            (basis.tri_plus[idx], basis.free_plus[idx], 1.0),
            (basis.tri_minus[idx], basis.free_minus[idx], -1.0),
        ):
            pts = np.einsum("pa,bad->bpd", bary, v[mesh.triangles[tri]])  # (b, p, 3)
            # area * f = sign * l / 2 * (r - v_free)
            fa = sign * 0.5 * basis.lengths[idx, None, None] * (pts - v[free][:, None, :])
            phase = np.exp(1j * k * np.einsum("bpd,qd->bpq", centers[idx][:, None, :] - pts, dirs))
            acc += np.einsum("p,bpd,bpq->bqd", w, fa, phase)
        radial = np.einsum("bqd,qd->bq", acc, dirs)
        out[idx] = acc - radial[:, :, None] * dirs[None, :, :]
    return out


def compute_signatures(basis, tree, quad, k, rule=7):
    """Signatures about each basis's finest-box center on ``quad``."""
    centers = tree.finest_level.centers[tree.basis_box]
    rad = radiation_patterns(basis, k, quad.directions, centers, rule=rule)
    return FarFieldSignature(float(k), quad.directions, centers, rad)
