"""Closed-form static potential integrals over flat triangles.

For an observation point ``r`` and a source triangle ``S``::

    I0(r) = int_S 1 / |r - r'| dS'
    I1(r) = int_S r' / |r - r'| dS'

evaluated with the edge-sum formulas of Wilton et al. and Graglia. All
functions are vectorized over a leading batch axis.
"""

import numpy as np


def _log_ratio(r_plus, l_plus, r_minus, l_minus):
    # ln((R+ + l+) / (R- + l-)); the conjugate form avoids 0/0 when the
    # projected point sits on the edge line beyond the l- end.
    direct_ok = (r_minus + l_minus) > 1e-12 * np.maximum(r_minus, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.log((r_plus + l_plus) / (r_minus + l_minus))
        flipped = np.log((r_minus - l_minus) / (r_plus - l_plus))
    out = np.where(direct_ok, direct, flipped)
    return np.where(np.isfinite(out), out, 0.0)


def triangle_potentials(points, tri_vertices):
    """Static potentials of a batch of triangles.

    Parameters
    ----------
    points : ndarray, shape (..., 3)
        Observation points.
    tri_vertices : ndarray, shape (..., 3, 3)
        Source triangle corners, broadcast against ``points``.

    Returns
    -------
    I0 : ndarray, shape (...)
    I1 : ndarray, shape (..., 3)
    """
    r = np.asarray(points, dtype=float)
    tv = np.asarray(tri_vertices, dtype=float)
    v0, v1, v2 = tv[..., 0, :], tv[..., 1, :], tv[..., 2, :]
    nrm = np.cross(v1 - v0, v2 - v0)
    nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
    h = np.sum((r - v0) * nrm, axis=-1)
    rho = r - h[..., None] * nrm
    abs_h = np.abs(h)

    i0 = np.zeros(np.broadcast_shapes(h.shape))
    i_rho = np.zeros(i0.shape + (3,))
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        edge = b - a
        length = np.linalg.norm(edge, axis=-1, keepdims=True)
        l_hat = edge / length
        u_hat = np.cross(l_hat, nrm)  # outward in-plane edge normal
        l_plus = np.sum((b - rho) * l_hat, axis=-1)
        l_minus = np.sum((a - rho) * l_hat, axis=-1)
        p0 = np.sum((b - rho) * u_hat, axis=-1)
        r0_sq = p0**2 + h**2
        r_plus = np.linalg.norm(r - b, axis=-1)
        r_minus = np.linalg.norm(r - a, axis=-1)
        log_term = _log_ratio(r_plus, l_plus, r_minus, l_minus)

        with np.errstate(divide="ignore", invalid="ignore"):
            at_plus = np.arctan(p0 * l_plus / (r0_sq + abs_h * r_plus))
            at_minus = np.arctan(p0 * l_minus / (r0_sq + abs_h * r_minus))
        at = np.where(p0 == 0, 0.0, at_plus - at_minus)
        i0 = i0 + p0 * log_term - abs_h * at
        i_rho = i_rho + 0.5 * u_hat * (r0_sq * log_term + l_plus * r_plus - l_minus * r_minus)[..., None]

    i1 = rho * i0[..., None] + i_rho
    return i0, i1
