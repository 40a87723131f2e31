"""Direction-space quadrature on the unit sphere and inter-level interpolation.

Samples are ordered theta-major: sample ``q = i * M + j`` sits at
``(theta_i, phi_j)`` with Gauss-Legendre nodes in ``cos(theta)`` (ascending
theta) and ``M = 2L + 2`` uniform azimuths starting at zero.

Interpolators are real linear maps on sample vectors, available as dense
matrices for reference and as fast operators for the engine. Signatures
are stored as Cartesian components, which are smooth scalar functions on the
sphere, so pole handling reduces to the identity ``(-theta, phi) ==
(theta, phi + pi)``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from fastcm.special import normalized_assoc_legendre


class InterpolationError(ValueError):
    """Stencil does not fit on the source grid."""


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    L: int
    theta: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)
    theta_weights: np.ndarray = field(init=False, repr=False)
    directions: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("truncation number must be non-negative")
        x, w = np.polynomial.legendre.leggauss(self.L + 1)
        x, w = x[::-1], w[::-1]
        theta = np.arccos(x)
        m = 2 * self.L + 2
        phi = 2 * np.pi * np.arange(m) / m
        st = np.sin(theta)[:, None]
        dirs = np.stack(
            [
                st * np.cos(phi)[None, :],
                st * np.sin(phi)[None, :],
                np.repeat(x[:, None], m, axis=1),
            ],
            axis=-1,
        ).reshape(-1, 3)
        for name, val in (
            ("theta", theta),
            ("phi", phi),
            ("theta_weights", w),
            ("directions", dirs),
            ("weights", np.repeat(w, m) * (2 * np.pi / m)),
        ):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_theta(self):
        return self.L + 1

    @property
    def n_phi(self):
        return 2 * self.L + 2

    @property
    def size(self):
        return self.n_theta * self.n_phi

    def integrate(self, values):
        """Quadrature over the last axis of ``values``."""
        return np.asarray(values) @ self.weights


@lru_cache(maxsize=64)
def sphere_quadrature(L):
    return SphereQuadrature(L)


def _spectral(src, dst):
    lmin = min(src.L, dst.L)
    xs, xd = np.cos(src.theta), np.cos(dst.theta)
    dphi = dst.phi[:, None] - src.phi[None, :]
    out = np.zeros((dst.size, src.size))
    for m in range(lmin + 1):
        ps = normalized_assoc_legendre(lmin, m, xs)
        pd = normalized_assoc_legendre(lmin, m, xd)
        t = (pd.T @ ps) * src.theta_weights[None, :]
        scale = 1.0 if m == 0 else 2.0
        f = scale * np.cos(m * dphi) / src.n_phi
        out += np.kron(t, f)
    return out


def _lagrange_weights(nodes, x):
    w = np.ones(len(nodes))
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (x - xj) / (xi - xj)
    return w


def _lagrange(src, dst, order):
    nt, nphi = src.n_theta, src.n_phi
    if order > nt or order > nphi:
        raise InterpolationError(
            f"{order}-point stencil exceeds the source grid ({nt} x {nphi}); "
            "use a smaller order or spectral interpolation"
        )
    half = order // 2
    # theta nodes extended across both poles by reflection
    ext_theta = np.concatenate([-src.theta[half - 1 :: -1], src.theta, 2 * np.pi - src.theta[: -half - 1 : -1]])
    ext_index = np.concatenate([np.arange(half - 1, -1, -1), np.arange(nt), np.arange(nt - 1, nt - half - 1, -1)])
    ext_flip = np.concatenate([np.ones(half, bool), np.zeros(nt, bool), np.ones(half, bool)])
    dphi = 2 * np.pi / nphi
    out = np.zeros((dst.size, src.size))
    for it, th in enumerate(dst.theta):
        start = np.searchsorted(ext_theta, th) - half
        start = min(max(start, 0), len(ext_theta) - order)
        sel = np.arange(start, start + order)
        wt = _lagrange_weights(ext_theta[sel], th)
        for ip, ph in enumerate(dst.phi):
            j0 = int(np.floor(ph / dphi)) - half + 1
            cols = np.arange(j0, j0 + order)
            wp = _lagrange_weights(cols * dphi, ph)
            row = it * dst.n_phi + ip
            for a, s in enumerate(sel):
                shift = nphi // 2 if ext_flip[s] else 0
                idx = ext_index[s] * nphi + (cols + shift) % nphi
                np.add.at(out[row], idx, wt[a] * wp)
    return out


@lru_cache(maxsize=64)
def _interp_cached(l_src, l_dst, method, order):
    src, dst = sphere_quadrature(l_src), sphere_quadrature(l_dst)
    if method == "spectral":
        m = _spectral(src, dst)
    elif method == "lagrange":
        m = _lagrange(src, dst, order)
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    m.setflags(write=False)
    return m


def interpolation_matrix(src, dst, method="spectral", order=4):
    """Real matrix mapping samples on ``src`` to samples on ``dst``."""
    return _interp_cached(src.L, dst.L, method, order)


def anterpolation_matrix(src, dst, method="spectral", order=4):
    """Weighted adjoint of ``interpolation_matrix(src, dst)``, mapping dst -> src.

    Satisfies ``<I x, y>_dst = <x, A y>_src`` with the quadrature weights as
    inner-product weights.
    """
    interp = interpolation_matrix(src, dst, method, order)
    return (interp.T * dst.weights[None, :]) / src.weights[:, None]


def interp_signature(sig, src, dst, method="spectral", order=4):
    """Interpolate samples along axis 0 from ``src`` to ``dst``."""
    return _apply(interpolation_matrix(src, dst, method, order), sig)


def anterp_signature(sig, src, dst, method="spectral", order=4):
    """Adjoint of ``interp_signature``: samples on ``dst`` back to ``src``."""
    return _apply(anterpolation_matrix(src, dst, method, order), sig)


class SeparableInterpolator:
    """Spectral interpolation applied in factored form.

    Equivalent to the dense matrix from ``interpolation_matrix(src, dst)``:
    a Fourier analysis in phi, one Legendre projection per azimuthal order in
    theta, then synthesis on the destination azimuths. Each stage is a
    batched GEMM over the trailing column axis, so no transposes are made,
    and the cost per column is O(L^3) instead of O(L^4). With ``adjoint``
    the weighted adjoint (anterpolation, dst -> src) is applied instead.
    """

    def __init__(self, src, dst, adjoint=False):
        lmin = min(src.L, dst.L)
        ms = np.concatenate([np.arange(lmin + 1), np.arange(1, lmin + 1)])
        trig = [np.cos] * (lmin + 1) + [np.sin] * lmin
        analysis = np.stack([f(m * src.phi) for f, m in zip(trig, ms)], axis=1)  # (nphi_src, K)
        scale = np.where(ms == 0, 1.0, 2.0) / src.n_phi
        synthesis = np.stack([f(m * dst.phi) for f, m in zip(trig, ms)], axis=1) * scale[None, :]
        xs, xd = np.cos(src.theta), np.cos(dst.theta)
        per_m = []
        for m in range(lmin + 1):
            ps = normalized_assoc_legendre(lmin, m, xs)
            pd = normalized_assoc_legendre(lmin, m, xd)
            per_m.append((pd.T @ ps) * src.theta_weights[None, :])
        theta = np.stack([per_m[m] for m in ms])  # (K, nt_dst, nt_src)
        if adjoint:
            # weighted transpose; the quadrature weights separate into theta and phi factors
            ratio = (dst.theta_weights[None, :] / dst.n_phi) / (src.theta_weights[:, None] / src.n_phi)
            self._first = synthesis.T  # (K, nphi_dst)
            self._theta = theta.transpose(0, 2, 1) * ratio[None]  # (K, nt_src, nt_dst)
            self._last = analysis  # (nphi_src, K)
            self._grids = (dst, src)
        else:
            self._first = analysis.T
            self._theta = theta
            self._last = synthesis
            self._grids = (src, dst)
        self.shape = (self._grids[1].size, self._grids[0].size)

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        inp, out = self._grids
        c = x[0].size
        x3 = x.reshape(inp.n_theta, inp.n_phi, c)
        a = np.matmul(self._first, x3)  # (nt_in, K, c)
        b = np.matmul(self._theta, a.transpose(1, 0, 2))  # (K, nt_out, c)
        y = np.matmul(self._last, b.transpose(1, 0, 2))  # (nt_out, nphi_out, c)
        return y.reshape((out.size,) + x.shape[1:])


@lru_cache(maxsize=64)
def _operator_cached(l_src, l_dst, method, order, adjoint):
    src, dst = sphere_quadrature(l_src), sphere_quadrature(l_dst)
    if method == "spectral":
        return SeparableInterpolator(src, dst, adjoint)
    mat = anterpolation_matrix(src, dst, method, order) if adjoint else interpolation_matrix(src, dst, method, order)
    return sp.csr_matrix(mat)


def interpolation_operator(src, dst, method="spectral", order=4):
    """Fast form of ``interpolation_matrix``.

    Spectral maps are applied in factored form; Lagrange maps are sparse.
    """
    return _operator_cached(src.L, dst.L, method, order, False)


def anterpolation_operator(src, dst, method="spectral", order=4):
    """Fast form of ``anterpolation_matrix``."""
    return _operator_cached(src.L, dst.L, method, order, True)


def _apply(mat, x):
    x = np.ascontiguousarray(x)
    flat = x.reshape(x.shape[0], -1)
    if np.iscomplexobj(flat):
        out = (mat @ flat.astype(complex, copy=False).view(float)).view(complex)
    else:
        out = mat @ flat
    return out.reshape((mat.shape[0],) + x.shape[1:])
