"""Plane-wave translators for the full, cos and sin kernels.

All three share the form::

    alpha(k_hat) = sum_{l=0}^{L} i^l (2l+1) c_l(k r) P_l(k_hat . r_hat)

with ``c_l = h_l`` (full kernel ``exp(ikR)/R``), ``i y_l`` (``cos(kR)/R``)
or ``-i j_l`` (``sin(kR)/R``), so that ``alpha_full = alpha_cos + i alpha_sin``.
The kernel is recovered as ``(ik / 4pi) * integral exp(ik k_hat . d) alpha``
over the unit sphere, with ``d = r_im + r_m'j`` and ``r = r_mm'``.
"""

import math
from dataclasses import dataclass

import numpy as np

from fastcm.special import legendre_all, spherical_jn_all, spherical_yn_all

KERNELS = ("helmholtz", "cos", "sin")


def truncation_number(a, d0=3):
    """Series length for a box of edge ``a`` wavelengths and ``d0`` digits."""
    if a <= 0:
        raise ValueError("box size must be positive")
    if d0 < 1:
        raise ValueError("digits of accuracy must be at least 1")
    kd = 2 * math.pi * math.sqrt(3) * a
    return math.ceil(kd + 1.8 * d0 ** (2 / 3) * kd ** (1 / 3))


def _radial(kernel, L, x):
    if kernel == "sin":
        return -1j * spherical_jn_all(L, x)
    if kernel == "cos":
        return 1j * spherical_yn_all(L, x)
    if kernel == "helmholtz":
        return spherical_jn_all(L, x) + 1j * spherical_yn_all(L, x)
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def translator_batch(kernel, L, k, offsets, directions):
    """Translators for many offset vectors.

    Parameters
    ----------
    offsets : ndarray (n, 3)
        ``r_mm'`` vectors in meters, all nonzero.
    directions : ndarray (Q, 3)
        Unit sample directions.

    Returns
    -------
    ndarray (n, Q) complex
    """
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    dist = np.linalg.norm(offsets, axis=1)
    if np.any(dist == 0):
        raise ValueError("translator offset must be nonzero")
    c = _radial(kernel, L, k * dist)  # (L+1, n)
    ell = np.arange(L + 1)
    coef = (1j ** ell)[:, None] * (2 * ell + 1)[:, None] * c
    cosg = (offsets / dist[:, None]) @ np.asarray(directions).T  # (n, Q)
    np.clip(cosg, -1.0, 1.0, out=cosg)
    p = legendre_all(L, cosg)  # (L+1, n, Q)
    return np.einsum("ln,lnq->nq", coef, p)


def translator(kernel, L, k, offset, directions):
    """Sampled translator for a single offset ``r_mm'``."""
    dirs = getattr(directions, "directions", directions)
    return translator_batch(kernel, L, k, np.asarray(offset)[None, :], dirs)[0]


@dataclass(eq=False)
class TranslatorTable:
    """Translators of one level for every integer box offset in use."""

    level: int
    kernel: str
    L: int
    offsets: np.ndarray  # (n, 3) int, unique
    alphas: np.ndarray  # (n, Q)

    def index(self, offsets):
        keys = _offset_keys(self.offsets)
        q = _offset_keys(np.atleast_2d(offsets))
        pos = np.searchsorted(keys, q)
        if np.any(pos >= len(keys)) or np.any(keys[np.minimum(pos, len(keys) - 1)] != q):
            raise KeyError("offset not present in translator table")
        return pos


def _offset_keys(offsets):
    o = np.asarray(offsets, dtype=np.int64) + 64
    return (o[:, 0] * 128 + o[:, 1]) * 128 + o[:, 2]


def build_translator_table(kernel, level, L, k, box_size, int_offsets, quad):
    """Table over the unique integer offsets of one interaction list."""
    int_offsets = np.asarray(int_offsets, dtype=np.int64).reshape(-1, 3)
    uniq = np.unique(int_offsets, axis=0)
    keys = _offset_keys(uniq)
    order = np.argsort(keys)
    uniq = uniq[order]
    if len(uniq):
        alphas = translator_batch(kernel, L, k, uniq * box_size, quad.directions)
    else:
        alphas = np.empty((0, quad.size), dtype=complex)
    return TranslatorTable(level, kernel, L, uniq, alphas)
