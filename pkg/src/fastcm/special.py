"""Spherical Bessel/Neumann/Hankel functions and Legendre polynomials.

All routines return every order ``0..lmax`` at once, stacked along a new
leading axis, because translators need the full sequence.
"""

import math

import numpy as np


class SpecialFunctionOverflow(FloatingPointError):
    """Raised when y_l or h_l overflows for small arguments and large orders."""


def spherical_jn_all(lmax, x):
    """j_0..j_lmax by Miller's downward recurrence, normalized to j_0 or j_1.

    Returns an array of shape ``(lmax + 1,) + x.shape``.
    """
    x = np.asarray(x, dtype=float)
    top = max(lmax, 1)
    out = np.zeros((top + 1,) + x.shape)
    zero = x == 0
    xs = np.where(zero, 1.0, np.abs(x))
    xmax = float(xs.max()) if xs.size else 0.0
    # the start must clear both lmax and x by enough for j_l to dominate y_l
    start = int(max(top, xmax) + 20 + 6 * (max(top, xmax) + 1) ** (1 / 3)) + int(math.sqrt(40 * (top + 1)))

    f_next = np.zeros_like(xs)
    f = np.full_like(xs, 1e-30)
    for n in range(start, 0, -1):
        f_next, f = f, (2 * n + 1) / xs * f - f_next
        if n - 1 <= top:
            out[n - 1] = f
        big = np.abs(f) > 1e250
        if big.any():
            scale = np.where(big, 1e-250, 1.0)
            f, f_next = f * scale, f_next * scale
            out *= scale
    j0 = np.sin(xs) / xs
    j1 = np.sin(xs) / xs**2 - np.cos(xs) / xs
    # normalize against whichever closed form is better conditioned
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.where(np.abs(j0) >= np.abs(j1), j0 / out[0], j1 / out[1])
    out = out * norm
    if zero.any():
        out[:, zero] = 0.0
        out[0, zero] = 1.0
    return out[: lmax + 1]


def spherical_yn_all(lmax, x):
    """y_0..y_lmax by upward recurrence (stable for the Neumann sequence)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("spherical Neumann functions need x > 0")
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = -np.cos(x) / x
    if lmax >= 1:
        out[1] = -np.cos(x) / x**2 - np.sin(x) / x
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, lmax):
            out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
    if not np.all(np.isfinite(out)):
        raise SpecialFunctionOverflow(
            f"y_l overflowed for lmax={lmax} at min argument {x.min():.3g}; "
            "translator is outside its low-frequency validity range"
        )
    return out


def spherical_h1_all(lmax, x):
    """Spherical Hankel functions of the first kind, h_l = j_l + i y_l."""
    return spherical_jn_all(lmax, x) + 1j * spherical_yn_all(lmax, x)


def legendre_all(lmax, x):
    """P_0..P_lmax by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = x
    for n in range(1, lmax):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def normalized_assoc_legendre(lmax, m, x):
    """Orthonormal associated Legendre functions for a fixed order ``m``.

    Returns rows ``n = m..lmax`` of P-bar_n^m(x), normalized so that
    ``int_{-1}^{1} Pbar_n^m Pbar_n'^m dx = delta_nn'``. The Condon-Shortley
    phase is omitted.
    """
    x = np.asarray(x, dtype=float)
    if m > lmax:
        return np.empty((0,) + x.shape)
    s = np.sqrt(np.clip(1 - x * x, 0, None))
    p = np.full(x.shape, math.sqrt(0.5))
    for i in range(1, m + 1):
        p = p * math.sqrt((2 * i + 1) / (2 * i)) * s
    out = np.empty((lmax - m + 1,) + x.shape)
    out[0] = p
    if lmax > m:
        out[1] = math.sqrt(2 * m + 3) * x * p
    for n in range(m + 2, lmax + 1):
        a = math.sqrt((4 * n * n - 1) / (n * n - m * m))
        b = math.sqrt(((n - 1) ** 2 - m * m) / (4 * (n - 1) ** 2 - 1))
        out[n - m] = a * (x * out[n - m - 1] - b * out[n - m - 2])
    return out
