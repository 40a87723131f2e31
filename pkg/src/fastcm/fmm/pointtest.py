"""Single-pair check of the plane-wave decompositions.

The source sits in a box of edge ``a`` whose center is ``(a/2, a/2, a/2)``;
the observation box is a neighbor along x. Case 1 places the observer one
box further out, so the one-buffer condition holds; Case 2 puts observer
and source nearly on top of each other across the shared face, which
violates ``|d| < |r|``.
"""

import csv
import math

import numpy as np

from fastcm.fmm.sphere import sphere_quadrature
from fastcm.fmm.translators import KERNELS, translator, truncation_number

CASES = ("case1", "case2")


def point_geometry(case, a):
    """(observer, observer center, source, source center) in meters."""
    src = np.array([0.9999, 1.0, 0.0]) * a
    src_c = np.array([0.5, 0.5, 0.5]) * a
    if case == "case1":
        obs = np.array([2.9999, 0.0, 1.0]) * a
        obs_c = np.array([2.5, 0.5, 0.5]) * a
    elif case == "case2":
        obs = np.array([1.0001, 0.0, 0.0]) * a
        obs_c = np.array([1.5, 0.5, 0.5]) * a
    else:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    return obs, obs_c, src, src_c


def exact_kernel(kernel, k, r):
    if kernel == "helmholtz":
        return np.exp(1j * k * r) / r
    if kernel == "cos":
        return math.cos(k * r) / r
    if kernel == "sin":
        return math.sin(k * r) / r
    raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def point_decomposition_error(kernel, case, a_over_lambda, d0=3):
    """Relative error of the plane-wave expansion at the test points.

    Wavelength is fixed at 1 m; the truncation number follows from the box
    edge ``a`` and ``d0``.
    """
    if a_over_lambda <= 0:
        raise ValueError("a_over_lambda must be positive")
    k = 2 * math.pi
    a = float(a_over_lambda)
    obs, obs_c, src, src_c = point_geometry(case, a)
    L = truncation_number(a, d0)
    quad = sphere_quadrature(L)
    alpha = translator(kernel, L, k, obs_c - src_c, quad)
    d = (obs - obs_c) + (src_c - src)
    rhs = 1j * k / (4 * math.pi) * np.sum(quad.weights * np.exp(1j * k * quad.directions @ d) * alpha)
    lhs = exact_kernel(kernel, k, float(np.linalg.norm(obs - src)))
    return float(abs(lhs - rhs) / abs(lhs))


def default_sizes(start=0.1, stop=4.0, count=40):
    return np.linspace(start, stop, count)


def point_test_rows(sizes, kernels=KERNELS, cases=CASES, d0=3):
    rows = []
    for a in sizes:
        for kernel in kernels:
            for case in cases:
                rows.append((float(a), kernel, case, point_decomposition_error(kernel, case, a, d0)))
    return rows


def write_point_test_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a_over_lambda", "kernel", "case", "relative_error"])
        for a, kernel, case, err in rows:
            w.writerow([repr(a), kernel, case, f"{err:.6e}"])
