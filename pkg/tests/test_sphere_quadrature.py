import numpy as np
import pytest
import scipy.special as ss
from hypothesis import given, settings
from hypothesis import strategies as st

from fastcm.fmm.sphere import (
    InterpolationError,
    SeparableInterpolator,
    anterp_signature,
    anterpolation_matrix,
    anterpolation_operator,
    interp_signature,
    interpolation_matrix,
    interpolation_operator,
    sphere_quadrature,
)


def _angles(q):
    d = q.directions
    return np.arccos(np.clip(d[:, 2], -1, 1)), np.arctan2(d[:, 1], d[:, 0])


def _harmonic_mix(q, degree, seed=0):
    """Random real combination of spherical harmonics up to ``degree``."""
    rng = np.random.default_rng(seed)
    theta, phi = _angles(q)
    out = np.zeros(q.size)
    for l in range(degree + 1):
        for m in range(-l, l + 1):
            y = ss.sph_harm_y(l, m, theta, phi)
            out += rng.normal() * y.real + rng.normal() * y.imag
    return out


@pytest.mark.parametrize("L", [0, 1, 5, 13, 20])
def test_weights_and_sizes(L):
    q = sphere_quadrature(L)
    assert q.size == (L + 1) * (2 * L + 2)
    assert q.weights.sum() == pytest.approx(4 * np.pi, rel=1e-13)
    assert np.allclose(np.linalg.norm(q.directions, axis=1), 1.0)


def test_quadrature_orthonormality():
    L = 8
    q = sphere_quadrature(L)
    theta, phi = _angles(q)
    ys = [ss.sph_harm_y(l, m, theta, phi) for l in range(L + 1) for m in range(-l, l + 1)]
    y = np.array(ys)
    gram = (y * q.weights) @ y.conj().T
    assert np.allclose(gram, np.eye(len(ys)), atol=1e-12)


def test_negative_L_rejected():
    with pytest.raises(ValueError):
        sphere_quadrature(-1)


@pytest.mark.parametrize("method", ["spectral", "lagrange"])
def test_constant_reproduced(method):
    src, dst = sphere_quadrature(7), sphere_quadrature(12)
    out = interp_signature(np.full(src.size, 2.5), src, dst, method)
    assert np.allclose(out, 2.5, atol=1e-12)


@pytest.mark.parametrize("l_src, l_dst", [(6, 9), (9, 13), (13, 20)])
def test_band_limited_interpolation(l_src, l_dst):
    src, dst = sphere_quadrature(l_src), sphere_quadrature(l_dst)
    f_src = _harmonic_mix(src, l_src)
    f_dst = _harmonic_mix(dst, l_src)
    out = interp_signature(f_src, src, dst)
    assert np.max(np.abs(out - f_dst)) < 1e-4 * np.max(np.abs(f_dst))


def test_downward_keeps_low_degrees():
    src, dst = sphere_quadrature(13), sphere_quadrature(9)
    out = interp_signature(_harmonic_mix(src, 9), src, dst)
    assert np.allclose(out, _harmonic_mix(dst, 9), atol=1e-10)


def test_lagrange_converges_with_order():
    src, dst = sphere_quadrature(12), sphere_quadrature(17)
    f_src = _harmonic_mix(src, 4)
    f_dst = _harmonic_mix(dst, 4)
    errs = [np.max(np.abs(interp_signature(f_src, src, dst, "lagrange", p) - f_dst)) for p in (2, 4, 6)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] < 1e-2 * np.max(np.abs(f_dst))


def test_lagrange_stencil_too_large():
    with pytest.raises(InterpolationError):
        interpolation_matrix(sphere_quadrature(1), sphere_quadrature(3), "lagrange", 4)


def test_unknown_method():
    with pytest.raises(ValueError):
        interpolation_matrix(sphere_quadrature(2), sphere_quadrature(3), "cubic")


@pytest.mark.parametrize("method", ["spectral", "lagrange"])
def test_anterpolation_is_weighted_adjoint(method):
    src, dst = sphere_quadrature(9), sphere_quadrature(13)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(src.size, 3)) + 1j * rng.normal(size=(src.size, 3))
    y = rng.normal(size=(dst.size, 3)) + 1j * rng.normal(size=(dst.size, 3))
    lhs = np.sum(dst.weights[:, None] * interp_signature(x, src, dst, method) * y.conj())
    rhs = np.sum(src.weights[:, None] * x * anterp_signature(y, src, dst, method).conj())
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)


def test_anterpolation_shape():
    src, dst = sphere_quadrature(4), sphere_quadrature(7)
    assert anterpolation_matrix(src, dst).shape == (src.size, dst.size)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15))
def test_interp_then_anterp_on_finer_grid_is_identity(a, b):
    # spectral interpolation up and weighted-adjoint back is exact projection
    lo, hi = sorted((a, b))
    src, dst = sphere_quadrature(lo), sphere_quadrature(hi)
    f = _harmonic_mix(src, lo, seed=a + 31 * b)
    back = anterp_signature(interp_signature(f, src, dst), src, dst)
    assert np.allclose(back, f, atol=1e-10 * max(1.0, np.abs(f).max()))


@pytest.mark.parametrize("ls, ld", [(3, 6), (6, 3), (5, 5), (8, 13)])
@pytest.mark.parametrize("method", ["spectral", "lagrange"])
def test_fast_operators_match_dense(ls, ld, method):
    src, dst = sphere_quadrature(ls), sphere_quadrature(ld)
    rng = np.random.default_rng(ls * 31 + ld)
    x = rng.standard_normal((src.size, 5))
    y = rng.standard_normal((dst.size, 5))
    fwd = interpolation_operator(src, dst, method) @ x
    adj = anterpolation_operator(src, dst, method) @ y
    assert fwd.shape == (dst.size, 5) and adj.shape == (src.size, 5)
    assert np.allclose(fwd, interpolation_matrix(src, dst, method) @ x, atol=1e-12)
    assert np.allclose(adj, anterpolation_matrix(src, dst, method) @ y, atol=1e-12)


@pytest.mark.parametrize("ls, ld", [(3, 6), (6, 3), (20, 33)])
def test_separable_matches_dense(ls, ld):
    src, dst = sphere_quadrature(ls), sphere_quadrature(ld)
    rng = np.random.default_rng(ld)
    x = rng.standard_normal((src.size, 4))
    y = rng.standard_normal((dst.size, 4))
    assert np.allclose(SeparableInterpolator(src, dst) @ x, interpolation_matrix(src, dst) @ x, atol=1e-12)
    assert np.allclose(SeparableInterpolator(src, dst, adjoint=True) @ y, anterpolation_matrix(src, dst) @ y, atol=1e-12)
