import numpy as np
import pytest
import scipy.special as ss
from hypothesis import given, settings
from hypothesis import strategies as st

from fastcm.special import (
    SpecialFunctionOverflow,
    legendre_all,
    normalized_assoc_legendre,
    spherical_h1_all,
    spherical_jn_all,
    spherical_yn_all,
)

X = np.linspace(0.05, 60.0, 400)


@pytest.mark.parametrize("lmax", [0, 1, 5, 30, 60])
def test_jn_matches_scipy(lmax):
    ours = spherical_jn_all(lmax, X)
    ref = np.stack([ss.spherical_jn(l, X) for l in range(lmax + 1)])
    assert ours.shape == ref.shape
    # relative to the oscillation envelope, so zeros of j_l do not dominate
    envelope = np.maximum(np.abs(ref), 1 / X)
    assert np.max(np.abs(ours - ref) / envelope) < 1e-12


def test_jn_at_zero():
    out = spherical_jn_all(4, np.array([0.0, 1.0]))
    assert out[0, 0] == 1.0
    assert np.all(out[1:, 0] == 0.0)


def test_jn_large_argument_small_order():
    x = np.linspace(100.0, 2000.0, 500)
    ref = np.stack([ss.spherical_jn(l, x) for l in range(4)])
    assert np.max(np.abs(spherical_jn_all(3, x) - ref) * x) < 1e-11


@pytest.mark.parametrize("lmax", [0, 1, 10, 25])
def test_yn_matches_scipy(lmax):
    x = np.linspace(1.0, 40.0, 200)
    ours = spherical_yn_all(lmax, x)
    ref = np.stack([ss.spherical_yn(l, x) for l in range(lmax + 1)])
    assert np.max(np.abs(ours - ref) / np.abs(ref)) < 1e-9


def test_yn_overflow_raises():
    with pytest.raises(SpecialFunctionOverflow):
        spherical_yn_all(400, np.array([1e-3]))


def test_yn_rejects_nonpositive():
    with pytest.raises(ValueError):
        spherical_yn_all(3, np.array([0.0]))


def test_hankel_is_j_plus_iy():
    x = np.linspace(0.5, 20, 50)
    h = spherical_h1_all(12, x)
    assert np.allclose(h.real, spherical_jn_all(12, x), rtol=0, atol=0)
    assert np.allclose(h.imag, spherical_yn_all(12, x), rtol=0, atol=0)


def test_legendre_matches_scipy():
    x = np.linspace(-1, 1, 101)
    ours = legendre_all(40, x)
    ref = np.stack([ss.eval_legendre(l, x) for l in range(41)])
    assert np.max(np.abs(ours - ref)) < 1e-12


def test_normalized_assoc_legendre_orthonormal():
    x, w = np.polynomial.legendre.leggauss(60)
    for m in (0, 1, 4, 9):
        p = normalized_assoc_legendre(30, m, x)
        gram = (p * w) @ p.T
        assert np.allclose(gram, np.eye(31 - m), atol=1e-12)


def test_normalized_assoc_legendre_empty_above_degree():
    assert normalized_assoc_legendre(3, 5, np.zeros(4)).shape == (0, 4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.2, 80.0), st.integers(2, 40))
def test_bessel_wronskian(x, l):
    # j_l y_{l-1} - j_{l-1} y_l = 1/x^2
    j = spherical_jn_all(l, np.array([x]))[:, 0]
    y = spherical_yn_all(l, np.array([x]))[:, 0]
    lhs = j[l] * y[l - 1] - j[l - 1] * y[l]
    scale = max(abs(j[l] * y[l - 1]), abs(j[l - 1] * y[l]), 1 / x**2)
    assert abs(lhs - 1 / x**2) <= 1e-9 * scale


@settings(max_examples=60, deadline=None)
@given(st.floats(-1.0, 1.0), st.integers(0, 50))
def test_legendre_bounded(x, lmax):
    assert np.all(np.abs(legendre_all(lmax, np.array([x]))) <= 1 + 1e-12)
