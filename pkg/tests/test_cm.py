import csv
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastcm.assembly import assemble_dense
from fastcm.cm import (
    EIGEN_CSV_HEADER,
    CharacteristicMode,
    CmSolution,
    InnerSolveError,
    NormalizationWarning,
    SpectralOperator,
    apply_operator,
    degenerate_groups,
    dense_reference,
    extract_lambda,
    ira_eigs,
    magnitude_discrepancy,
    normalize_mode,
    r_correlation,
    subspace_angles_deg,
    track_modes,
    triangle_current_magnitude,
    write_eigen_csv,
    write_modes_json,
    write_vtk,
)
from fastcm.constants import wavenumber
from fastcm.fmm import dense_operators
from fastcm.mesh import build_rwg
from fastcm.mesh.synthetic import plate


@pytest.fixture(scope="module")
def small():
    """A one-wavelength plate with 164 unknowns and its dense Z."""
    b = build_rwg(plate(1.0, 0.6, 10, 6))
    z = assemble_dense(b, wavenumber(300e6))
    return b, z, dense_operators(z)


@pytest.fixture(scope="module")
def small_ref(small):
    return dense_reference(small[1], nev=10)


@pytest.fixture(scope="module")
def small_ira(small):
    _, _, ops = small
    op = SpectralOperator(ops["R"], ops["Z"], tol=1e-3)
    return ira_eigs(op, 5, 20)


# ----------------------------------------------------------------------
# eigenvalue extraction


@pytest.mark.parametrize(
    "mu, lam",
    [(1.0, 0.0), (0.5 - 0.5j, 1.0), (1 / (1 - 0.1974j), -0.1974), (1 / (1 + 0.3081j), 0.3081)],
)
def test_extract_lambda(mu, lam):
    got, real = extract_lambda(mu)
    assert got == pytest.approx(lam, abs=1e-14)
    assert real == pytest.approx(0.0, abs=1e-14)


def test_extract_lambda_sep():
    assert extract_lambda(0.25, "sep") == (4.0, 0.0)
    lam, diag = extract_lambda(1 / (2 + 0.1j), "sep")
    assert lam == pytest.approx(2.0) and diag == pytest.approx(0.1)


def test_extract_lambda_errors():
    with pytest.raises(ValueError):
        extract_lambda(0)
    with pytest.raises(ValueError):
        extract_lambda(1.0, "qz")


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50))
def test_extract_lambda_round_trip(lam):
    got, real = extract_lambda(1 / (1 + 1j * lam))
    assert got == pytest.approx(lam, rel=1e-12, abs=1e-12)
    assert real < 1e-12


# ----------------------------------------------------------------------
# dense reference and normalization


def test_two_by_two_pencil():
    # X J = lambda R J with R = I, X = [[1, 2], [2, 1]]: lambda = -1, 3
    z = np.eye(2) + 1j * np.array([[1.0, 2.0], [2.0, 1.0]])
    sol = dense_reference(z)
    assert np.allclose(sol.lambdas, [-1.0, 3.0], atol=1e-14)
    j = sol.modes[0].J
    assert np.allclose(np.abs(j), 1 / np.sqrt(2))
    assert np.vdot(j, j).real == pytest.approx(1.0)


def test_two_by_two_weighted():
    r = np.diag([1.0, 4.0])
    x = np.diag([2.0, -2.0])
    sol = dense_reference(r + 1j * x)
    assert np.allclose(sol.lambdas, [-0.5, 2.0])
    assert np.allclose(np.abs(sol.modes[0].J), [0, 0.5])


def test_dense_cap():
    with pytest.raises(ValueError):
        dense_reference(np.eye(10) + 0j, cap=5)


def test_dense_sorted_and_normalized(small, small_ref):
    _, z, _ = small
    lams = small_ref.lambdas
    assert np.all(np.diff(np.abs(lams)) >= 0)
    for m in small_ref.modes:
        assert np.vdot(m.J, z.real @ m.J).real == pytest.approx(1.0, rel=1e-10)
        # a real eigenvector of the symmetric pencil
        assert np.linalg.norm(z.imag @ m.J - m.lam * z.real @ m.J) <= 1e-8 * np.linalg.norm(z.imag @ m.J)


def test_normalize_idempotent(small_ref, small):
    r = small[1].real
    j = small_ref.modes[0].J
    again, ok = normalize_mode(j, r)
    assert ok and np.allclose(again, j, rtol=0, atol=1e-12 * np.abs(j).max())


@pytest.mark.parametrize("scale", [3j, -2.5, 0.01 - 0.3j])
def test_normalize_scale_invariant(small_ref, small, scale):
    r = small[1].real
    j = small_ref.modes[1].J
    out, _ = normalize_mode(scale * j, r)
    assert np.allclose(out, j, rtol=0, atol=1e-12 * np.abs(j).max())
    big = out[np.argmax(np.abs(out))]
    assert abs(big.imag) <= 1e-15 * abs(big) and big.real > 0


def test_normalize_degenerate_flagged():
    with pytest.warns(NormalizationWarning):
        j, ok = normalize_mode(np.array([1.0, 1j]), np.zeros((2, 2)))
    assert not ok and j[0] == 1.0


def test_scale_invariance(small):
    _, z, _ = small
    base = dense_reference(z, nev=5)
    for c in (1e-3, 7.0):
        scaled = dense_reference(c * z, nev=5)
        assert np.allclose(scaled.lambdas, base.lambdas, rtol=1e-9)
        for a, b in zip(base.modes, scaled.modes):
            # J^H R J = 1 absorbs c as 1/sqrt(c); relative magnitudes are unchanged
            assert magnitude_discrepancy(np.sqrt(c) * b.J, a.J) < 1e-8


# ----------------------------------------------------------------------
# spectral operator


def test_apply_operator_dense_oracle(small):
    _, z, ops = small
    op = SpectralOperator(ops["R"], ops["Z"], tol=1e-3)
    u = np.random.default_rng(0).normal(size=z.shape[0]) + 0j
    ref = np.linalg.solve(z, z.real @ u)
    out = apply_operator(op, u)
    rhs = z.real @ u
    assert np.linalg.norm(z @ out - rhs) <= 1e-3 * np.linalg.norm(rhs)
    assert np.linalg.norm(out - ref) <= 1e-2 * np.linalg.norm(ref)
    assert op.last_report.converged and op.inner_iterations == op.last_report.iterations


def test_apply_operator_on_eigenvector(small, small_ref):
    _, z, ops = small
    op = SpectralOperator(ops["R"], ops["Z"], tol=1e-6)
    for m in small_ref.modes[:3]:
        mu = 1 / (1 + 1j * m.lam)
        out = apply_operator(op, m.J)
        assert np.linalg.norm(out - mu * m.J) <= 1e-4 * np.linalg.norm(mu * m.J)


def test_apply_operator_linear(small):
    _, z, ops = small
    op = SpectralOperator(ops["R"], ops["Z"], tol=1e-8)
    u = np.random.default_rng(1).normal(size=z.shape[0]) + 0j
    a = 2.0 - 3.0j
    lhs, rhs = apply_operator(op, a * u), a * apply_operator(op, u)
    assert np.linalg.norm(lhs - rhs) <= 1e-6 * np.linalg.norm(rhs)


def test_spectral_operator_errors(small):
    _, z, ops = small
    with pytest.raises(ValueError):
        SpectralOperator(ops["R"], ops["X"], mode="sep", precond=lambda v: v)
    with pytest.raises(ValueError):
        SpectralOperator(ops["R"], ops["Z"], mode="sep2")
    with pytest.raises(ValueError):
        SpectralOperator(ops["R"], ops["Z"], solver="cg")
    op = SpectralOperator(ops["R"], ops["Z"], tol=1e-8, maxit=2)
    with pytest.raises(ValueError):
        op.apply(np.zeros(z.shape[0]))
    with pytest.raises(InnerSolveError) as exc:
        op.apply(np.ones(z.shape[0]))
    assert not exc.value.report.converged


def test_bicgstab_inner(small):
    _, z, ops = small
    op = SpectralOperator(ops["R"], ops["Z"], solver="bicgstab", tol=1e-6)
    u = np.ones(z.shape[0]) + 0j
    ref = np.linalg.solve(z, z.real @ u)
    assert np.linalg.norm(op(u) - ref) <= 1e-3 * np.linalg.norm(ref)


# ----------------------------------------------------------------------
# restarted Arnoldi


def test_ira_matches_dense(small_ira, small_ref):
    ref = small_ref.lambdas[:5]
    assert small_ira.metadata["converged"]
    assert np.all(np.abs(small_ira.lambdas - ref) <= 10 * 1e-3 * np.abs(ref))


def test_ira_modes_match_dense(small_ira, small_ref, small):
    r = small[1].real
    for a, b in zip(small_ira.modes, small_ref.modes):
        assert r_correlation(a.J, b.J, r) > 0.999
        assert magnitude_discrepancy(a.J, b.J) < 1e-2


def test_ira_realness_and_orthogonality(small_ira, small):
    r = small[1].real
    v = small_ira.vectors
    for m in small_ira.modes:
        assert m.realness <= 1e-2
        assert m.residual <= 1e-8
    gram = v.T @ r @ v
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) <= 1e-2
    assert np.allclose(np.diag(v.conj().T @ r @ v).real, 1.0)


def test_ira_metadata(small_ira):
    meta = small_ira.metadata
    for key in ("nev", "ncv", "outer_iterations", "operator_applies", "inner_iterations", "converged"):
        assert key in meta
    assert meta["operator_applies"] >= meta["ncv"]
    assert len(small_ira) == 5


def test_ira_sep_mode(small, small_ref):
    _, _, ops = small
    op = SpectralOperator(ops["R"], ops["X"], mode="sep", tol=1e-8)
    sol = ira_eigs(op, 4, 16)
    assert np.allclose(sol.lambdas, small_ref.lambdas[:4], rtol=1e-5)


def test_ira_seeded(small):
    _, _, ops = small
    a = ira_eigs(SpectralOperator(ops["R"], ops["Z"], tol=1e-6), 3, 12, seed=4)
    b = ira_eigs(SpectralOperator(ops["R"], ops["Z"], tol=1e-6), 3, 12, seed=4)
    assert np.array_equal(a.lambdas, b.lambdas)


def test_ira_argument_checks(small):
    _, _, ops = small
    op = SpectralOperator(ops["R"], ops["Z"])
    with pytest.raises(ValueError):
        ira_eigs(op, 5, 5)
    with pytest.raises(ValueError):
        ira_eigs(op, 0, 5)
    with pytest.raises(ValueError):
        ira_eigs(op, 3, 1000)
    with pytest.warns(UserWarning, match="small"):
        ira_eigs(SpectralOperator(ops["R"], ops["Z"], tol=1e-6), 4, 6, maxouter=50)


def test_ira_nonconvergence_flagged(small):
    _, _, ops = small
    op = SpectralOperator(ops["R"], ops["Z"], tol=1e-6)
    with pytest.warns(UserWarning, match="stopped"):
        sol = ira_eigs(op, 4, 9, outer_tol=1e-14, maxouter=1)
    assert not sol.metadata["converged"]
    assert len(sol) == 4


# ----------------------------------------------------------------------
# grouping and tracking


def test_degenerate_groups():
    groups = degenerate_groups([-0.1974, 0.3081, -0.1975, 0.3085, 0.31, 1.0])
    assert sorted(map(sorted, groups)) == [[0, 2], [1, 3, 4], [5]]


def test_track_identity(small_ref, small):
    perm, conf = track_modes(small_ref, small_ref, small[1].real)
    assert np.array_equal(perm, np.arange(len(small_ref)))
    assert conf == pytest.approx(1.0)


def test_track_swap(small_ref, small):
    modes = list(small_ref.modes[:4])
    swapped = CmSolution([modes[0], modes[2], modes[1], modes[3]])
    perm, conf = track_modes(CmSolution(modes), swapped, small[1].real)
    assert perm.tolist() == [0, 2, 1, 3]
    assert conf == pytest.approx(1.0)


def test_r_correlation_range(small_ref, small):
    r = small[1].real
    a, b = small_ref.modes[0].J, small_ref.modes[1].J
    assert 0 <= r_correlation(a, b, r) < 1e-8
    assert r_correlation(a, 2j * a, r) == pytest.approx(1.0)


def test_subspace_angles(small_ref, small):
    v = small_ref.vectors[:, :3]
    mix = v @ np.array([[1, 2, 0], [0, 1, 1], [1, 0, 3.0]])
    assert np.max(subspace_angles_deg(v, mix)) < 1e-6
    assert np.max(subspace_angles_deg(v, mix, small[1].real)) < 1e-5


# ----------------------------------------------------------------------
# writers


def test_eigen_csv(tmp_path, small_ira):
    small_ira.frequency = 300e6
    p = tmp_path / "e.csv"
    write_eigen_csv(p, [small_ira, small_ira])
    rows = list(csv.reader(p.open()))
    assert rows[0] == EIGEN_CSV_HEADER
    assert len(rows) == 11
    assert float(rows[1][2]) == small_ira.modes[0].lam


def test_modes_json(tmp_path, small_ira):
    p = tmp_path / "m.json"
    write_modes_json(p, small_ira)
    doc = json.loads(p.read_text())
    assert len(doc["modes"]) == 5
    c = doc["modes"][0]["coefficients"]
    j = small_ira.modes[0].J
    assert complex(*c["3"]) == j[3]


def test_vtk(tmp_path, small, small_ira):
    b = small[0]
    p = tmp_path / "m.vtk"
    write_vtk(p, b, small_ira)
    text = p.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"CELL_DATA {b.mesh.n_triangles}" in text
    assert text.count("LOOKUP_TABLE") == 5


def test_triangle_current_single_basis(square_mesh):
    b = build_rwg(square_mesh)
    mag = triangle_current_magnitude(b, np.array([1.0]))
    # RWG at the centroid: l / (2A) * |c - v_free| on each triangle
    c = square_mesh.vertices[square_mesh.triangles].mean(axis=1)
    want = [b.lengths[0] / (2 * square_mesh.areas[t]) * np.linalg.norm(c[t] - square_mesh.vertices[f])
            for t, f in ((b.tri_plus[0], b.free_plus[0]), (b.tri_minus[0], b.free_minus[0]))]
    assert np.allclose(sorted(mag), sorted(want))


def test_mode_container():
    m = CharacteristicMode(0.5, np.ones(3))
    s = CmSolution([m, CharacteristicMode(-0.2, np.zeros(3))])
    assert s.lambdas.tolist() == [0.5, -0.2]
    assert s.vectors.shape == (3, 2)
    assert s.groups() == [[1], [0]]
