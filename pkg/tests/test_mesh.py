import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastcm.config import data_mesh
from fastcm.mesh import MeshError, SurfaceMesh, build_rwg, load_mesh, mesh_stats, write_mesh
from fastcm.mesh.synthetic import reference_plate, plate, sphere, sphere_with_unknowns


def test_square(square_mesh):
    assert square_mesh.n_vertices == 4
    assert square_mesh.n_triangles == 2
    assert build_rwg(square_mesh).n == 1


def test_tetrahedron(tetra_mesh):
    assert tetra_mesh.n_triangles == 4
    b = build_rwg(tetra_mesh)
    assert b.n == 6
    assert len(tetra_mesh.edge_lengths()) == 6


def test_bundled_plate_has_947_unknowns(plate_basis):
    assert plate_basis.n == 947


def test_bundled_sphere(sphere_basis):
    assert sphere_basis.n == 942
    assert sphere_basis.n == 3 * sphere_basis.mesh.n_triangles // 2


@pytest.mark.parametrize("nv", [12, 50, 316, 700])
def test_closed_sphere_count(nv):
    m = sphere(nv)
    assert build_rwg(m).n * 2 == 3 * m.n_triangles


def test_sphere_with_unknowns_close():
    assert abs(build_rwg(sphere_with_unknowns(4000)).n - 4000) <= 3


def test_normals_outward_on_sphere():
    m = sphere(100)
    assert np.all(np.einsum("ij,ij->i", m.normals, m.centroids) > 0)


def test_degenerate_triangle_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], float)
    with pytest.raises(MeshError) as exc:
        SurfaceMesh(v, np.array([[0, 1, 2], [0, 1, 3]]))
    assert exc.value.indices == (0,)


def test_duplicate_vertex_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 0]], float)
    with pytest.raises(MeshError, match="duplicated"):
        SurfaceMesh(v, np.array([[0, 1, 2], [0, 1, 3]]))


def test_inconsistent_orientation_reports_triangles():
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    with pytest.raises(MeshError, match="orientation") as exc:
        SurfaceMesh(v, np.array([[0, 1, 2], [0, 3, 2]]))
    assert set(exc.value.indices) == {0, 1}


def test_missing_vertex_rejected():
    with pytest.raises(MeshError):
        SurfaceMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))


def test_non_manifold_edge_rejected():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]], float)
    # three triangles share edge (0, 1); orientations alternate so only
    # the manifold check can fail
    m = SurfaceMesh.__new__(SurfaceMesh)
    object.__setattr__(m, "vertices", v)
    object.__setattr__(m, "triangles", np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]]))
    with pytest.raises(MeshError, match="non-manifold"):
        build_rwg(m)


def test_rwg_sign_convention(square_mesh):
    b = build_rwg(square_mesh)
    a, c = b.edges[0]
    assert a < c
    tp = square_mesh.triangles[b.tri_plus[0]]
    # tri_plus traverses (a, c) in its own orientation
    pos = {int(x): i for i, x in enumerate(tp)}
    assert (pos[int(c)] - pos[int(a)]) % 3 == 1
    assert b.divergence(0, b.tri_plus[0]) > 0 > b.divergence(0, b.tri_minus[0])


def test_rwg_normal_continuity(plate_basis):
    b = plate_basis
    v = b.mesh.vertices
    rng = np.random.default_rng(3)
    for j in rng.choice(b.n, 25, replace=False):
        p, q = v[b.edges[j]]
        edge = q - p
        nrm = np.cross(b.mesh.normals[b.tri_plus[j]], edge / np.linalg.norm(edge))
        t = rng.uniform(0, 1, 5)[:, None]
        pts = p + t * edge
        fp = b.evaluate(j, pts, b.tri_plus[j]) @ nrm
        fm = b.evaluate(j, pts, b.tri_minus[j]) @ nrm
        assert np.allclose(fp, fm, rtol=1e-12)
        assert np.allclose(np.abs(fp), 1.0, rtol=1e-12)


def test_rwg_zero_outside_support(square_mesh):
    b = build_rwg(square_mesh)
    assert np.all(b.evaluate(0, np.zeros((2, 3)), 5) == 0)


@pytest.mark.parametrize("fmt", ["msh", "off"])
def test_roundtrip(tmp_path, fmt):
    m = plate(0.7, 0.3, 5, 3, crossed_cells=[(1, 1)])
    path = tmp_path / f"m.{fmt}"
    write_mesh(m, path)
    back = load_mesh(path)
    assert np.allclose(back.vertices, m.vertices, rtol=0, atol=0)
    assert np.array_equal(back.triangles, m.triangles)


def test_unknown_format(tmp_path):
    p = tmp_path / "x.stl"
    p.write_text("solid")
    with pytest.raises(MeshError, match="unsupported"):
        load_mesh(p)


def test_parse_failure(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n")
    with pytest.raises(MeshError):
        load_mesh(p)


def test_mesh_stats(plate_basis):
    s = mesh_stats(plate_basis.mesh, plate_basis, 300e6)
    assert s["unknowns"] == 947
    assert s["edge_min"] <= s["edge_mean"] <= s["edge_max"]
    assert s["extent_wavelengths"] == pytest.approx(np.hypot(1.0, 0.6) / (299792458 / 300e6))


def test_reference_plate_matches_bundled(plate_basis):
    assert build_rwg(reference_plate()).n == plate_basis.n


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8))
def test_plate_interior_edge_count(nx, ny):
    assert build_rwg(plate(1.0, 1.0, nx, ny)).n == 3 * nx * ny - nx - ny


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100.0))
def test_scaling_preserves_topology(c):
    m = plate(1.0, 0.5, 3, 2)
    s = m.scaled(c)
    b0, b1 = build_rwg(m), build_rwg(s)
    assert np.array_equal(b0.edges, b1.edges)
    assert np.allclose(b1.lengths, c * b0.lengths)


def test_bundled_mesh_paths_exist():
    assert data_mesh("plate_947.msh").exists()
    assert data_mesh("sphere_942.off").exists()
