import warnings

import numpy as np
import pytest

from fastcm.assembly import assemble_dense
from fastcm.config import data_mesh
from fastcm.constants import wavenumber
from fastcm.fmm import LowFrequencyWarning, MlfmaSystem
from fastcm.mesh import SurfaceMesh, build_rwg, load_mesh

PLATE_FREQ = 300e6


@pytest.fixture(scope="session")
def square_mesh():
    v = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]
    return SurfaceMesh(np.array(v, float), np.array([[0, 1, 2], [0, 2, 3]]))


@pytest.fixture(scope="session")
def tetra_mesh():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    t = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return SurfaceMesh(v, t)


@pytest.fixture(scope="session")
def plate_basis():
    return build_rwg(load_mesh(data_mesh("plate_947.msh")))


@pytest.fixture(scope="session")
def plate_k():
    return wavenumber(PLATE_FREQ)


@pytest.fixture(scope="session")
def plate_z(plate_basis, plate_k):
    return assemble_dense(plate_basis, plate_k)


@pytest.fixture(scope="session")
def plate_system(plate_basis, plate_k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowFrequencyWarning)
        s = MlfmaSystem(plate_basis, plate_k, d0=3)
        for kind in ("Z", "R", "X"):
            s.operator(kind)
    return s


@pytest.fixture(scope="session")
def sphere_basis():
    return build_rwg(load_mesh(data_mesh("sphere_942.off")))


@pytest.fixture(scope="session")
def sphere_z(sphere_basis):
    return assemble_dense(sphere_basis, 2 * np.pi)


# ----------------------------------------------------------------------
# acceptance report: one line per criterion, repeated in the terminal summary

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def criterion():
    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
