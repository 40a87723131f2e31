from pathlib import Path

import numpy as np
import pytest

from fastcm.config import (
    SCALING_ONLY,
    ConfigError,
    RunConfig,
    load_config,
    load_preset,
    parse_config,
    preset_names,
    preset_path,
)
from fastcm.krylov import SAI_PRESETS

BASE = {"mesh": {"path": "/tmp/x.msh"}, "frequency": {"hz": 3e8}}


def _doc(**sections):
    doc = {k: dict(v) for k, v in BASE.items()}
    for name, body in sections.items():
        doc.setdefault(name, {}).update(body)
    return doc


def test_presets_listed():
    assert preset_names() == ["dreamliner", "plate", "plate_sweep", "sphere", "uav"]
    with pytest.raises(ConfigError, match="available"):
        preset_path("boeing")


def test_plate_preset():
    cfg = load_preset("plate")
    assert cfg.mesh_path.exists() and cfg.mesh_path.name == "plate_947.msh"
    assert cfg.frequency == 300e6
    assert (cfg.nev, cfg.ncv) == (5, 20)
    assert cfg.sai == SAI_PRESETS["plate"] == (0.01, 0.014, 0.18)
    assert cfg.inner_tol == 1e-3 and cfg.backend == "mlfma-ira"


def test_sweep_preset_frequencies():
    cfg = load_preset("plate_sweep")
    f = cfg.frequencies
    assert len(f) == 9
    assert f[0] == 220e6 and f[-1] == pytest.approx(380e6)
    assert np.allclose(np.diff(f), 20e6)


def test_sphere_preset():
    cfg = load_preset("sphere")
    assert cfg.mesh_path.exists()
    assert cfg.frequency == pytest.approx(299792458.0)


@pytest.mark.parametrize("name", SCALING_ONLY)
def test_scaling_presets(name):
    cfg = load_preset(name)
    assert not cfg.mesh_path.exists()
    assert cfg.sai == SAI_PRESETS[name]
    assert cfg.inner_tol == 5e-3
    assert "scaling only" in cfg.notes


def test_relative_mesh_path(tmp_path):
    (tmp_path / "sub").mkdir()
    p = tmp_path / "sub" / "run.toml"
    p.write_text('[mesh]\npath = "../m.off"\n[frequency]\nhz = 1e9\n')
    cfg = load_config(p)
    assert cfg.mesh_path == (tmp_path / "m.off").resolve()


def test_defaults():
    cfg = parse_config(_doc())
    assert cfg.sai == SAI_PRESETS["plate"]
    assert cfg.output_dir == Path("out")
    assert cfg.spectral_mode == "sep1" and cfg.inner_solver == "gmres"


@pytest.mark.parametrize(
    "sai, want",
    [("uav", SAI_PRESETS["uav"]), ("none", None), ([0.02, 0.03, 0.2], (0.02, 0.03, 0.2))],
)
def test_sai_forms(sai, want):
    assert parse_config(_doc(preconditioner={"sai": sai})).sai == want


@pytest.mark.parametrize(
    "doc, match",
    [
        ({"mesh": {"path": "a.msh"}}, "exactly one"),
        ({"frequency": {"hz": 1e9}}, "mesh.path"),
        (_doc(frequency={"sweep": [1e8, 2e8, 1e7]}), "exactly one"),
        (_doc(bogus={"a": 1}), "unknown section"),
        (_doc(solver={"nevv": 3}), "unknown keys"),
        (_doc(solver={"backend": "jdqz"}), "backend"),
        (_doc(solver={"nev": 20, "ncv": 20}), "ncv"),
        (_doc(inner={"tol": 1.5}), "inner_tol"),
        (_doc(inner={"solver": "cg"}), "inner solver"),
        (_doc(mlfma={"d0": 0}), "d0"),
        (_doc(mlfma={"target_box": 0.7}), "target_box"),
        (_doc(preconditioner={"sai": "boeing"}), "SAI preset"),
        (_doc(preconditioner={"sai": [0.1, 0.2]}), "three values"),
        (_doc(solver={"spectral_mode": "sep"}), "sep"),
        (_doc(solver={"nev": "five"}), "nev"),
        (_doc(frequency={"hz": -1.0}), "positive"),
    ],
)
def test_invalid(doc, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(doc)


def test_invalid_sweep():
    doc = {"mesh": {"path": "/x.msh"}, "frequency": {"sweep": [3e8, 2e8, 1e7]}}
    with pytest.raises(ConfigError, match="sweep"):
        parse_config(doc)


def test_dense_backend_ignores_ncv():
    cfg = parse_config(_doc(solver={"backend": "dense-qz", "nev": 30, "ncv": 20}))
    assert cfg.nev == 30


def test_sep_without_sai():
    cfg = parse_config(_doc(solver={"spectral_mode": "sep"}, preconditioner={"sai": "none"}))
    assert cfg.spectral_mode == "sep" and cfg.sai is None


def test_bad_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[mesh\npath=")
    with pytest.raises(ConfigError):
        load_config(p)


def test_overrides_revalidate():
    cfg = load_preset("plate")
    assert cfg.with_overrides(nev=3, ncv=None).nev == 3
    assert cfg.with_overrides() is cfg
    with pytest.raises(ConfigError):
        cfg.with_overrides(d0=99)


def test_to_dict_is_plain():
    d = load_preset("plate").to_dict()
    assert isinstance(d["mesh_path"], str) and isinstance(d["output_dir"], str)
    assert "extra" not in d


def test_frozen():
    cfg = RunConfig(mesh_path=Path("x"), frequency=1e9)
    with pytest.raises(AttributeError):
        cfg.nev = 3
