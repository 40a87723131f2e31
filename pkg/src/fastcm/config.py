"""Run configuration: TOML files and the bundled presets.

A configuration file looks like::

    [mesh]
    path = "../meshes/plate_947.msh"   # relative to the config file
    format = "msh"                     # optional, inferred from the suffix

    [frequency]
    hz = 300e6                         # or: sweep = [220e6, 380e6, 20e6]

    [solver]
    backend = "mlfma-ira"              # or "dense-qz"
    nev = 5
    ncv = 20
    seed = 1

    [inner]
    solver = "gmres"
    tol = 1e-3

    [preconditioner]
    sai = "plate"                      # preset name, [e1, e2, e3], or "none"

    [mlfma]
    d0 = 3
    target_box = 0.25

    [output]
    directory = "out"
"""

import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from fastcm.krylov import SAI_PRESETS, SOLVERS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

BACKENDS = ("dense-qz", "mlfma-ira")
SCALING_ONLY = ("uav", "dreamliner")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass(frozen=True)
class RunConfig:
    mesh_path: Path
    mesh_format: str = None
    frequency: float = None
    sweep: tuple = None  # (start, stop, step) in Hz
    backend: str = "mlfma-ira"
    nev: int = 5
    ncv: int = 20
    seed: int = 1
    outer_tol: float = 1e-8
    maxouter: int = 300
    spectral_mode: str = "sep1"
    inner_solver: str = "gmres"
    inner_tol: float = 1e-3
    inner_restart: int = 60
    inner_maxit: int = 1000
    sai: tuple = SAI_PRESETS["plate"]  # None disables preconditioning
    d0: int = 3
    target_box: float = 0.25
    output_dir: Path = Path("out")
    workers: int = 1
    matvec_threshold: float = 1e-3
    name: str = ""
    notes: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if (self.frequency is None) == (self.sweep is None):
            raise ConfigError("give exactly one of frequency.hz or frequency.sweep")
        if self.frequency is not None and not self.frequency > 0:
            raise ConfigError(f"frequency must be positive, got {self.frequency}")
        if self.sweep is not None:
            if len(self.sweep) != 3:
                raise ConfigError("sweep must be [start, stop, step]")
            start, stop, step = self.sweep
            if not (0 < start <= stop and step > 0):
                raise ConfigError(f"invalid sweep {self.sweep}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if not self.nev >= 1:
            raise ConfigError("nev must be at least 1")
        if self.backend == "mlfma-ira" and not self.ncv > self.nev:
            raise ConfigError(f"ncv ({self.ncv}) must exceed nev ({self.nev})")
        if self.spectral_mode not in ("sep1", "sep"):
            raise ConfigError(f"unknown spectral mode {self.spectral_mode!r}")
        if self.inner_solver not in SOLVERS:
            raise ConfigError(f"inner solver must be one of {tuple(SOLVERS)}")
        for name in ("inner_tol", "outer_tol", "matvec_threshold"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.inner_restart < 1 or self.inner_maxit < 1 or self.maxouter < 1:
            raise ConfigError("restart, maxit and maxouter must be positive")
        if self.sai is not None:
            if len(self.sai) != 3 or not all(0 < e < 1 for e in self.sai):
                raise ConfigError(f"SAI thresholds must be three values in (0, 1), got {self.sai}")
            if self.spectral_mode == "sep":
                raise ConfigError("the sep transformation runs without a preconditioner")
        if not 1 <= self.d0 <= 12:
            raise ConfigError(f"d0 must lie in [1, 12], got {self.d0}")
        if not 0.2 <= self.target_box <= 0.5:
            raise ConfigError(f"target_box must lie in [0.2, 0.5] wavelengths, got {self.target_box}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def frequencies(self):
        if self.sweep is None:
            return np.array([self.frequency])
        start, stop, step = self.sweep
        count = int(round((stop - start) / step)) + 1
        return start + step * np.arange(count)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    def to_dict(self):
        d = asdict(self)
        d["mesh_path"] = str(self.mesh_path)
        d["output_dir"] = str(self.output_dir)
        d.pop("extra")
        return d


def _sai_value(raw):
    if raw is None or raw is False:
        return None
    if isinstance(raw, str):
        if raw.lower() == "none":
            return None
        if raw not in SAI_PRESETS:
            raise ConfigError(f"unknown SAI preset {raw!r}; expected one of {tuple(SAI_PRESETS)} or 'none'")
        return SAI_PRESETS[raw]
    return tuple(float(x) for x in raw)


_KNOWN = {
    "mesh": {"path", "format"},
    "frequency": {"hz", "sweep"},
    "solver": {"backend", "nev", "ncv", "seed", "outer_tol", "maxouter", "spectral_mode", "workers"},
    "inner": {"solver", "tol", "restart", "maxit"},
    "preconditioner": {"sai"},
    "mlfma": {"d0", "target_box", "matvec_threshold"},
    "output": {"directory"},
    "meta": {"name", "notes"},
}


def parse_config(doc, base_dir="."):
    """Build a ``RunConfig`` from a parsed TOML document."""
    for section, body in doc.items():
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(body) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    get = lambda s, k, d=None: doc.get(s, {}).get(k, d)  # noqa: E731
    if get("mesh", "path") is None:
        raise ConfigError("mesh.path is required")
    base = Path(base_dir)
    mesh_path = Path(get("mesh", "path"))
    if not mesh_path.is_absolute():
        mesh_path = (base / mesh_path).resolve()
    sweep = get("frequency", "sweep")
    hz = get("frequency", "hz")
    defaults = RunConfig.__dataclass_fields__
    kw = dict(
        mesh_path=mesh_path,
        mesh_format=get("mesh", "format"),
        frequency=float(hz) if hz is not None else None,
        sweep=tuple(float(x) for x in sweep) if sweep is not None else None,
        sai=_sai_value(get("preconditioner", "sai", "plate")),
        output_dir=Path(get("output", "directory", "out")),
        name=get("meta", "name", ""),
        notes=get("meta", "notes", ""),
    )
    mapping = {
        ("solver", "backend"): "backend",
        ("solver", "nev"): "nev",
        ("solver", "ncv"): "ncv",
        ("solver", "seed"): "seed",
        ("solver", "outer_tol"): "outer_tol",
        ("solver", "maxouter"): "maxouter",
        ("solver", "spectral_mode"): "spectral_mode",
        ("solver", "workers"): "workers",
        ("inner", "solver"): "inner_solver",
        ("inner", "tol"): "inner_tol",
        ("inner", "restart"): "inner_restart",
        ("inner", "maxit"): "inner_maxit",
        ("mlfma", "d0"): "d0",
        ("mlfma", "target_box"): "target_box",
        ("mlfma", "matvec_threshold"): "matvec_threshold",
    }
    for (s, k), attr in mapping.items():
        v = get(s, k)
        if v is not None:
            try:
                kw[attr] = type(defaults[attr].default)(v)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{s}] {k}: {exc}") from exc
    return RunConfig(**kw)


def load_config(path):
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)


def preset_names():
    root = resources.files("fastcm") / "data" / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def preset_path(name):
    p = resources.files("fastcm") / "data" / "presets" / f"{name}.toml"
    if not p.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return Path(str(p))


def load_preset(name):
    return load_config(preset_path(name))


def data_mesh(name):
    """Path of a mesh bundled with the package."""
    return Path(str(resources.files("fastcm") / "data" / "meshes" / name))
