"""Command-line driver.

Subcommands: ``point-test``, ``matvec-check``, ``solve``, ``sweep`` and
``mesh-stats``. Exit codes: 0 success, 2 usage or configuration error,
3 numerical failure (threshold exceeded, non-convergence).
"""

import argparse
import csv
import json
import resource
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fastcm.assembly import DEFAULT_DENSE_CAP, AssemblyError, assemble_dense
from fastcm.cm import (
    CmSolution,
    InnerSolveError,
    SpectralOperator,
    dense_reference,
    ira_eigs,
    track_modes,
    write_eigen_csv,
    write_modes_json,
    write_vtk,
)
from fastcm.config import SCALING_ONLY, ConfigError, RunConfig, load_config, load_preset
from fastcm.constants import wavenumber
from fastcm.fmm import KERNELS, MlfmaSystem
from fastcm.fmm.pointtest import CASES, default_sizes, point_test_rows, write_point_test_csv
from fastcm.krylov import build_sai, write_telemetry_csv
from fastcm.mesh import MeshError, build_rwg, load_mesh, mesh_stats
from fastcm.octree import OctreeError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _peak_rss_mb():
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def _csv_list(text, allowed, what, cast=str):
    items = [cast(x.strip()) for x in text.split(",") if x.strip()]
    if not items:
        raise UsageError(f"empty {what} list")
    bad = [x for x in items if x not in allowed]
    if bad:
        raise UsageError(f"unknown entries {bad}; expected from {list(allowed)}")
    return items


# ----------------------------------------------------------------------
# configuration plumbing


def _config_from_args(args):
    if getattr(args, "preset", None):
        if args.preset in SCALING_ONLY:
            cfg = load_preset(args.preset)
            if not cfg.mesh_path.exists():
                raise UsageError(f"preset {args.preset!r} is scaling only, geometry not included")
        else:
            cfg = load_preset(args.preset)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "mesh", None):
        if args.frequency is None:
            raise UsageError("--mesh requires --frequency")
        cfg = RunConfig(mesh_path=Path(args.mesh), frequency=args.frequency)
    else:
        raise UsageError("give --config, --preset or --mesh")
    over = {}
    for attr in ("backend", "nev", "ncv", "seed", "d0", "target_box", "inner_tol", "workers"):
        v = getattr(args, attr, None)
        if v is not None:
            over[attr] = v
    if getattr(args, "frequency", None) is not None and (getattr(args, "config", None) or getattr(args, "preset", None)):
        over.update(frequency=args.frequency, sweep=None)
    if getattr(args, "output_dir", None):
        over["output_dir"] = Path(args.output_dir)
    if getattr(args, "no_sai", False):
        over["sai"] = None
    if over:
        cfg = RunConfig(**{**{f: getattr(cfg, f) for f in cfg.__dataclass_fields__}, **over})
    return cfg


def _load_basis(cfg):
    mesh = load_mesh(cfg.mesh_path, cfg.mesh_format)
    return build_rwg(mesh)


# ----------------------------------------------------------------------
# one frequency point


@dataclass
class PointResult:
    frequency: float
    solution: CmSolution
    r_apply: object
    telemetry: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def solve_point(cfg, basis, frequency):
    """Characteristic modes at one frequency with the configured backend."""
    k = wavenumber(frequency)
    t0 = time.perf_counter()
    summary = {"frequency_hz": float(frequency), "backend": cfg.backend, "unknowns": basis.n}
    if cfg.backend == "dense-qz":
        z = assemble_dense(basis, k)
        t1 = time.perf_counter()
        sol = dense_reference(z, cfg.nev)
        r = np.ascontiguousarray(z.real)
        summary.update(
            nev=cfg.nev, ncv=None, nlv=None, nii=None,
            assembly_seconds=t1 - t0, solve_seconds=time.perf_counter() - t1,
        )
        sol.frequency = float(frequency)
        return PointResult(float(frequency), sol, r, [], summary)

    system = MlfmaSystem(basis, k, d0=cfg.d0, target_box=cfg.target_box)
    precond = build_sai(system.near_block, *cfg.sai) if cfg.sai is not None else None
    t1 = time.perf_counter()
    r_op = system.operator("R")
    b_op = system.operator("Z" if cfg.spectral_mode == "sep1" else "X")
    op = SpectralOperator(
        r_op, b_op, mode=cfg.spectral_mode, solver=cfg.inner_solver, tol=cfg.inner_tol,
        restart=cfg.inner_restart, maxit=cfg.inner_maxit, precond=precond,
    )
    try:
        sol = ira_eigs(op, cfg.nev, min(cfg.ncv, basis.n), outer_tol=cfg.outer_tol,
                       maxouter=cfg.maxouter, seed=cfg.seed)
    except InnerSolveError as exc:
        raise NumericalFailure(str(exc)) from exc
    sol.frequency = float(frequency)
    per_apply = [rep.iterations for rep in op.reports]
    stats = system.stats()
    summary.update(
        nev=cfg.nev,
        ncv=cfg.ncv,
        nlv=stats["levels"],
        nii=int(max(per_apply)) if per_apply else 0,
        nii_mean=float(np.mean(per_apply)) if per_apply else 0.0,
        outer_iterations=sol.metadata["outer_iterations"],
        operator_applies=sol.metadata["operator_applies"],
        inner_iterations_total=sol.metadata["inner_iterations"],
        converged=sol.metadata["converged"],
        setup_seconds=t1 - t0,
        solve_seconds=time.perf_counter() - t1,
        near_density=stats["near_density"],
        finest_box_wavelengths=stats["finest_box_wavelengths"],
        sai_nnz=int(precond.nnz) if precond is not None else 0,
        matvecs={kind: system.operator(kind).n_matvecs for kind in ("Z", "R")},
    )
    return PointResult(float(frequency), sol, r_op, list(op.reports), summary)


def _write_point(out, res, basis, vtk=True, stem=""):
    write_eigen_csv(out / f"{stem}eigenvalues.csv", [res.solution])
    write_modes_json(out / f"{stem}modes.json", res.solution)
    if vtk:
        write_vtk(out / f"{stem}modes.vtk", basis, res.solution)
    if res.telemetry:
        write_telemetry_csv(out / f"{stem}inner_telemetry.csv", res.telemetry)


def _summary(cfg, results, t_total, extra=None):
    doc = {
        "config": cfg.to_dict(),
        "points": [dict(r.summary, lambdas=r.solution.lambdas.tolist()) for r in results],
        "wall_seconds": t_total,
        "peak_memory_mb": _peak_rss_mb(),
    }
    doc.update(extra or {})
    return doc


# ----------------------------------------------------------------------
# subcommands


def cmd_point_test(args):
    kernels = _csv_list(args.kernels, KERNELS, "kernel")
    cases = _csv_list(args.cases, CASES, "case", lambda c: c if c.startswith("case") else f"case{c}")
    if not 0 < args.start <= args.stop or args.count < 1:
        raise UsageError("need 0 < start <= stop and count >= 1")
    sizes = default_sizes(args.start, args.stop, args.count)
    rows = point_test_rows(sizes, kernels=kernels, cases=cases, d0=args.d0)
    try:
        write_point_test_csv(args.output, rows)
    except OSError as exc:
        raise UsageError(f"cannot write {args.output}: {exc}") from exc
    print(f"wrote {len(rows)} rows to {args.output}")
    return EXIT_OK


def cmd_matvec_check(args):
    cfg = _config_from_args(args)
    basis = _load_basis(cfg)
    if basis.n > args.cap:
        raise UsageError(f"N={basis.n} exceeds the dense cap of {args.cap}")
    freq = cfg.frequencies[0]
    k = wavenumber(freq)
    z = assemble_dense(basis, k)
    ref = {"Z": z, "R": z.real, "X": z.imag}
    system = MlfmaSystem(basis, k, d0=cfg.d0, target_box=cfg.target_box)
    rng = np.random.default_rng(cfg.seed)
    threshold = args.threshold if args.threshold is not None else cfg.matvec_threshold
    report = {"unknowns": basis.n, "frequency_hz": float(freq), "d0": cfg.d0, "threshold": threshold, "errors": {}}
    worst = 0.0
    for kind in ("Z", "R", "X"):
        op = system.operator(kind)
        errs = []
        for _ in range(args.vectors):
            u = rng.standard_normal(basis.n) + 1j * rng.standard_normal(basis.n)
            y = ref[kind] @ u
            errs.append(float(np.linalg.norm(op(u) - y) / np.linalg.norm(y)))
        report["errors"][kind] = errs
        worst = max(worst, max(errs))
        print(f"{kind}: max relative error {max(errs):.3e} over {args.vectors} vectors")
    report["max_error"] = worst
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=2))
    if worst > threshold:
        print(f"FAIL: {worst:.3e} exceeds {threshold:.1e}")
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_solve(args):
    cfg = _config_from_args(args)
    if cfg.sweep is not None:
        raise UsageError("config describes a sweep; use the sweep subcommand or --frequency")
    basis = _load_basis(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = solve_point(cfg, basis, cfg.frequency)
    _write_point(out, res, basis, vtk=not args.no_vtk)
    doc = _summary(cfg, [res], time.perf_counter() - t0)
    (out / "summary.json").write_text(json.dumps(doc, indent=2))
    for i, m in enumerate(res.solution.modes):
        print(f"mode {i + 1}: lambda = {m.lam:+.6f}")
    if not res.solution.metadata.get("converged", True):
        print("IRA did not converge; partial results written")
        return EXIT_NUMERICAL
    return EXIT_OK


SWEEP_HEADER = ["frequency_hz", "track", "lambda", "mode_index", "confidence"]


def run_sweep(cfg, basis, n_track=4):
    """Solve every sweep frequency and follow ``n_track`` modes across steps.

    Returns ``(results, curves, confidences)`` with ``curves[f, t]`` the
    eigenvalue of track ``t`` and ``confidences[f]`` the smallest matched
    correlation between steps ``f - 1`` and ``f`` (1.0 at the first step).
    """
    freqs = cfg.frequencies
    n_track = min(n_track, cfg.nev)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(lambda f: solve_point(cfg, basis, f), freqs))
    curves = np.full((len(freqs), n_track), np.nan)
    index = np.zeros((len(freqs), n_track), dtype=int)
    conf = np.ones(len(freqs))
    index[0] = np.arange(n_track)
    for t in range(n_track):
        curves[0, t] = results[0].solution.modes[t].lam
    for f in range(1, len(freqs)):
        prev = CmSolution([results[f - 1].solution.modes[i] for i in index[f - 1]])
        perm, confidence = track_modes(prev, results[f].solution, results[f].r_apply)
        index[f] = perm
        conf[f] = confidence
        for t in range(n_track):
            curves[f, t] = results[f].solution.modes[perm[t]].lam if perm[t] >= 0 else np.nan
    return results, curves, conf, index


def cmd_sweep(args):
    cfg = _config_from_args(args)
    if cfg.sweep is None:
        raise UsageError("config has no frequency.sweep")
    basis = _load_basis(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results, curves, conf, index = run_sweep(cfg, basis, args.track)
    write_eigen_csv(out / "eigenvalues.csv", [r.solution for r in results])
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for f, freq in enumerate(cfg.frequencies):
            for t in range(curves.shape[1]):
                w.writerow([repr(float(freq)), t + 1, repr(float(curves[f, t])), int(index[f, t]) + 1,
                            repr(float(conf[f]))])
    doc = _summary(cfg, results, time.perf_counter() - t0,
                   {"min_confidence": float(conf.min()), "tracks": curves.shape[1]})
    (out / "summary.json").write_text(json.dumps(doc, indent=2))
    print(f"{len(results)} frequencies, {curves.shape[1]} tracks, min confidence {conf.min():.3f}")
    if not all(r.solution.metadata.get("converged", True) for r in results):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_mesh_stats(args):
    cfg_path = None
    if args.preset or args.config:
        cfg = _config_from_args(args)
        cfg_path, fmt, freq = cfg.mesh_path, cfg.mesh_format, cfg.frequencies[0]
    elif args.mesh:
        cfg_path, fmt, freq = Path(args.mesh), None, args.frequency
    else:
        raise UsageError("give --mesh, --config or --preset")
    mesh = load_mesh(cfg_path, fmt)
    stats = mesh_stats(mesh, build_rwg(mesh), freq)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


# ----------------------------------------------------------------------
# argument parsing


def _add_source(p, frequency=True):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", help="TOML run configuration")
    g.add_argument("--preset", help="bundled preset name (plate, plate_sweep, sphere, uav, dreamliner)")
    g.add_argument("--mesh", help="mesh file (.msh or .off)")
    if frequency:
        p.add_argument("--frequency", type=float, help="frequency in Hz")


def _add_overrides(p):
    p.add_argument("--backend", choices=("dense-qz", "mlfma-ira"))
    p.add_argument("--nev", type=int)
    p.add_argument("--ncv", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--d0", type=int)
    p.add_argument("--target-box", type=float, dest="target_box")
    p.add_argument("--inner-tol", type=float, dest="inner_tol")
    p.add_argument("--no-sai", action="store_true", dest="no_sai")
    p.add_argument("--output-dir", dest="output_dir")


def build_parser():
    parser = argparse.ArgumentParser(prog="fastcm", description="Characteristic-mode analysis of PEC surfaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("point-test", help="plane-wave decomposition error versus box size")
    p.add_argument("--start", type=float, default=0.1, help="smallest box size in wavelengths")
    p.add_argument("--stop", type=float, default=4.0)
    p.add_argument("--count", type=int, default=40)
    p.add_argument("--d0", type=int, default=3)
    p.add_argument("--kernels", default=",".join(KERNELS))
    p.add_argument("--cases", default=",".join(CASES))
    p.add_argument("-o", "--output", default="point_test.csv")
    p.set_defaults(func=cmd_point_test)

    p = sub.add_parser("matvec-check", help="dense versus MLFMA matvec errors")
    _add_source(p)
    p.add_argument("--d0", type=int)
    p.add_argument("--target-box", type=float, dest="target_box")
    p.add_argument("--seed", type=int)
    p.add_argument("--vectors", type=int, default=5)
    p.add_argument("--threshold", type=float)
    p.add_argument("--cap", type=int, default=DEFAULT_DENSE_CAP)
    p.add_argument("--json", help="write the report here")
    p.set_defaults(func=cmd_matvec_check)

    p = sub.add_parser("solve", help="characteristic modes at one frequency")
    _add_source(p)
    _add_overrides(p)
    p.add_argument("--no-vtk", action="store_true", dest="no_vtk")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="tracked characteristic values over a frequency sweep")
    _add_source(p, frequency=False)
    _add_overrides(p)
    p.add_argument("--track", type=int, default=4, help="number of modes to follow")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mesh-stats", help="mesh and basis summary")
    _add_source(p)
    p.set_defaults(func=cmd_mesh_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, MeshError, OctreeError, AssemblyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    warnings.simplefilter("default")
    sys.exit(main())
