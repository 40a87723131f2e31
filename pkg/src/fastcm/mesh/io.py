"""Gmsh MSH v2 ASCII and OFF readers/writers for triangle surfaces."""

from pathlib import Path

import numpy as np

from fastcm.mesh.core import MeshError, SurfaceMesh

FORMATS = ("msh", "off")

_GMSH_TRIANGLE = 2


def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower().lstrip(".")
    else:
        fmt = Path(path).suffix.lower().lstrip(".")
    if fmt not in FORMATS:
        raise MeshError(f"unsupported mesh format {fmt!r}; expected one of {FORMATS}")
    return fmt


def load_mesh(path, format=None):
    """Read a triangle surface mesh.

    Parameters
    ----------
    path : str or Path
    format : {"msh", "off"}, optional
        Inferred from the file suffix when omitted.

    Raises
    ------
    MeshError
        On parse failure or when the mesh violates a ``SurfaceMesh`` invariant.
    """
    fmt = _infer_format(path, format)
    text = Path(path).read_text()
    try:
        if fmt == "msh":
            vertices, triangles = _parse_msh(text)
        else:
            vertices, triangles = _parse_off(text)
    except MeshError:
        raise
    except (ValueError, IndexError, KeyError) as exc:
        raise MeshError(f"failed to parse {path} as {fmt}: {exc}") from exc
    return SurfaceMesh(vertices, triangles)


def _section(lines, name):
    try:
        start = lines.index(f"${name}")
        stop = lines.index(f"$End{name}", start)
    except ValueError:
        raise MeshError(f"missing ${name} section") from None
    return lines[start + 1 : stop]


def _parse_msh(text):
    lines = [ln.strip() for ln in text.splitlines()]
    header = _section(lines, "MeshFormat")[0].split()
    if not header[0].startswith("2") or header[1] != "0":
        raise MeshError(f"only ASCII MSH version 2 is supported, got {' '.join(header)}")

    nodes = _section(lines, "Nodes")
    count = int(nodes[0])
    rows = np.array([ln.split() for ln in nodes[1 : count + 1]], dtype=float)
    ids = rows[:, 0].astype(np.int64)
    index_of = {nid: i for i, nid in enumerate(ids)}

    elements = _section(lines, "Elements")
    count = int(elements[0])
    tris = []
    for ln in elements[1 : count + 1]:
        fields = [int(x) for x in ln.split()]
        if fields[1] != _GMSH_TRIANGLE:
            continue
        ntags = fields[2]
        tris.append([index_of[nid] for nid in fields[3 + ntags : 6 + ntags]])
    if not tris:
        raise MeshError("no triangle elements found")
    return rows[:, 1:4], np.array(tris, dtype=np.int64)


def _parse_off(text):
    tokens = []
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if ln:
            tokens.append(ln)
    if not tokens or not tokens[0].startswith("OFF"):
        raise MeshError("missing OFF header")
    head = tokens[0][3:].split() or tokens.pop(1).split()
    nv, nf = int(head[0]), int(head[1])
    body = tokens[1:]
    vertices = np.array([ln.split()[:3] for ln in body[:nv]], dtype=float)
    faces = []
    for i, ln in enumerate(body[nv : nv + nf]):
        f = [int(x) for x in ln.split()]
        if f[0] != 3:
            raise MeshError(f"face {i} has {f[0]} vertices; only triangles are supported", [i])
        faces.append(f[1:4])
    if len(vertices) != nv or len(faces) != nf:
        raise MeshError("OFF file is truncated")
    return vertices, np.array(faces, dtype=np.int64)


def write_mesh(mesh, path, format=None):
    """Write ``mesh`` so that ``load_mesh`` reproduces it exactly."""
    fmt = _infer_format(path, format)
    v, t = mesh.vertices, mesh.triangles
    out = []
    if fmt == "msh":
        out += ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(v))]
        out += [f"{i + 1} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(v.tolist())]
        out += ["$EndNodes", "$Elements", str(len(t))]
        out += [f"{i + 1} 2 2 0 1 {a + 1} {b + 1} {c + 1}" for i, (a, b, c) in enumerate(t.tolist())]
        out += ["$EndElements"]
    else:
        out += ["OFF", f"{len(v)} {len(t)} 0"]
        out += [f"{x!r} {y!r} {z!r}" for x, y, z in v.tolist()]
        out += [f"3 {a} {b} {c}" for a, b, c in t.tolist()]
    Path(path).write_text("\n".join(out) + "\n")
