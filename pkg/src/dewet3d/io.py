"""Mesh file formats: Wavefront OBJ in and out, legacy ASCII VTK out."""

from __future__ import annotations

import os

import numpy as np

from .errors import IoError, SizeMismatch
from .mesh import SurfaceMesh, build_mesh


def _fmt(x) -> str:
    return "%.17g" % x


def write_obj(mesh: SurfaceMesh, path) -> None:
    lines = [f"# {mesh.n_vertices} vertices, {mesh.n_triangles} triangles"]
    lines += ["v " + " ".join(_fmt(c) for c in p) for p in mesh.vertices]
    lines += ["f " + " ".join(str(i + 1) for i in t) for t in mesh.triangles]
    _write_text(path, "\n".join(lines) + "\n")


def read_obj(path) -> SurfaceMesh:
    """Read vertices and triangular faces; `f` entries may use the v/vt/vn form."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    verts, faces = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise IoError(f"{path}:{lineno}: only triangular faces are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except ValueError as exc:
            raise IoError(f"{path}:{lineno}: malformed record: {line.strip()!r}") from exc
    if not verts or not faces:
        raise IoError(f"{path}: no vertices or faces found")
    return build_mesh(np.array(verts), np.array(faces))


def write_vtk(mesh: SurfaceMesh, potential, path, title="dewet3d surface") -> None:
    """Legacy ASCII VTK 2.0 POLYDATA; output depends only on the inputs."""
    K, N = mesh.n_vertices, mesh.n_triangles
    out = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET POLYDATA",
           f"POINTS {K} double"]
    out += [" ".join(_fmt(c) for c in p) for p in mesh.vertices]
    out.append(f"POLYGONS {N} {4 * N}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    if potential is not None:
        potential = np.asarray(potential, dtype=float)
        if potential.shape != (K,):
            raise SizeMismatch(f"potential must have length {K}, got shape {potential.shape}")
        out += [f"POINT_DATA {K}", "SCALARS potential double 1", "LOOKUP_TABLE default"]
        out += [_fmt(x) for x in potential]
    _write_text(path, "\n".join(out) + "\n")


def read_vtk_points(path):
    """Minimal reader for files produced by :func:`write_vtk` (points, triangles, scalars)."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = 0
    points = tris = scalars = None
    while i < len(lines):
        line = lines[i].split()
        if line[:1] == ["POINTS"]:
            n = int(line[1])
            points = np.array([[float(x) for x in lines[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line[:1] == ["POLYGONS"]:
            n = int(line[1])
            tris = np.array([[int(x) for x in lines[i + 1 + k].split()[1:]] for k in range(n)])
            i += n
        elif line[:1] == ["LOOKUP_TABLE"] and points is not None:
            scalars = np.array([float(lines[i + 1 + k]) for k in range(len(points))])
            i += len(points)
        i += 1
    return points, tris, scalars


def _write_text(path, text):
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
