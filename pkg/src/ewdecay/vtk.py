"""Legacy ASCII VTK unstructured-grid snapshots (``snap_<step>.vtk``)."""

from __future__ import annotations

import io
import os
import re
from dataclasses import dataclass

import numpy as np

from .geometry import atomic_write_text

CELL_TYPES = {2: 5, 3: 10}  # VTK_TRIANGLE, VTK_TETRA


class VTKFormatError(ValueError):
    pass


@dataclass
class Snapshot:
    step: int
    t: float
    u: np.ndarray
    v: np.ndarray


def _pad3(a):
    a = np.asarray(a, dtype=float)
    if a.shape[1] == 3:
        return a
    return np.hstack([a, np.zeros((a.shape[0], 3 - a.shape[1]))])


def snapshot_name(step):
    return f"snap_{step}.vtk"


def format_snapshot(mesh, u, v, t, step):
    n = mesh.dim
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(f"ewdecay snapshot step={step} t={t:.17g} dim={n}\n")
    buf.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    buf.write("FIELD FieldData 2\n")
    buf.write(f"TIME 1 1 double\n{t:.17g}\n")
    buf.write(f"CYCLE 1 1 int\n{step}\n")
    buf.write(f"POINTS {mesh.n_nodes} double\n")
    np.savetxt(buf, _pad3(mesh.nodes), fmt="%.17g")
    E, k = mesh.elements.shape
    buf.write(f"CELLS {E} {E * (k + 1)}\n")
    np.savetxt(buf, np.hstack([np.full((E, 1), k), mesh.elements]), fmt="%d")
    buf.write(f"CELL_TYPES {E}\n")
    np.savetxt(buf, np.full(E, CELL_TYPES[n]), fmt="%d")
    buf.write(f"POINT_DATA {mesh.n_nodes}\n")
    for name, field in (("u", u), ("v", v)):
        buf.write(f"VECTORS {name} double\n")
        np.savetxt(buf, _pad3(np.asarray(field).reshape(mesh.n_nodes, n)), fmt="%.17g")
    return buf.getvalue()


def write_snapshot(directory, mesh, u, v, t, step):
    path = os.path.join(directory, snapshot_name(step))
    atomic_write_text(path, format_snapshot(mesh, u, v, t, step))
    return path


def read_snapshot(path):
    """Parse a file written by :func:`write_snapshot`; returns a Snapshot."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    if len(lines) < 2 or not lines[0].startswith("# vtk DataFile"):
        raise VTKFormatError(f"{path}: not a legacy VTK file")
    m = re.search(r"step=(\d+) t=(\S+) dim=(\d)", lines[1])
    if not m:
        raise VTKFormatError(f"{path}: missing ewdecay header")
    step, t, dim = int(m.group(1)), float(m.group(2)), int(m.group(3))
    fields = {}
    i = 0
    n_points = None
    while i < len(lines):
        toks = lines[i].split()
        if toks and toks[0] == "POINTS":
            n_points = int(toks[1])
        if toks and toks[0] == "VECTORS":
            if n_points is None:
                raise VTKFormatError(f"{path}: VECTORS before POINTS")
            block = lines[i + 1:i + 1 + n_points]
            try:
                arr = np.array([[float(x) for x in row.split()] for row in block])
            except ValueError as exc:
                raise VTKFormatError(f"{path}:{i + 2}: {exc}") from exc
            if arr.shape != (n_points, 3):
                raise VTKFormatError(f"{path}: truncated {toks[1]} block")
            fields[toks[1]] = arr[:, :dim]
            i += n_points
        i += 1
    if "u" not in fields or "v" not in fields:
        raise VTKFormatError(f"{path}: missing u or v field")
    return Snapshot(step, t, fields["u"], fields["v"])


def list_snapshots(directory):
    names = [f for f in os.listdir(directory) if re.fullmatch(r"snap_\d+\.vtk", f)]
    names.sort(key=lambda f: int(f[5:-4]))
    return [os.path.join(directory, f) for f in names]
