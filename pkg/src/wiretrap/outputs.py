"""Serialization of grids, meshes, tables, trajectories, and run reports.

All text output uses repr-exact floats ('%.17g') so identical runs produce
byte-identical files; the binary grid block is little-endian with an
explicit header (see README for the layout).
"""

from __future__ import annotations

import json
import struct
from typing import Iterable

import numpy as np

from .grids import IsoSurfaceMesh, ScalarField3D

GRID_MAGIC = b"WTGRID01"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_ply(path, vertices: np.ndarray, triangles: np.ndarray,
              comment: str = "") -> None:
    """ASCII PLY mesh; coordinates in meters."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        if comment:
            fh.write(f"comment {comment}\n")
        fh.write("comment units: meters\n")
        fh.write(f"element vertex {len(vertices)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        fh.write(f"element face {len(triangles)}\n")
        fh.write("property list uchar int vertex_indices\n")
        fh.write("end_header\n")
        for v in vertices:
            fh.write(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for t in triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def write_mesh_ply(path, mesh: IsoSurfaceMesh, comment: str = "") -> None:
    note = f"iso level {_fmt(mesh.level)}"
    write_ply(path, mesh.vertices, mesh.triangles,
              comment=f"{comment} {note}".strip())


def write_grid_csv(path, fld: ScalarField3D, quantity: str, unit: str) -> None:
    """Nodes as rows: x,y,z [m], value, mask (1 = valid)."""
    points = fld.spec.nodes()
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"x_m,y_m,z_m,{quantity}_{unit},mask\n")
        for p, v, ok in zip(points, fld.values, fld.mask):
            val = _fmt(v) if ok else "nan"
            fh.write(f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(p[2])},{val},{int(ok)}\n")


def write_grid_binary(path, fld: ScalarField3D) -> None:
    """Little-endian block: magic, dims, origin, spacing, values, mask.

    Layout: 8-byte magic 'WTGRID01'; 3 x uint32 (nx, ny, nz); 3 x float64
    origin [m]; 3 x float64 spacing [m]; nx*ny*nz float64 values in
    x-fastest order (NaN at masked nodes); nx*ny*nz uint8 mask (1 = valid).
    """
    spec = fld.spec
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<3I", *spec.resolution))
        fh.write(struct.pack("<3d", *spec.origin))
        fh.write(struct.pack("<3d", *spec.spacing))
        fh.write(np.asarray(fld.values, dtype="<f8").tobytes())
        fh.write(np.asarray(fld.mask, dtype=np.uint8).tobytes())


def read_grid_binary(path) -> ScalarField3D:
    from .grids import GridSpec
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != GRID_MAGIC:
            raise ValueError(f"not a grid block (magic {magic!r})")
        nx, ny, nz = struct.unpack("<3I", fh.read(12))
        origin = struct.unpack("<3d", fh.read(24))
        spacing = struct.unpack("<3d", fh.read(24))
        n = nx * ny * nz
        values = np.frombuffer(fh.read(8 * n), dtype="<f8")
        mask = np.frombuffer(fh.read(n), dtype=np.uint8).astype(bool)
    extents = tuple(s * (r - 1) for s, r in zip(spacing, (nx, ny, nz)))
    spec = GridSpec(origin=origin, extents=extents, resolution=(nx, ny, nz))
    return ScalarField3D(spec=spec, values=values, mask=mask)


def write_table_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [_fmt(c) if isinstance(c, float) else str(c) for c in row]
            fh.write(",".join(cells) + "\n")


def write_trajectory_csv(path, traj) -> None:
    """Columns: t [s], position [m], velocity [m/s], total energy [J], eta."""
    header = ["t_s", "x_m", "y_m", "z_m", "vx_m_s", "vy_m_s", "vz_m_s",
              "energy_J", "eta"]
    rows = []
    for k in range(len(traj.times)):
        rows.append([float(traj.times[k]), *map(float, traj.positions[k]),
                     *map(float, traj.velocities[k]),
                     float(traj.energies[k]), float(traj.eta[k])])
    write_table_csv(path, header, rows)


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
