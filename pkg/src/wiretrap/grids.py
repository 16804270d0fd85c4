"""Regular grids, scalar-field sampling, and isosurface extraction.

Grid nodes span [origin, origin + extents] inclusively; the flat value
array is x-fastest: flat index = i + nx * (j + ny * k). Masked nodes mark
fenced or otherwise invalid samples; any cell with at least one masked
corner is excluded from isosurface triangulation so that interpolation
never crosses a singular fence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from skimage import measure as _sk_measure

from .errors import EmptyMeshError
from .parallel import map_index_chunks


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi]."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if not np.all(hi > lo):
            raise ValueError("box must have positive extent on every axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        ok = np.all((p >= lo) & (p <= hi), axis=1)
        return ok if np.ndim(points) > 1 else bool(ok[0])


@dataclass(frozen=True)
class GridSpec:
    """Regular grid: origin corner, physical extents, nodes per axis."""

    origin: tuple[float, float, float]
    extents: tuple[float, float, float]
    resolution: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        extents = tuple(float(v) for v in self.extents)
        resolution = tuple(int(v) for v in self.resolution)
        if len(origin) != 3 or len(extents) != 3 or len(resolution) != 3:
            raise ValueError("origin, extents, resolution must be length 3")
        if any(e <= 0 for e in extents):
            raise ValueError("grid extents must be positive")
        if any(n < 2 for n in resolution):
            raise ValueError("grid resolution must be >= 2 per axis")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "resolution", resolution)

    @classmethod
    def from_box(cls, box: Box, resolution) -> "GridSpec":
        lo = np.asarray(box.lo)
        hi = np.asarray(box.hi)
        return cls(tuple(lo), tuple(hi - lo), tuple(resolution))

    @property
    def spacing(self) -> np.ndarray:
        n = np.asarray(self.resolution)
        return np.asarray(self.extents) / (n - 1)

    @property
    def n_nodes(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    @property
    def box(self) -> Box:
        lo = np.asarray(self.origin)
        return Box(tuple(lo), tuple(lo + np.asarray(self.extents)))

    @property
    def cell_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        o = self.origin
        e = self.extents
        n = self.resolution
        return tuple(np.linspace(o[a], o[a] + e[a], n[a]) for a in range(3))

    def nodes(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Node coordinates for flat indices [start, stop), x-fastest order."""
        stop = self.n_nodes if stop is None else stop
        nx, ny, _ = self.resolution
        idx = np.arange(start, stop)
        i = idx % nx
        j = (idx // nx) % ny
        k = idx // (nx * ny)
        xs, ys, zs = self.axes()
        return np.column_stack([xs[i], ys[j], zs[k]])


@dataclass(frozen=True)
class ScalarField3D:
    """Scalar samples on a GridSpec; NaN at masked nodes, mask True = valid."""

    spec: GridSpec
    values: np.ndarray  # flat, x-fastest
    mask: np.ndarray    # flat bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        mask = np.asarray(self.mask, dtype=bool).ravel()
        if values.size != self.spec.n_nodes or mask.size != self.spec.n_nodes:
            raise ValueError("values/mask length must equal nx*ny*nz")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("valid nodes must hold finite values")
        values = values.copy()
        values.flags.writeable = False
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def volume(self) -> np.ndarray:
        """Values as an (nx, ny, nz) array indexed [i, j, k]."""
        nx, ny, nz = self.spec.resolution
        return self.values.reshape(nz, ny, nx).transpose(2, 1, 0)

    def mask_volume(self) -> np.ndarray:
        nx, ny, nz = self.spec.resolution
        return self.mask.reshape(nz, ny, nx).transpose(2, 1, 0)

    def valid_range(self) -> tuple[float, float]:
        vals = self.values[self.mask]
        if vals.size == 0:
            raise EmptyMeshError("field has no valid nodes")
        return float(vals.min()), float(vals.max())


@dataclass(frozen=True)
class IsoSurfaceMesh:
    """Triangulated level set: vertices [m], triangle index triples, level."""

    vertices: np.ndarray   # (V, 3)
    triangles: np.ndarray  # (T, 3) int
    level: float

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle indices out of range")
        vertices.flags.writeable = False
        triangles.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)


def _eval_chunk(fn, spec: GridSpec, start: int, stop: int):
    points = spec.nodes(start, stop)
    values, valid = fn(points)
    values = np.asarray(values, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    values = np.where(valid, values, np.nan)
    return values, valid


def sample_scalar_grid(fn, spec: GridSpec, workers: int = 1) -> ScalarField3D:
    """Sample fn(points) -> (values, valid) on every grid node.

    Deterministic and worker-count independent: nodes are evaluated
    elementwise and reassembled in flat index order.
    """
    job = partial(_eval_chunk, fn, spec)
    values, valid = map_index_chunks(job, spec.n_nodes, workers)
    return ScalarField3D(spec=spec, values=values, mask=valid)


def _canonicalize_mesh(verts: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort vertices lexicographically by (x, y, z) and faces by index triple."""
    order = np.lexsort((verts[:, 2], verts[:, 1], verts[:, 0]))
    remap = np.empty(len(verts), dtype=np.int64)
    remap[order] = np.arange(len(verts))
    verts = verts[order]
    faces = remap[faces]
    # rotate each triangle so the smallest index leads, preserving orientation
    shift = np.argmin(faces, axis=1)
    cols = (np.arange(3)[None, :] + shift[:, None]) % 3
    faces = np.take_along_axis(faces, cols, axis=1)
    faces = faces[np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))]
    return verts, faces


def extract_isosurface(fld: ScalarField3D, level: float) -> IsoSurfaceMesh:
    """Marching-cubes triangulation of the level set of a sampled field.

    Cells with any masked corner are skipped. Raises EmptyMeshError when the
    level does not lie strictly inside the valid value range. Vertex and
    triangle ordering is canonical (lexicographic) for reproducibility.
    """
    vmin, vmax = fld.valid_range()
    if not (vmin < level < vmax):
        raise EmptyMeshError(
            f"iso level {level:.6e} outside sampled range [{vmin:.6e}, {vmax:.6e}]"
        )
    vol = fld.volume().astype(np.float64)
    node_ok = fld.mask_volume()
    vol = np.where(node_ok, vol, 0.0)  # placeholder values; cells are masked out below

    # Cell (i,j,k) is valid iff all 8 corner nodes are valid. skimage's
    # marching_cubes consults mask[i+1, j+1, k+1] for the cell at (i,j,k),
    # so place cell validity at the +1 offset.
    corner_ok = (
        node_ok[:-1, :-1, :-1] & node_ok[1:, :-1, :-1]
        & node_ok[:-1, 1:, :-1] & node_ok[1:, 1:, :-1]
        & node_ok[:-1, :-1, 1:] & node_ok[1:, :-1, 1:]
        & node_ok[:-1, 1:, 1:] & node_ok[1:, 1:, 1:]
    )
    sk_mask = np.zeros_like(node_ok)
    sk_mask[1:, 1:, 1:] = corner_ok

    if not np.any(corner_ok):
        raise EmptyMeshError("no valid cells to triangulate")

    spacing = tuple(float(s) for s in fld.spec.spacing)
    try:
        verts, faces, _, _ = _sk_measure.marching_cubes(
            vol, level=level, spacing=spacing, mask=sk_mask
        )
    except (ValueError, RuntimeError) as exc:
        raise EmptyMeshError(f"no surface at level {level:.6e}: {exc}") from exc
    if len(verts) == 0:
        raise EmptyMeshError(f"no surface at level {level:.6e}")
    verts = verts + np.asarray(fld.spec.origin)
    verts, faces = _canonicalize_mesh(np.asarray(verts, dtype=float),
                                      np.asarray(faces, dtype=np.int64))
    return IsoSurfaceMesh(vertices=verts, triangles=faces, level=float(level))


def trilinear_interpolate(fld: ScalarField3D, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of the sampled values at arbitrary points."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    origin = np.asarray(fld.spec.origin)
    spacing = fld.spec.spacing
    n = np.asarray(fld.spec.resolution)
    t = (p - origin) / spacing
    i0 = np.clip(np.floor(t).astype(int), 0, n - 2)
    f = t - i0
    vol = fld.volume()
    out = np.zeros(len(p))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (np.where(dx, f[:, 0], 1 - f[:, 0])
                     * np.where(dy, f[:, 1], 1 - f[:, 1])
                     * np.where(dz, f[:, 2], 1 - f[:, 2]))
                out += w * vol[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out if np.ndim(points) > 1 else float(out[0])
