"""Static and quasi-static magnetic fields of wire assemblies.

Closed-form Biot-Savart fields and their position Jacobians for infinite
straight wires and finite polyline segments, superposition with a uniform
bias, and detection of field zeros (spin-flip risk points).

Conventions: positions in meters, fields in tesla, currents in amperes.
An infinite wire along unit direction d through point a carries field

    B(p) = mu0 I / (2 pi rho) * (d x rho_hat),

with rho the perpendicular distance from the axis. Finite segments use the
stable two-endpoint form

    B(p) = mu0 I / (4 pi) * 2 (r1 + r2) / (r1 r2 ((r1 + r2)^2 - L^2)) * (r1_vec x r2_vec),

which reduces to the infinite-wire law as the segment grows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import SingularityError, UnsupportedConfigurationError
from .grids import Box, GridSpec
from .model import CODATA, RFDrive

_TWO_PI = 2.0 * np.pi
_FOUR_PI = 4.0 * np.pi

DEFAULT_EPS_AXIS = 1.0e-9          # [m] exclusion radius around every wire
DEFAULT_ZERO_THRESHOLD = 1.0e-8    # [T] |B| below this counts as a field zero


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class InfiniteLine:
    """Infinite straight wire through `point` along unit `direction`."""

    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        point = np.asarray(self.point, dtype=float).reshape(3)
        direction = np.asarray(self.direction, dtype=float).reshape(3)
        if not np.all(np.isfinite(point)) or not np.all(np.isfinite(direction)):
            raise ValueError("wire geometry must be finite")
        norm = np.linalg.norm(direction)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"direction must be unit length (|d| = {norm!r})")
        object.__setattr__(self, "point", _freeze(point))
        object.__setattr__(self, "direction", _freeze(direction))


@dataclass(frozen=True)
class Polyline:
    """Open polyline wire; current flows from vertices[0] towards vertices[-1]."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        if len(verts) < 2:
            raise ValueError("polyline needs at least 2 vertices")
        if not np.all(np.isfinite(verts)):
            raise ValueError("polyline vertices must be finite")
        seg = np.diff(verts, axis=0)
        if np.any(np.linalg.norm(seg, axis=1) == 0.0):
            raise ValueError("polyline has repeated consecutive vertices")
        object.__setattr__(self, "vertices", _freeze(verts))


Geometry = InfiniteLine | Polyline


@dataclass(frozen=True)
class Wire:
    """Wire geometry with its DC current, RF current amplitude, and RF phase."""

    geometry: Geometry
    i_dc: float = 0.0
    i_rf: float = 0.0
    rf_phase: float = 0.0

    def __post_init__(self):
        if self.i_rf < 0.0:
            raise ValueError("RF current amplitude must be >= 0")


@dataclass(frozen=True)
class WireAssembly:
    """Scene: wires sharing one RF drive, plus a uniform static bias field."""

    wires: tuple[Wire, ...]
    bias: np.ndarray
    drive: RFDrive
    eps_axis: float = DEFAULT_EPS_AXIS
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD

    def __post_init__(self):
        wires = tuple(self.wires)
        if len(wires) < 1:
            raise ValueError("assembly needs at least one wire")
        bias = np.asarray(self.bias, dtype=float).reshape(3)
        if not np.all(np.isfinite(bias)):
            raise ValueError("bias must be finite")
        if not self.eps_axis > 0.0:
            raise ValueError("eps_axis must be positive")
        object.__setattr__(self, "wires", wires)
        object.__setattr__(self, "bias", _freeze(bias))

    def with_bias(self, bias) -> "WireAssembly":
        return replace(self, bias=np.asarray(bias, dtype=float))


@dataclass(frozen=True)
class FieldZeros:
    """Refined |B_DC| zeros inside a search box."""

    zeros: np.ndarray      # (K, 3), lexicographically sorted
    threshold: float       # [T]
    domain: Box

    def __post_init__(self):
        object.__setattr__(self, "zeros",
                           _freeze(np.asarray(self.zeros, dtype=float).reshape(-1, 3)))


def _as_points(p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    return arr.reshape(-1, 3), single


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


# ---------------------------------------------------------------------------
# infinite straight wire


def infinite_line_field(line: InfiniteLine, current: float, points) -> np.ndarray:
    """B field [T] of an infinite straight wire; vectorized over points."""
    p, single = _as_points(points)
    d = line.direction
    r = p - line.point
    s = r @ d
    u = r - s[:, None] * d                  # perpendicular offset from axis
    rho2 = np.einsum("ij,ij->i", u, u)
    pref = CODATA.mu0 * current / _TWO_PI
    out = pref * np.cross(np.broadcast_to(d, u.shape), u) / rho2[:, None]
    return out[0] if single else out


def infinite_line_jacobian(line: InfiniteLine, current: float, points) -> np.ndarray:
    """dB/dp [T/m] of an infinite straight wire, shape (..., 3, 3)."""
    p, single = _as_points(points)
    d = line.direction
    r = p - line.point
    s = r @ d
    u = r - s[:, None] * d
    rho2 = np.einsum("ij,ij->i", u, u)
    pref = CODATA.mu0 * current / _TWO_PI
    proj = np.eye(3) - np.outer(d, d)
    dskew = _skew(d)
    du = np.cross(np.broadcast_to(d, u.shape), u)      # d x u per point
    jac = (dskew @ proj)[None, :, :] / rho2[:, None, None]
    jac = jac - 2.0 * du[:, :, None] * u[:, None, :] / (rho2 ** 2)[:, None, None]
    jac = pref * jac
    return jac[0] if single else jac


def infinite_line_distance(line: InfiniteLine, points) -> np.ndarray:
    p, single = _as_points(points)
    r = p - line.point
    s = r @ line.direction
    u = r - s[:, None] * line.direction
    d = np.linalg.norm(u, axis=1)
    return float(d[0]) if single else d


# ---------------------------------------------------------------------------
# polyline wire


def _segment_field_terms(a: np.ndarray, b: np.ndarray, p: np.ndarray):
    # (s^2 - L^2) rewritten as 2 (r1 r2 + r1.r2). The direct sum cancels for
    # points beside the segment interior (r1.r2 < 0), where the identity
    # r1 r2 + r1.r2 = |r1 x r2|^2 / (r1 r2 - r1.r2) is stable instead; the
    # remaining singularity is the segment itself, which is fenced.
    lvec = b - a
    r1 = p - a
    r2 = p - b
    n1 = np.linalg.norm(r1, axis=1)
    n2 = np.linalg.norm(r2, axis=1)
    s = n1 + n2
    dot = np.einsum("ij,ij->i", r1, r2)
    cvec = np.cross(r1, r2)
    cc = np.einsum("ij,ij->i", cvec, cvec)
    prod = n1 * n2
    with np.errstate(divide="ignore", invalid="ignore"):
        core = np.where(dot >= 0.0, prod + dot, cc / (prod - dot))
    g = s / (prod * core)
    return lvec, r1, r2, n1, n2, s, core, g, cvec


def polyline_field(poly: Polyline, current: float, points) -> np.ndarray:
    """B field [T] of a finite polyline, exact per-segment Biot-Savart sum."""
    p, single = _as_points(points)
    pref = CODATA.mu0 * current / _FOUR_PI
    out = np.zeros_like(p)
    verts = poly.vertices
    for a, b in zip(verts[:-1], verts[1:]):
        *_, g, cvec = _segment_field_terms(a, b, p)
        out += g[:, None] * cvec
    out *= pref
    return out[0] if single else out


def polyline_jacobian(poly: Polyline, current: float, points) -> np.ndarray:
    """dB/dp [T/m] of a finite polyline, shape (..., 3, 3)."""
    p, single = _as_points(points)
    pref = CODATA.mu0 * current / _FOUR_PI
    jac = np.zeros((len(p), 3, 3))
    verts = poly.vertices
    for a, b in zip(verts[:-1], verts[1:]):
        lvec, r1, r2, n1, n2, s, core, g, cvec = _segment_field_terms(a, b, p)
        r1h = r1 / n1[:, None]
        r2h = r2 / n2[:, None]
        grad_core = n2[:, None] * r1h + n1[:, None] * r2h + r1 + r2
        grad_g = g[:, None] * (
            (r1h + r2h) / s[:, None] - r1h / n1[:, None] - r2h / n2[:, None]
            - grad_core / core[:, None]
        )
        jac += cvec[:, :, None] * grad_g[:, None, :]
        jac += g[:, None, None] * _skew(lvec)[None, :, :]
    jac *= pref
    return jac[0] if single else jac


def polyline_distance(poly: Polyline, points) -> np.ndarray:
    p, single = _as_points(points)
    verts = poly.vertices
    best = np.full(len(p), np.inf)
    for a, b in zip(verts[:-1], verts[1:]):
        lvec = b - a
        t = np.clip(((p - a) @ lvec) / (lvec @ lvec), 0.0, 1.0)
        foot = a + t[:, None] * lvec
        best = np.minimum(best, np.linalg.norm(p - foot, axis=1))
    return float(best[0]) if single else best


# ---------------------------------------------------------------------------
# geometry dispatch


def wire_field(geometry: Geometry, current: float, points) -> np.ndarray:
    if isinstance(geometry, InfiniteLine):
        return infinite_line_field(geometry, current, points)
    return polyline_field(geometry, current, points)


def wire_jacobian(geometry: Geometry, current: float, points) -> np.ndarray:
    if isinstance(geometry, InfiniteLine):
        return infinite_line_jacobian(geometry, current, points)
    return polyline_jacobian(geometry, current, points)


def wire_distance(geometry: Geometry, points) -> np.ndarray:
    if isinstance(geometry, InfiniteLine):
        return infinite_line_distance(geometry, points)
    return polyline_distance(geometry, points)


# ---------------------------------------------------------------------------
# assembly-level fields


def fence_distances(assembly: WireAssembly, points) -> np.ndarray:
    """Distance from each point to every wire, shape (n_points, n_wires)."""
    p, _ = _as_points(points)
    return np.column_stack([wire_distance(w.geometry, p) for w in assembly.wires])


def off_fence(assembly: WireAssembly, points) -> np.ndarray:
    """True where a point is outside every wire's exclusion radius."""
    p, single = _as_points(points)
    ok = np.all(fence_distances(assembly, p) >= assembly.eps_axis, axis=1)
    return bool(ok[0]) if single else ok


def _check_fence(assembly: WireAssembly, p: np.ndarray) -> None:
    dists = fence_distances(assembly, p)
    bad = np.argwhere(dists < assembly.eps_axis)
    if bad.size:
        i_pt, i_wire = bad[0]
        raise SingularityError(int(i_wire), float(dists[i_pt, i_wire]), assembly.eps_axis)


def b_dc(assembly: WireAssembly, points, check: bool = True) -> np.ndarray:
    """Static field [T]: bias plus every wire's DC contribution."""
    p, single = _as_points(points)
    if check:
        _check_fence(assembly, p)
    out = np.broadcast_to(assembly.bias, p.shape).copy()
    for w in assembly.wires:
        if w.i_dc != 0.0:
            out += wire_field(w.geometry, w.i_dc, p)
    return out[0] if single else out


def b_dc_jacobian(assembly: WireAssembly, points, check: bool = True) -> np.ndarray:
    p, single = _as_points(points)
    if check:
        _check_fence(assembly, p)
    jac = np.zeros((len(p), 3, 3))
    for w in assembly.wires:
        if w.i_dc != 0.0:
            jac += wire_jacobian(w.geometry, w.i_dc, p)
    return jac[0] if single else jac


def _require_common_phase(assembly: WireAssembly) -> None:
    phases = [w.rf_phase for w in assembly.wires if w.i_rf != 0.0]
    if not phases:
        return
    ref = phases[0]
    offsets = [(ph - ref + np.pi) % _TWO_PI - np.pi for ph in phases]
    if any(abs(o) > 1e-12 for o in offsets):
        raise UnsupportedConfigurationError(
            "wires with distinct RF phases are not supported; the RF amplitude "
            "would not be a single real vector"
        )


def b_rf_amplitude(assembly: WireAssembly, points, check: bool = True) -> np.ndarray:
    """Quasi-static RF amplitude vector [T]; the bias does not contribute."""
    _require_common_phase(assembly)
    p, single = _as_points(points)
    if check:
        _check_fence(assembly, p)
    out = np.zeros_like(p)
    for w in assembly.wires:
        if w.i_rf != 0.0:
            out += wire_field(w.geometry, w.i_rf, p)
    return out[0] if single else out


def b_rf_jacobian(assembly: WireAssembly, points, check: bool = True) -> np.ndarray:
    _require_common_phase(assembly)
    p, single = _as_points(points)
    if check:
        _check_fence(assembly, p)
    jac = np.zeros((len(p), 3, 3))
    for w in assembly.wires:
        if w.i_rf != 0.0:
            jac += wire_jacobian(w.geometry, w.i_rf, p)
    return jac[0] if single else jac


# ---------------------------------------------------------------------------
# field zeros


def _bmag2_and_grad(assembly: WireAssembly, x: np.ndarray):
    b = b_dc(assembly, x, check=False)
    jac = b_dc_jacobian(assembly, x, check=False)
    return float(b @ b), 2.0 * (jac.T @ b)


def find_field_zeros(assembly: WireAssembly, grid: GridSpec,
                     threshold: float | None = None) -> FieldZeros:
    """Locate |B_DC| zeros inside the grid's box.

    Valid grid nodes that are (non-strict) local minima of |B_DC| over the
    6-neighborhood seed a bounded descent on |B|^2; refined points below the
    threshold are deduplicated within one cell diagonal and returned in
    lexicographic order. An empty result is valid.
    """
    from scipy.optimize import minimize

    if min(grid.resolution) < 8:
        raise ValueError("zero search requires grid resolution >= 8 per axis")
    threshold = assembly.zero_threshold if threshold is None else float(threshold)

    points = grid.nodes()
    valid = off_fence(assembly, points)
    bmag = np.full(grid.n_nodes, np.inf)
    bvec = b_dc(assembly, points[valid], check=False)
    bmag[valid] = np.linalg.norm(bvec, axis=1)

    nx, ny, nz = grid.resolution
    vol = bmag.reshape(nz, ny, nx).transpose(2, 1, 0)
    is_min = np.isfinite(vol)
    for axis in range(3):
        lo = np.roll(vol, 1, axis=axis)
        hi = np.roll(vol, -1, axis=axis)
        edge_lo = [slice(None)] * 3
        edge_lo[axis] = 0
        edge_hi = [slice(None)] * 3
        edge_hi[axis] = -1
        lo[tuple(edge_lo)] = np.inf
        hi[tuple(edge_hi)] = np.inf
        is_min &= (vol <= lo) & (vol <= hi)

    seeds_idx = np.argwhere(is_min)
    axes = grid.axes()
    box = grid.box
    bounds = list(zip(box.lo, box.hi))
    refined = []
    for i, j, k in seeds_idx:
        x0 = np.array([axes[0][i], axes[1][j], axes[2][k]])
        res = minimize(lambda x: _bmag2_and_grad(assembly, x), x0, jac=True,
                       method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 200, "ftol": 1e-30, "gtol": 1e-30})
        if np.sqrt(max(res.fun, 0.0)) < threshold and box.contains(res.x):
            if off_fence(assembly, res.x):
                refined.append(res.x)

    zeros = _dedupe_points(refined, grid.cell_diagonal)
    return FieldZeros(zeros=zeros, threshold=threshold, domain=box)


def _dedupe_points(points, min_separation: float) -> np.ndarray:
    if not len(points):
        return np.zeros((0, 3))
    pts = np.asarray(points, dtype=float)
    pts = pts[np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))]
    kept: list[np.ndarray] = []
    for p in pts:
        if all(np.linalg.norm(p - q) > min_separation for q in kept):
            kept.append(p)
    return np.asarray(kept)
