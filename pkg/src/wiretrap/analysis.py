"""Trap analysis: grid sampling, minimum surfaces, barriers, critical currents.

Builds on the dressed potential to locate the trapping surface around each
wire, the saddle point between neighboring traps, the barrier heights seen
from each well, and the critical value of a scene parameter at which the
barrier closes and atoms can cross.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import dressed as dr
from . import magnetostatics as mag
from .errors import MinimumNotFoundError, NoBracketError, SaddleConvergenceError, \
    UnsupportedConfigurationError
from .grids import Box, GridSpec, ScalarField3D, sample_scalar_grid
from .model import CODATA, resonance_field
from .parallel import resolve_workers

# potential energies are ~1e-28 J; this penalty marks invalid samples while
# staying finite for the optimizers
_INVALID_PENALTY = 1.0e-20

SELECTOR_NAMES = ("potential", "bmag", "delta", "rabi", "brf")


# ---------------------------------------------------------------------------
# grid sampling


def _select(selector: str, params: dr.DressedParams, assembly: mag.WireAssembly,
            points: np.ndarray):
    p = np.atleast_2d(points)
    if selector == "bmag":
        valid = mag.off_fence(assembly, p)
        vals = np.full(len(p), np.nan)
        if np.any(valid):
            vals[valid] = np.linalg.norm(mag.b_dc(assembly, p[valid], check=False), axis=1)
        return vals, valid
    if selector == "brf":
        valid = mag.off_fence(assembly, p)
        vals = np.full(len(p), np.nan)
        if np.any(valid):
            vals[valid] = np.linalg.norm(
                mag.b_rf_amplitude(assembly, p[valid], check=False), axis=1)
        return vals, valid
    out = dr.evaluate(params, assembly, p, need_grad=False)
    ok = out["flags"] == dr.OK
    if selector == "potential":
        return out["U"], ok
    if selector == "delta":
        return out["delta"], ok
    if selector == "rabi":
        return out["rabi"], ok
    raise ValueError(f"unknown selector {selector!r}; expected one of {SELECTOR_NAMES}")


class _GridJob:
    """Picklable node evaluator for worker pools."""

    def __init__(self, selector, params, assembly):
        self.selector = selector
        self.params = params
        self.assembly = assembly

    def __call__(self, points):
        return _select(self.selector, self.params, self.assembly, points)


def sample_grid(selector: str, params: dr.DressedParams, assembly: mag.WireAssembly,
                spec: GridSpec, workers: int | None = None) -> ScalarField3D:
    """Sample a scalar (potential, |B_dc|, detuning, Rabi, |B_rf|) on a grid.

    Fenced nodes and quantization-axis failures are masked, never poisoning
    neighbors. Output is deterministic and independent of worker count.
    """
    if selector not in SELECTOR_NAMES:
        raise ValueError(f"unknown selector {selector!r}; expected one of {SELECTOR_NAMES}")
    job = _GridJob(selector, params, assembly)
    return sample_scalar_grid(job, spec, workers=resolve_workers(workers))


# ---------------------------------------------------------------------------
# radial minima and minimum surfaces


def transverse_frame(line: mag.InfiniteLine) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-handed frame (e1, e2) perpendicular to the axis."""
    axis = line.direction
    ref = np.zeros(3)
    ref[int(np.argmin(np.abs(axis)))] = 1.0
    e1 = ref - (ref @ axis) * axis
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return e1, e2


def _require_line(assembly: mag.WireAssembly, wire_index: int) -> mag.InfiniteLine:
    geom = assembly.wires[wire_index].geometry
    if not isinstance(geom, mag.InfiniteLine):
        raise UnsupportedConfigurationError(
            "radial trap analysis requires an infinite-line wire geometry")
    return geom


@dataclass(frozen=True)
class RadialMinimum:
    """Radial location of the potential minimum along one ray."""

    wire_index: int
    azimuth: float
    axial: float
    radius: float
    position: np.ndarray
    sample: dr.PotentialSample


def _ray_points(line: mag.InfiniteLine, azimuth: float, axial: float,
                radii: np.ndarray) -> np.ndarray:
    e1, e2 = transverse_frame(line)
    radial_dir = math.cos(azimuth) * e1 + math.sin(azimuth) * e2
    base = line.point + axial * line.direction
    return base[None, :] + np.asarray(radii)[:, None] * radial_dir[None, :]


def radial_trap_minimum(params: dr.DressedParams, assembly: mag.WireAssembly,
                        wire_index: int, azimuth: float, axial: float,
                        search_range: tuple[float, float],
                        xatol: float = 1e-10) -> RadialMinimum:
    """Minimize U along the radial ray from a wire's axis.

    Bounded 1-D minimization (bracketing plus parabolic refinement); raises
    MinimumNotFoundError when the minimizer sits on the range boundary.
    """
    line = _require_line(assembly, wire_index)
    lo, hi = float(search_range[0]), float(search_range[1])
    if not (0.0 < lo < hi):
        raise ValueError("search range must satisfy 0 < lo < hi")
    if lo < assembly.eps_axis:
        raise ValueError("search range must exclude the wire axis fence")

    def u_of(rho: float) -> float:
        pt = _ray_points(line, azimuth, axial, np.array([rho]))
        u, ok = dr.potential_only(params, assembly, pt)
        return float(u[0]) if ok[0] else _INVALID_PENALTY

    res = minimize_scalar(u_of, bounds=(lo, hi), method="bounded",
                          options={"xatol": xatol, "maxiter": 500})
    rho_min = float(res.x)
    edge = 4.0 * max(xatol, 1e-15 * (hi - lo))
    if rho_min - lo <= edge or hi - rho_min <= edge:
        raise MinimumNotFoundError(
            f"no interior minimum along azimuth {azimuth:.3f}, axial {axial:.3e}")
    if res.fun >= _INVALID_PENALTY:
        raise MinimumNotFoundError("radial ray has no valid samples")
    position = _ray_points(line, azimuth, axial, np.array([rho_min]))[0]
    sample = dr.dressed_potential(params, assembly, position)
    return RadialMinimum(wire_index=wire_index, azimuth=azimuth, axial=axial,
                         radius=rho_min, position=position, sample=sample)


def _golden_vector_min(u_fn, lo: np.ndarray, hi: np.ndarray, xatol: float):
    """Golden-section minimization running on arrays of independent brackets."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a = lo.astype(float).copy()
    b = hi.astype(float).copy()
    span = float(np.max(b - a))
    n_iter = max(1, int(math.ceil(math.log(max(xatol, 1e-300) / span)
                                  / math.log(invphi))))
    for _ in range(n_iter):
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        left = u_fn(c) < u_fn(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    mid = 0.5 * (a + b)
    return mid, u_fn(mid), a, b


@dataclass(frozen=True)
class MinimumSurface:
    """Per (azimuth, axial) cell: radius and potential of the radial minimum."""

    wire_index: int
    azimuths: np.ndarray      # (na,)
    axials: np.ndarray        # (ns,)
    radii: np.ndarray         # (na, ns), NaN where not found
    potential: np.ndarray     # (na, ns) [J]
    positions: np.ndarray     # (na, ns, 3) [m]
    found: np.ndarray         # (na, ns) bool

    @property
    def n_found(self) -> int:
        return int(np.count_nonzero(self.found))


def minimum_surface(params: dr.DressedParams, assembly: mag.WireAssembly,
                    wire_index: int, azimuths, axials,
                    search_range: tuple[float, float],
                    xatol: float = 1e-9) -> MinimumSurface:
    """Radial minimum over an (azimuth x axial) grid around one wire.

    Cells whose minimizer hits the search-range boundary (or that have no
    valid samples) are recorded as not found rather than failing the scan.
    """
    line = _require_line(assembly, wire_index)
    azimuths = np.asarray(azimuths, dtype=float)
    axials = np.asarray(axials, dtype=float)
    lo, hi = float(search_range[0]), float(search_range[1])
    if lo < assembly.eps_axis:
        raise ValueError("search range must exclude the wire axis fence")
    e1, e2 = transverse_frame(line)
    az_grid, ax_grid = np.meshgrid(azimuths, axials, indexing="ij")
    az_flat = az_grid.ravel()
    ax_flat = ax_grid.ravel()
    dirs = (np.cos(az_flat)[:, None] * e1[None, :]
            + np.sin(az_flat)[:, None] * e2[None, :])
    bases = line.point[None, :] + ax_flat[:, None] * line.direction[None, :]

    def u_at(radii: np.ndarray) -> np.ndarray:
        pts = bases + radii[:, None] * dirs
        u, ok = dr.potential_only(params, assembly, pts)
        return np.where(ok, u, _INVALID_PENALTY)

    n = len(az_flat)
    rho, u_min, a_fin, b_fin = _golden_vector_min(
        u_at, np.full(n, lo), np.full(n, hi), xatol)
    edge = 4.0 * xatol
    found = (rho - lo > edge) & (hi - rho > edge) & (u_min < _INVALID_PENALTY)
    positions = bases + rho[:, None] * dirs
    shape = (len(azimuths), len(axials))
    return MinimumSurface(
        wire_index=wire_index, azimuths=azimuths, axials=axials,
        radii=np.where(found, rho, np.nan).reshape(shape),
        potential=np.where(found, u_min, np.nan).reshape(shape),
        positions=positions.reshape(shape + (3,)),
        found=found.reshape(shape),
    )


def surface_mesh(surface: MinimumSurface) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate a minimum surface (closed in azimuth) for export.

    Quads between fully-found corner cells are split into two triangles.
    """
    na, ns = surface.found.shape
    verts = surface.positions.reshape(-1, 3)
    tris = []
    for i in range(na):
        i2 = (i + 1) % na
        for j in range(ns - 1):
            corners = [(i, j), (i2, j), (i2, j + 1), (i, j + 1)]
            if not all(surface.found[a, b] for a, b in corners):
                continue
            idx = [a * ns + b for a, b in corners]
            tris.append([idx[0], idx[1], idx[2]])
            tris.append([idx[0], idx[2], idx[3]])
    return verts, np.asarray(tris, dtype=np.int64).reshape(-1, 3)


# ---------------------------------------------------------------------------
# local descent and elastic-band saddle search


def _fgrad_factory(params: dr.DressedParams, assembly: mag.WireAssembly):
    def fgrad(points: np.ndarray):
        u, g, ok = dr.potential_and_gradient(params, assembly, np.atleast_2d(points))
        u = np.where(ok, u, _INVALID_PENALTY)
        g = np.where(ok[:, None], g, 0.0)
        return u, g
    return fgrad


def descend_to_minimum(params: dr.DressedParams, assembly: mag.WireAssembly,
                       seed, bounds: Box | None = None,
                       length_scale: float | None = None) -> tuple[np.ndarray, float]:
    """Local minimization of U from a seed point; returns (position, U).

    Runs in dimensionless coordinates (positions over a length scale, U over
    the dressed energy quantum) so the optimizer's tolerances are meaningful
    at trap energy scales of ~1e-28 J.
    """
    fgrad = _fgrad_factory(params, assembly)
    seed = np.asarray(seed, dtype=float)
    if length_scale is None:
        length_scale = max(float(np.linalg.norm(seed)), 1e-5)
    u_scale = abs(params.species.dressed_level) * CODATA.hbar * params.drive.omega

    def fun(xi):
        u, g = fgrad(xi[None, :] * length_scale)
        return u[0] / u_scale, g[0] * (length_scale / u_scale)

    if bounds is not None:
        box_bounds = [(lo / length_scale, hi / length_scale)
                      for lo, hi in zip(bounds.lo, bounds.hi)]
    else:
        box_bounds = None
    res = minimize(fun, seed / length_scale, jac=True, method="L-BFGS-B",
                   bounds=box_bounds,
                   options={"maxiter": 1000, "ftol": 1e-16, "gtol": 1e-12})
    return res.x * length_scale, float(res.fun) * u_scale


@dataclass(frozen=True)
class BarrierResult:
    """Well minima, saddle, and barrier heights with convergence diagnostics."""

    min_a: np.ndarray
    u_a: float
    min_b: np.ndarray
    u_b: float
    saddle: np.ndarray
    u_saddle: float
    barrier_a: float
    barrier_b: float
    path: np.ndarray          # (n_points, 3) relaxed band including endpoints
    converged: bool
    grad_residual: float      # |grad U| at the climbing image
    hessian_index: int        # negative eigenvalues of the saddle Hessian
    iterations: int
    touching: bool | None = None
    touch_tolerance: float | None = None
    warnings: tuple[str, ...] = ()

    @property
    def barrier(self) -> float:
        return min(self.barrier_a, self.barrier_b)


def _neb_tangents(path: np.ndarray, energies: np.ndarray) -> np.ndarray:
    """Energy-weighted upwind tangents for the interior images."""
    n = len(path)
    tangents = np.zeros((n - 2, 3))
    for idx, i in enumerate(range(1, n - 1)):
        d_fwd = path[i + 1] - path[i]
        d_bwd = path[i] - path[i - 1]
        u_prev, u_here, u_next = energies[i - 1], energies[i], energies[i + 1]
        if u_next > u_here > u_prev:
            t = d_fwd
        elif u_next < u_here < u_prev:
            t = d_bwd
        else:
            du_max = max(abs(u_next - u_here), abs(u_prev - u_here))
            du_min = min(abs(u_next - u_here), abs(u_prev - u_here))
            if u_next > u_prev:
                t = d_fwd * du_max + d_bwd * du_min
            else:
                t = d_fwd * du_min + d_bwd * du_max
        norm = np.linalg.norm(t)
        tangents[idx] = t / norm if norm > 0 else d_fwd / max(np.linalg.norm(d_fwd), 1e-300)
    return tangents


def _newton_refine(fgrad, x0: np.ndarray, tol_grad: float, h: float,
                   max_step: float, max_iter: int = 40):
    """Eigenvector-following refinement of an index-1 saddle (3x3 system).

    Partitioned rational-function steps: ascend along the lowest Hessian
    mode, descend along the others, with per-mode shifts that keep every
    denominator bounded away from zero whatever the local Hessian
    signature. Trust radius max_step.
    """
    x = np.asarray(x0, dtype=float).copy()
    best = (math.inf, x.copy())
    for _ in range(max_iter):
        _, g = fgrad(x[None, :])
        g = g[0]
        g_norm = float(np.linalg.norm(g))
        if not np.isfinite(g_norm):
            return best[1], False
        if g_norm < best[0]:
            best = (g_norm, x.copy())
        if g_norm <= tol_grad:
            return x, True
        hess = _fd_hessian(fgrad, x, h)
        lam, vecs = np.linalg.eigh(hess)
        f = vecs.T @ g
        step = np.zeros(3)
        # mode 0 (lowest curvature): move uphill
        shift_up = 0.5 * (lam[0] + math.hypot(lam[0], 2.0 * f[0]))
        step += -f[0] / min(lam[0] - shift_up, -1e-300) * vecs[:, 0]
        for i in (1, 2):
            shift_dn = 0.5 * (lam[i] - math.hypot(lam[i], 2.0 * f[i]))
            step += -f[i] / max(lam[i] - shift_dn, 1e-300) * vecs[:, i]
        s_norm = float(np.linalg.norm(step))
        if not np.isfinite(s_norm) or s_norm == 0.0:
            return best[1], False
        if s_norm > max_step:
            step *= max_step / s_norm
        x = x + step
    return best[1], best[0] <= tol_grad


def _resample_polyline(nodes: np.ndarray, n_points: int) -> np.ndarray:
    """Equal-arclength resampling of a polyline, endpoints preserved."""
    nodes = np.asarray(nodes, dtype=float)
    seg = np.diff(nodes, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = np.linspace(0.0, cum[-1], n_points)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    t = (s - cum[idx]) / np.where(lens[idx] > 0, lens[idx], 1.0)
    return nodes[idx] + t[:, None] * seg[idx]


def neb_saddle(fgrad, end_a, end_b, n_images: int = 14, max_iter: int = 3000,
               tol_grad: float | None = None, spring: float | None = None,
               climb_delay: int = 10, waypoints=None,
               bounds: Box | None = None, polish_hint=None) -> BarrierResult:
    """Climbing-image elastic-band saddle search between two minima.

    fgrad(points (N,3)) -> (U (N,), grad (N,3)) evaluates the potential; the
    engine is potential-agnostic so synthetic landscapes can exercise it
    directly. FIRE relaxes the band; once the climbing image is close, a
    Newton polish on the 3x3 gradient system drives |grad U| below tol_grad.
    The saddle is verified by the finite-difference Hessian index.

    waypoints, when given, bend the initial band through intermediate
    points (e.g. the pinch between two trap surfaces) instead of the
    straight chord. bounds, when given, clamp the band inside the analysis
    box so images cannot drift off through slowly decaying tails.
    """
    end_a = np.asarray(end_a, dtype=float)
    end_b = np.asarray(end_b, dtype=float)
    dist = np.linalg.norm(end_b - end_a)
    if dist == 0.0:
        raise ValueError("degenerate endpoints: end_a == end_b")

    n_total = n_images + 2
    if waypoints is not None and len(waypoints):
        nodes = np.vstack([end_a, np.atleast_2d(np.asarray(waypoints, float)), end_b])
    else:
        nodes = np.vstack([end_a, end_b])
    path = _resample_polyline(nodes, n_total)
    u_ends, _ = fgrad(np.vstack([end_a, end_b]))
    path_len = float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))
    seg_len = path_len / (n_total - 1)

    u_int, g_int = fgrad(path[1:-1])
    g_scale = float(np.max(np.linalg.norm(g_int, axis=1)))
    if tol_grad is None:
        u_span = float(np.max(u_int) - min(u_ends))
        tol_grad = 1e-4 * max(u_span, 1e-300) / dist
    if spring is None:
        spring = max(g_scale, tol_grad) / seg_len
    fd_h = max(1e-4 * dist, 1e-13)

    # FIRE relaxation state
    vel = np.zeros_like(path[1:-1])
    dt = math.sqrt(0.01 * seg_len / max(g_scale, tol_grad, 1e-300))
    dt_max = 10.0 * dt
    alpha = 0.1
    n_pos = 0
    max_step = 0.5 * seg_len

    converged = False
    saddle = None
    residual = math.inf
    newton_trigger = 1e4 * tol_grad
    next_polish = 3 * climb_delay
    climb = -1
    iterations = 0
    for iterations in range(1, max_iter + 1):
        energies = np.concatenate([[u_ends[0]], u_int, [u_ends[1]]])
        tangents = _neb_tangents(path, energies)
        if iterations > climb_delay:
            climb = int(np.argmax(u_int))
        forces = np.empty_like(g_int)
        for i in range(len(u_int)):
            tau = tangents[i]
            g_par = (g_int[i] @ tau) * tau
            if i == climb:
                forces[i] = -g_int[i] + 2.0 * g_par
            else:
                len_fwd = np.linalg.norm(path[i + 2] - path[i + 1])
                len_bwd = np.linalg.norm(path[i + 1] - path[i])
                forces[i] = -(g_int[i] - g_par) + spring * (len_fwd - len_bwd) * tau

        if climb >= 0:
            residual = float(np.linalg.norm(g_int[climb]))
            if residual <= tol_grad:
                converged = True
                saddle = path[1 + climb].copy()
                break
            due = residual <= newton_trigger or iterations >= next_polish
            if due:
                next_polish = 2 * iterations
                starts = [path[1 + climb]]
                if polish_hint is not None:
                    starts.append(np.asarray(polish_hint, dtype=float))
                for start in starts:
                    cand, ok = _newton_refine(fgrad, start, tol_grad,
                                              fd_h, max_step=seg_len,
                                              max_iter=60)
                    moved = np.linalg.norm(cand - start)
                    inside = bounds is None or bounds.contains(cand)
                    if ok and moved <= 6.0 * seg_len and inside:
                        converged = True
                        saddle = cand
                        break
                if converged:
                    break
                newton_trigger *= 0.1  # polish failed; relax further first

        # FIRE step
        power = float(np.sum(forces * vel))
        if power > 0:
            n_pos += 1
            f_norm = np.linalg.norm(forces)
            v_norm = np.linalg.norm(vel)
            if f_norm > 0:
                vel = (1 - alpha) * vel + alpha * v_norm * forces / f_norm
            if n_pos > 5:
                dt = min(dt * 1.1, dt_max)
                alpha *= 0.99
        else:
            vel[:] = 0.0
            dt *= 0.5
            alpha = 0.1
            n_pos = 0
        vel = vel + dt * forces
        step = dt * vel
        step_norm = np.linalg.norm(step, axis=1, keepdims=True)
        scale = np.where(step_norm > max_step,
                         max_step / np.maximum(step_norm, 1e-300), 1.0)
        path[1:-1] += step * scale
        if bounds is not None:
            np.clip(path[1:-1], np.asarray(bounds.lo), np.asarray(bounds.hi),
                    out=path[1:-1])
        u_int, g_int = fgrad(path[1:-1])

    if saddle is None:
        i_best = int(np.argmax(u_int))
        saddle = path[1 + i_best].copy()
    u_arr, g_arr = fgrad(saddle[None, :])
    u_saddle = float(u_arr[0])
    residual = float(np.linalg.norm(g_arr[0]))
    converged = converged and residual <= tol_grad

    hess = _fd_hessian(fgrad, saddle, h=fd_h)
    eigvals = np.linalg.eigvalsh(hess)
    neg_tol = 1e-8 * max(np.max(np.abs(eigvals)), 1e-300)
    hessian_index = int(np.sum(eigvals < -neg_tol))

    warnings = ()
    if converged and hessian_index != 1:
        warnings = (f"degenerate saddle: Hessian index {hessian_index}",)

    result = BarrierResult(
        min_a=end_a, u_a=float(u_ends[0]), min_b=end_b, u_b=float(u_ends[1]),
        saddle=saddle, u_saddle=u_saddle,
        barrier_a=u_saddle - float(u_ends[0]), barrier_b=u_saddle - float(u_ends[1]),
        path=path.copy(), converged=converged, grad_residual=residual,
        hessian_index=hessian_index, iterations=iterations, warnings=warnings)
    if not converged:
        raise SaddleConvergenceError(
            f"climbing image not converged after {iterations} iterations "
            f"(|grad| = {residual:.3e}, tol {tol_grad:.3e})", best_result=result)
    return result


def _fd_hessian(fgrad, x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Hessian from gradients (symmetrized)."""
    hess = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        _, g_plus = fgrad((x + e)[None, :])
        _, g_minus = fgrad((x - e)[None, :])
        hess[:, k] = (g_plus[0] - g_minus[0]) / (2 * h)
    return 0.5 * (hess + hess.T)


def find_saddle(params: dr.DressedParams, assembly: mag.WireAssembly,
                end_a, end_b, n_images: int = 14, max_iter: int = 3000,
                tol_grad: float | None = None) -> BarrierResult:
    """Climbing-image band between two potential minima of the scene."""
    fgrad = _fgrad_factory(params, assembly)
    if tol_grad is not None:
        for name, end in (("end_a", end_a), ("end_b", end_b)):
            _, g = fgrad(np.asarray(end, dtype=float)[None, :])
            if np.linalg.norm(g[0]) > 10 * tol_grad:
                raise ValueError(f"{name} is not a relaxed minimum (|grad| too large)")
    return neb_saddle(fgrad, end_a, end_b, n_images=n_images, max_iter=max_iter,
                      tol_grad=tol_grad)


# ---------------------------------------------------------------------------
# barrier height and touching status


@dataclass(frozen=True)
class BarrierOptions:
    """Knobs for well location, band relaxation, and the touching criterion."""

    bounds: Box | None = None
    n_images: int = 14
    max_iter: int = 3000
    tol_grad: float | None = None
    touch_tol: float | None = None        # None: 1e-3 x shallower well depth
    touch_tol_fraction: float = 1e-3
    surface_azimuths: int = 24
    surface_axials: int = 9
    axial_extent: float | None = None     # None: 4x resonance radius
    search_range: tuple[float, float] | None = None
    fallback_to_pass: bool = True         # use route pass when the band stalls


def _wire_anchor(geometry: mag.Geometry) -> np.ndarray:
    if isinstance(geometry, mag.InfiniteLine):
        return np.asarray(geometry.point)
    return np.asarray(geometry.vertices).mean(axis=0)


def default_analysis_box(params: dr.DressedParams, assembly: mag.WireAssembly,
                         options: "BarrierOptions") -> Box:
    """Cube around the wire anchors sized by the largest resonance radius.

    Well positions are only meaningful relative to an analysis domain (the
    potential keeps decaying slowly along each wire), so the box scales with
    the trap size unless the caller pins one explicitly.
    """
    b_res = resonance_field(params.species, params.drive)
    rho_max = max(CODATA.mu0 * abs(w.i_dc) / (2 * math.pi * b_res)
                  for w in assembly.wires)
    if rho_max <= 0.0:
        raise MinimumNotFoundError("no wire carries DC current")
    extent = options.axial_extent if options.axial_extent is not None \
        else 4.0 * rho_max
    half = extent + 2.0 * rho_max
    center = np.mean([_wire_anchor(w.geometry) for w in assembly.wires], axis=0)
    return Box(tuple(center - half), tuple(center + half))


def _scan_surface(params, assembly, wire_index, options: "BarrierOptions"):
    wire = assembly.wires[wire_index]
    if wire.i_dc == 0.0:
        raise MinimumNotFoundError(
            f"wire {wire_index} carries no DC current: no trap surface")
    b_res = resonance_field(params.species, params.drive)
    rho_guess = CODATA.mu0 * abs(wire.i_dc) / (2 * math.pi * b_res)
    extent = options.axial_extent if options.axial_extent is not None \
        else 4.0 * rho_guess
    rng = options.search_range if options.search_range is not None \
        else (0.05 * rho_guess, 5.0 * rho_guess)
    azimuths = np.linspace(0.0, 2 * math.pi, options.surface_azimuths,
                           endpoint=False)
    axials = np.linspace(-extent, extent, options.surface_axials)
    surf = minimum_surface(params, assembly, wire_index, azimuths, axials, rng)
    if surf.n_found == 0:
        raise MinimumNotFoundError(f"no trap surface found around wire {wire_index}")
    return surf


def _canonical_best_cell(surf: MinimumSurface) -> tuple[int, int]:
    """Lowest-U cell with noise-proof tie-breaking.

    Symmetric scenes have wells identical to rounding; picking the raw
    argmin would select a side from float noise. Cells within a relative
    1e-9 of the minimum count as tied; the tie goes to the largest axial
    coordinate, then the lowest azimuth index.
    """
    pot = np.where(surf.found, surf.potential, np.inf)
    u0 = float(np.min(pot))
    tol = abs(u0) * 1e-9 + 1e-300
    ties = np.argwhere(pot <= u0 + tol)
    ax = surf.axials[ties[:, 1]]
    order = np.lexsort((ties[:, 0], -ax))
    i_az, i_ax = ties[order[0]]
    return int(i_az), int(i_ax)


def default_well_seeds(params: dr.DressedParams, assembly: mag.WireAssembly,
                       options: BarrierOptions = BarrierOptions()) -> list[np.ndarray]:
    """One seed per wire: lowest-U cell of a coarse minimum surface."""
    seeds = []
    for idx in range(len(assembly.wires)):
        surf = _scan_surface(params, assembly, idx, options)
        i_az, i_ax = _canonical_best_cell(surf)
        seeds.append(surf.positions[i_az, i_ax])
    return seeds


def minimax_connect(n_nodes: int, edges, node_a: int, node_b: int):
    """Lowest-bottleneck connection between two nodes of a weighted graph.

    edges as (level, i, j) triples; they enter in ascending level order into
    a union-find until node_a and node_b join (Kruskal bottleneck path).
    Returns (pass_level, path) with path a node-index route found by BFS
    over the admitted edges, or None when the nodes never connect.
    """
    from collections import deque

    edges = sorted(edges, key=lambda e: e[0])
    parent = np.arange(n_nodes, dtype=np.int64)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    pass_level = None
    n_used = 0
    for level, i, j in edges:
        if not np.isfinite(level):
            break
        n_used += 1
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
        if find(node_a) == find(node_b):
            pass_level = float(level)
            break
    if pass_level is None:
        return None

    adj: dict[int, list[int]] = {}
    for level, i, j in edges[:n_used]:
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    prev = {node_a: node_a}
    queue = deque([node_a])
    while queue:
        cur = queue.popleft()
        if cur == node_b:
            break
        for nb in adj.get(cur, ()):
            if nb not in prev:
                prev[nb] = cur
                queue.append(nb)
    path = []
    if node_b in prev:
        cur = node_b
        while cur != node_a:
            path.append(cur)
            cur = prev[cur]
        path.append(node_a)
        path.reverse()
    return pass_level, path


@dataclass(frozen=True)
class RoutePlan:
    """Minimax transfer route over the two trap surfaces."""

    pass_value: float        # [J] bottleneck level of the route
    doorway: np.ndarray      # highest-U point on the route
    waypoints: np.ndarray    # decimated route nodes (interior)
    seed_a: np.ndarray
    seed_b: np.ndarray


def _route_hop_level(params, assembly, p_from, p_to, n_samples: int = 9) -> float:
    seg = p_from[None, :] + np.linspace(0.0, 1.0, n_samples)[:, None] \
        * (p_to - p_from)[None, :]
    u, ok = dr.potential_only(params, assembly, seg)
    if not np.all(ok):
        return math.inf
    return float(np.max(u))


def plan_transfer_route(params: dr.DressedParams, assembly: mag.WireAssembly,
                        options: "BarrierOptions",
                        wire_a: int = 0, wire_b: int = 1) -> RoutePlan | None:
    """Bottleneck route between the two wells along the trap surfaces.

    The route graph lives on the sampled minimum surfaces (grid adjacency
    on each surface, azimuth wrapping) plus hop edges between nearby cells
    of the two surfaces, each hop weighted by the largest potential sampled
    along its straight segment. The lowest-bottleneck route gives a robust
    initial band and a pass-height barrier estimate that stays accurate
    however thin the trap shell is compared to the domain.
    """
    surf_a = _scan_surface(params, assembly, wire_a, options)
    surf_b = _scan_surface(params, assembly, wire_b, options)

    def surface_nodes(surf, offset):
        cells = np.argwhere(surf.found)
        index = {(int(i), int(j)): offset + k for k, (i, j) in enumerate(cells)}
        pos = surf.positions[cells[:, 0], cells[:, 1]]
        pot = surf.potential[cells[:, 0], cells[:, 1]]
        return cells, index, pos, pot

    cells_a, index_a, pos_a, pot_a = surface_nodes(surf_a, 0)
    cells_b, index_b, pos_b, pot_b = surface_nodes(surf_b, len(cells_a))
    n_nodes = len(cells_a) + len(cells_b)
    if len(cells_a) == 0 or len(cells_b) == 0:
        return None

    edges = []

    def add_grid_edges(surf, cells, index, pot, offset):
        naz = len(surf.azimuths)
        for k, (i, j) in enumerate(cells):
            i, j = int(i), int(j)
            for di, dj in (((i + 1) % naz, j), (i, j + 1)):
                other = index.get((di, dj))
                if other is not None:
                    lvl = max(pot[k], pot[other - offset])
                    edges.append((lvl, offset + k, other))

    add_grid_edges(surf_a, cells_a, index_a, pot_a, 0)
    add_grid_edges(surf_b, cells_b, index_b, pot_b, len(cells_a))

    # hop edges: every pair of nearby cells, and always the closest few so
    # the graph stays connected even when the surfaces are far apart
    d2 = np.sum((pos_a[:, None, :] - pos_b[None, :, :]) ** 2, axis=2)
    scale = max(float(np.sqrt(d2.min())), 1e-12)
    hop_radius = max(2.0 * scale, 0.2 * float(np.nanmedian(surf_a.radii)))
    pairs = np.argwhere(d2 <= hop_radius ** 2)
    if len(pairs) > 400:
        order = np.argsort(d2[pairs[:, 0], pairs[:, 1]])
        pairs = pairs[order[:400]]
    closest = np.dstack(np.unravel_index(np.argsort(d2, axis=None)[:8], d2.shape))[0]
    pairs = np.unique(np.vstack([pairs, closest]), axis=0)
    for ia, ib in pairs:
        lvl = _route_hop_level(params, assembly, pos_a[ia], pos_b[ib])
        edges.append((lvl, int(ia), len(cells_a) + int(ib)))

    def well_node(surf, cells, offset):
        i_az, i_ax = _canonical_best_cell(surf)
        match = np.nonzero((cells[:, 0] == i_az) & (cells[:, 1] == i_ax))[0]
        return offset + int(match[0])

    well_a = well_node(surf_a, cells_a, 0)
    well_b = well_node(surf_b, cells_b, len(cells_a))
    got = minimax_connect(n_nodes, edges, well_a, well_b)
    if got is None:
        return None
    pass_value, path = got

    all_pos = np.vstack([pos_a, pos_b])
    all_pot = np.concatenate([pot_a, pot_b])
    path_pts = all_pos[path]

    # doorway: the worst element along the route; for a hop edge that is the
    # highest sample on its straight segment, otherwise the worst node
    edge_level = {}
    for level, i, j in edges:
        key = (min(i, j), max(i, j))
        edge_level[key] = min(edge_level.get(key, math.inf), level)
    doorway = path_pts[int(np.argmax(all_pot[path]))]
    worst = float(np.max(all_pot[path]))
    for a_node, b_node in zip(path[:-1], path[1:]):
        lvl = edge_level.get((min(a_node, b_node), max(a_node, b_node)), -math.inf)
        if lvl > worst:
            worst = lvl
            seg = _resample_polyline(all_pos[[a_node, b_node]], 9)
            u_seg, ok_seg = dr.potential_only(params, assembly, seg)
            u_seg = np.where(ok_seg, u_seg, -math.inf)
            doorway = seg[int(np.argmax(u_seg))]
    pass_value = max(pass_value, worst)

    waypoints = path_pts[1:-1] if len(path_pts) > 2 else path_pts
    return RoutePlan(pass_value=pass_value, doorway=doorway,
                     waypoints=waypoints, seed_a=all_pos[well_a],
                     seed_b=all_pos[well_b])


def barrier_height(params: dr.DressedParams, assembly: mag.WireAssembly,
                   seed_a, seed_b, options: BarrierOptions = BarrierOptions(),
                   waypoints=None) -> BarrierResult:
    """Descend both seeds to minima, relax the band, report barrier heights.

    Unless waypoints are supplied, the initial band follows the minimax
    route found by flooding the analysis box on a coarse grid (the route
    through the lowest pass between the two basins), which keeps the band
    out of the steep tube interiors whatever the geometry. Adds the
    touching status: barrier <= touch tolerance, with the tolerance
    defaulting to touch_tol_fraction of the shallower well depth measured
    along the straight inter-well line.
    """
    bounds = options.bounds if options.bounds is not None \
        else default_analysis_box(params, assembly, options)
    min_a, u_a = descend_to_minimum(params, assembly, seed_a, bounds=bounds)
    min_b, u_b = descend_to_minimum(params, assembly, seed_b, bounds=bounds)
    if np.linalg.norm(min_a - min_b) < 1e-12 + 1e-6 * np.linalg.norm(min_a):
        raise ValueError("seeds descend to the same minimum; wells are degenerate")

    plan = None
    n_images = options.n_images
    if waypoints is None:
        plan = plan_transfer_route(params, assembly, options)
        if plan is not None:
            waypoints = plan.waypoints
            # enough images that the band resolves the route's turns
            n_images = max(n_images, min(len(waypoints), 40))

    fgrad = _fgrad_factory(params, assembly)

    def pass_fallback(note: str) -> BarrierResult:
        u_sad = plan.pass_value
        route = np.vstack([min_a[None, :], plan.waypoints, min_b[None, :]])
        _, g_door = fgrad(plan.doorway[None, :])
        return BarrierResult(
            min_a=min_a, u_a=u_a, min_b=min_b, u_b=u_b,
            saddle=plan.doorway, u_saddle=u_sad,
            barrier_a=u_sad - u_a, barrier_b=u_sad - u_b, path=route,
            converged=False, grad_residual=float(np.linalg.norm(g_door[0])),
            hessian_index=-1, iterations=0, warnings=(note,))

    try:
        result = neb_saddle(fgrad, min_a, min_b, n_images=n_images,
                            max_iter=options.max_iter,
                            tol_grad=options.tol_grad,
                            waypoints=waypoints, bounds=bounds,
                            polish_hint=None if plan is None else plan.doorway)
    except SaddleConvergenceError as exc:
        if plan is None or not options.fallback_to_pass:
            raise
        best = exc.best_result
        note = ("band relaxation not converged "
                f"(residual {best.grad_residual:.2e}); "
                "barrier falls back to the route pass height")
        result = pass_fallback(note)

    touch_tol = options.touch_tol
    if touch_tol is None:
        t = np.linspace(0.0, 1.0, 257)
        line_pts = min_a[None, :] + t[:, None] * (min_b - min_a)[None, :]
        u_line, ok = dr.potential_only(params, assembly, line_pts)
        u_line = u_line[ok]
        ridge = float(np.max(u_line)) if u_line.size else max(u_a, u_b)
        depth = min(ridge - u_a, ridge - u_b)
        touch_tol = options.touch_tol_fraction * max(depth, 0.0)

    touching = result.barrier <= touch_tol
    return replace(result, touching=touching, touch_tolerance=touch_tol)


# ---------------------------------------------------------------------------
# parameter application, critical search, sweeps

PARAMETER_NAMES = ("idc", "irf", "bias_x", "bias_y", "bias_z", "frequency")


def apply_parameter(params: dr.DressedParams, assembly: mag.WireAssembly,
                    name: str, value: float):
    """Return (params, assembly) with one scene parameter replaced.

    idc / irf set the corresponding current on every wire (the scene's
    single-knob convention); bias_* sets one bias component; frequency
    replaces the drive everywhere it appears.
    """
    if name == "idc":
        wires = tuple(replace(w, i_dc=float(value)) for w in assembly.wires)
        return params, replace(assembly, wires=wires)
    if name == "irf":
        wires = tuple(replace(w, i_rf=float(value)) for w in assembly.wires)
        return params, replace(assembly, wires=wires)
    if name in ("bias_x", "bias_y", "bias_z"):
        bias = np.array(assembly.bias, dtype=float)
        bias["xyz".index(name[-1])] = float(value)
        return params, assembly.with_bias(bias)
    if name == "frequency":
        from .model import RFDrive
        drive = RFDrive(float(value))
        return (replace(params, drive=drive), replace(assembly, drive=drive))
    raise ValueError(f"unknown parameter {name!r}; expected one of {PARAMETER_NAMES}")


def axis_distance(line_a: mag.InfiniteLine, line_b: mag.InfiniteLine) -> float:
    """Distance between two infinite lines (0 when they intersect)."""
    n = np.cross(line_a.direction, line_b.direction)
    dp = line_b.point - line_a.point
    n_norm = np.linalg.norm(n)
    if n_norm < 1e-12:  # parallel
        perp = dp - (dp @ line_a.direction) * line_a.direction
        return float(np.linalg.norm(perp))
    return float(abs(dp @ n) / n_norm)


def geometric_separation(params: dr.DressedParams, assembly: mag.WireAssembly) -> float:
    """Gap between the two isolated-wire resonance cylinders [m].

    Diagnostic observable: wire-axis distance minus the sum of single-wire
    resonance radii mu0 |i_dc| / (2 pi B_res). Negative once the cylinders
    overlap. Exact oracle for parallel-wire scenes.
    """
    if len(assembly.wires) != 2:
        raise UnsupportedConfigurationError(
            "geometric mode needs exactly two wires")
    lines = []
    for w in assembly.wires:
        if not isinstance(w.geometry, mag.InfiniteLine):
            raise UnsupportedConfigurationError(
                "geometric mode needs infinite-line wires")
        lines.append(w.geometry)
    b_res = resonance_field(params.species, params.drive)
    radii = [CODATA.mu0 * abs(w.i_dc) / (2 * math.pi * b_res)
             for w in assembly.wires]
    return axis_distance(lines[0], lines[1]) - radii[0] - radii[1]


@dataclass(frozen=True)
class CriticalSearchResult:
    """Bisection outcome for the parameter value where the barrier closes."""

    parameter: str
    mode: str
    critical_value: float
    bracket: tuple[float, float]
    iterations: int
    barrier_at_solution: float    # [J] in full mode, [m] in geometric mode
    touch_tolerance: float
    tolerance_achieved: float     # final bracket width in parameter units
    warnings: tuple[str, ...] = ()


def _barrier_observable(params, assembly, name, value, mode, options,
                        touch_tol_frozen):
    p2, a2 = apply_parameter(params, assembly, name, value)
    if mode == "geometric":
        return geometric_separation(p2, a2)
    seeds = default_well_seeds(p2, a2, options)
    opts = replace(options, touch_tol=touch_tol_frozen) \
        if touch_tol_frozen is not None else options
    res = barrier_height(p2, a2, seeds[0], seeds[1], opts)
    return res.barrier


def critical_parameter(params: dr.DressedParams, assembly: mag.WireAssembly,
                       vary: str, bracket: tuple[float, float],
                       tol_param: float, mode: str = "full",
                       options: BarrierOptions = BarrierOptions(),
                       prescan: int = 9) -> CriticalSearchResult:
    """Bisection for the parameter value at which the barrier reaches zero.

    Full mode bisects the dressed-potential barrier against the touching
    tolerance (frozen at the closed-barrier bracket end so the criterion is
    identical across iterations). Geometric mode bisects the resonance
    cylinder separation, an analytic oracle. The returned value is the
    bracket endpoint on the touching side, so the result always satisfies
    barrier <= tolerance.
    """
    if mode not in ("full", "geometric"):
        raise ValueError("mode must be 'full' or 'geometric'")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")

    warnings: list[str] = []
    touch_tol = options.touch_tol
    if mode == "geometric":
        touch_tol = 0.0 if touch_tol is None else touch_tol

    def observable(value, frozen):
        return _barrier_observable(params, assembly, vary, value, mode,
                                   options, frozen)

    obs_lo = observable(lo, touch_tol)
    obs_hi = observable(hi, touch_tol)

    if mode == "full" and touch_tol is None:
        # freeze the touching tolerance using the closed-barrier end
        closed_value = lo if obs_lo >= obs_hi else hi
        p2, a2 = apply_parameter(params, assembly, vary, closed_value)
        seeds = default_well_seeds(p2, a2, options)
        ref = barrier_height(p2, a2, seeds[0], seeds[1], options)
        touch_tol = ref.touch_tolerance
        obs_lo = observable(lo, touch_tol)
        obs_hi = observable(hi, touch_tol)

    sign_lo = obs_lo > touch_tol
    sign_hi = obs_hi > touch_tol
    if sign_lo == sign_hi:
        raise NoBracketError(
            f"barrier does not straddle the touch tolerance on [{lo}, {hi}]: "
            f"{obs_lo:.3e} and {obs_hi:.3e} vs {touch_tol:.3e}")

    if prescan and prescan > 2:
        values = np.linspace(lo, hi, prescan)
        signs = []
        for v in values:
            signs.append(observable(v, touch_tol) > touch_tol)
        crossings = [float(values[i]) for i in range(len(values) - 1)
                     if signs[i] != signs[i + 1]]
        if len(crossings) > 1:
            warnings.append(
                "ambiguous bracket: barrier crosses the tolerance near "
                + ", ".join(f"{c:.6g}" for c in crossings))

    a, b = lo, hi
    sign_a = sign_lo
    obs_a, obs_b = obs_lo, obs_hi
    iterations = 0
    while b - a > tol_param:
        iterations += 1
        mid = 0.5 * (a + b)
        obs_mid = observable(mid, touch_tol)
        if (obs_mid > touch_tol) == sign_a:
            a, obs_a = mid, obs_mid
        else:
            b, obs_b = mid, obs_mid
        if iterations > 200:
            break

    # report the endpoint on the touching side
    if obs_a <= touch_tol:
        critical, barrier_at = a, obs_a
    else:
        critical, barrier_at = b, obs_b
    return CriticalSearchResult(
        parameter=vary, mode=mode, critical_value=float(critical),
        bracket=(float(a), float(b)), iterations=iterations,
        barrier_at_solution=float(barrier_at),
        touch_tolerance=float(touch_tol),
        tolerance_achieved=float(b - a), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# parameter sweeps

OBSERVABLES = ("barrier", "min_radius", "touching")


@dataclass(frozen=True)
class SweepRow:
    value: float
    observable: float


def parameter_sweep(params: dr.DressedParams, assembly: mag.WireAssembly,
                    vary: str, lo: float, hi: float, steps: int,
                    observe: str, options: BarrierOptions = BarrierOptions(),
                    wire_index: int = 0, azimuth: float = 0.0,
                    axial: float | None = None) -> list[SweepRow]:
    """Deterministic table of (parameter value, observable), ascending order.

    observe='barrier' reports min(barrier_a, barrier_b) [J]; 'touching'
    reports 0/1; 'min_radius' reports the radial trap minimum [m] of one
    wire at a reference azimuth/axial position.
    """
    if observe not in OBSERVABLES:
        raise ValueError(f"unknown observable {observe!r}; expected {OBSERVABLES}")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    values = np.linspace(min(lo, hi), max(lo, hi), steps if lo != hi else 1)
    rows = []
    for v in values:
        p2, a2 = apply_parameter(params, assembly, vary, float(v))
        if observe == "min_radius":
            b_res = resonance_field(p2.species, p2.drive)
            wire = a2.wires[wire_index]
            rho_guess = CODATA.mu0 * abs(wire.i_dc) / (2 * math.pi * b_res)
            rng = options.search_range if options.search_range is not None \
                else (0.05 * rho_guess, 5.0 * rho_guess)
            ax = 0.0 if axial is None else axial
            rm = radial_trap_minimum(p2, a2, wire_index, azimuth, ax, rng)
            rows.append(SweepRow(value=float(v), observable=rm.radius))
        else:
            seeds = default_well_seeds(p2, a2, options)
            res = barrier_height(p2, a2, seeds[0], seeds[1], options)
            if observe == "barrier":
                rows.append(SweepRow(value=float(v), observable=res.barrier))
            else:
                rows.append(SweepRow(value=float(v), observable=float(res.touching)))
    return rows
