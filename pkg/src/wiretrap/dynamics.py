"""Classical point-particle transport on the dressed potential.

Velocity-Verlet integration of m a = -grad U(x, t), with the potential
re-evaluated quasi-statically under a scheduled bias field. Trajectories
terminate at the time limit, on domain exit, on hitting a wire fence or a
field-zero region, or when the adiabaticity metric flags that the dressed
picture broke down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import dressed as dr
from . import magnetostatics as mag
from .analysis import minimum_surface, radial_trap_minimum
from .errors import MinimumNotFoundError, WireTrapError
from .grids import Box
from .model import CODATA, resonance_field

TERMINATED_TIME = "t_max"
TERMINATED_DOMAIN = "domain_exit"
TERMINATED_FENCE = "singular_fence"
TERMINATED_AXIS = "undefined_axis"
TERMINATED_ADIABATIC = "adiabaticity"

DEFAULT_ETA_MAX = 0.1


@dataclass(frozen=True)
class ParticleState:
    position: np.ndarray   # [m]
    velocity: np.ndarray   # [m/s]
    time: float            # [s]

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        vel = np.asarray(self.velocity, dtype=float).reshape(3)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            raise ValueError("particle state must be finite")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "velocity", vel)


@dataclass(frozen=True)
class BiasSchedule:
    """Piecewise-linear bias field vs time; clamped outside the knot range."""

    times: np.ndarray      # (K,) strictly increasing [s]
    fields: np.ndarray     # (K, 3) [T]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        fields = np.asarray(self.fields, dtype=float).reshape(-1, 3)
        if len(times) < 1 or len(times) != len(fields):
            raise ValueError("schedule needs matching times and fields, >= 1 knot")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("schedule times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", fields)

    @classmethod
    def constant(cls, bias) -> "BiasSchedule":
        return cls(times=np.array([0.0]), fields=np.asarray(bias, float)[None, :])

    def value(self, t: float) -> np.ndarray:
        times, fields = self.times, self.fields
        if len(times) == 1 or t <= times[0]:
            return fields[0].copy() if t <= times[0] else fields[-1].copy()
        if t >= times[-1]:
            return fields[-1].copy()
        i = int(np.searchsorted(times, t, side="right") - 1)
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1.0 - w) * fields[i] + w * fields[i + 1]

    def rate(self, t: float) -> np.ndarray:
        """d bias / dt [T/s]; zero outside the knots and for single knots."""
        times, fields = self.times, self.fields
        if len(times) == 1 or t < times[0] or t >= times[-1]:
            return np.zeros(3)
        i = int(np.searchsorted(times, t, side="right") - 1)
        return (fields[i + 1] - fields[i]) / (times[i + 1] - times[i])


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray      # (M,)
    positions: np.ndarray  # (M, 3)
    velocities: np.ndarray # (M, 3)
    energies: np.ndarray   # (M,) total energy [J]
    eta: np.ndarray        # (M,) adiabaticity metric
    termination: str
    max_eta: float

    @property
    def final_state(self) -> ParticleState:
        return ParticleState(position=self.positions[-1],
                             velocity=self.velocities[-1],
                             time=float(self.times[-1]))


@dataclass(frozen=True)
class TransferStats:
    n_particles: int
    n_transferred: int
    n_lost: int
    mean_transfer_time: float | None
    terminations: dict

    def __post_init__(self):
        if self.n_transferred + self.n_lost > self.n_particles:
            raise ValueError("transferred + lost cannot exceed the ensemble size")


def _scene_eval(params: dr.DressedParams, assembly: mag.WireAssembly,
                x: np.ndarray):
    """U, grad, flags plus the field quantities the adiabaticity metric needs."""
    out = dr.evaluate(params, assembly, x[None, :], need_grad=True)
    return out


def _eta_from_eval(out: dict, velocity: np.ndarray, bias_rate) -> float:
    """Adiabaticity metric from an existing scene evaluation (index 0)."""
    b = out["b_dc"][0]
    bmag = float(out["b_mag"][0])
    jac = out["jac_dc"][0]
    if not np.all(np.isfinite(jac)):
        return math.inf
    db_dt = jac @ np.asarray(velocity, dtype=float)
    if bias_rate is not None:
        db_dt = db_dt + np.asarray(bias_rate, dtype=float)
    bhat = b / bmag
    perp = db_dt - (db_dt @ bhat) * bhat
    theta_rate = np.linalg.norm(perp) / bmag
    splitting = math.hypot(float(out["delta"][0]), float(out["rabi"][0]))
    if splitting == 0.0:
        return math.inf
    return float(theta_rate / splitting)


def adiabaticity_metric(params: dr.DressedParams, assembly: mag.WireAssembly,
                        position, velocity, bias_rate=None) -> float:
    """Rate of change of the field direction over the local dressed splitting.

    eta = |d b_hat / dt| / sqrt(delta^2 + Omega^2) with
    d b_hat / dt = (1 - b b^T)(J v + d bias/dt) / |B|. Values above ~0.1 mean
    the adiabatic (dressed) picture is breaking down. Diverges near field
    zeros, which is reported as a violation by the integrator.
    """
    x = np.asarray(position, dtype=float).reshape(3)
    out = _scene_eval(params, assembly, x)
    flag = int(out["flags"][0])
    if flag == dr.FENCED:
        dr._raise_for_flag(flag, assembly, x[None, :])
    if flag == dr.NO_AXIS:
        return math.inf
    return _eta_from_eval(out, velocity, bias_rate)


def suggest_timestep(params: dr.DressedParams, assembly: mag.WireAssembly,
                     point, fraction: float = 1.0 / 200.0) -> float:
    """Default dt: the harmonic period at a point over 200.

    The stiffest curvature direction of the finite-difference Hessian sets
    the period; softer scenes get proportionally larger steps.
    """
    x = np.asarray(point, dtype=float).reshape(3)
    h = max(1e-4 * float(np.linalg.norm(x)), 1e-8)
    hess = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        gp = dr.potential_gradient(params, assembly, x + e)
        gm = dr.potential_gradient(params, assembly, x - e)
        hess[:, k] = (gp - gm) / (2 * h)
    hess = 0.5 * (hess + hess.T)
    eig = np.linalg.eigvalsh(hess)
    k_max = float(np.max(np.abs(eig)))
    if k_max <= 0.0:
        raise WireTrapError("potential is flat here; supply dt explicitly")
    omega = math.sqrt(k_max / params.species.mass)
    return fraction * 2.0 * math.pi / omega


def integrate_trajectory(params: dr.DressedParams, assembly: mag.WireAssembly,
                         state: ParticleState, dt: float, t_max: float,
                         domain: Box, schedule: BiasSchedule | None = None,
                         eta_max: float = DEFAULT_ETA_MAX,
                         record_every: int = 1,
                         basin_watch=None) -> Trajectory:
    """Velocity-Verlet integration of one particle.

    The bias follows the schedule (quasi-static potential); termination
    reason is recorded on the trajectory. basin_watch, when given, is a
    callable(position) -> label evaluated each step; integration stops the
    first time it returns a label different from its value at the start
    (used for transfer detection).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    mass = params.species.mass

    def assembly_at(t: float) -> mag.WireAssembly:
        if schedule is None:
            return assembly
        return assembly.with_bias(schedule.value(t))

    def accel(x: np.ndarray, t: float):
        asm = assembly_at(t)
        out = _scene_eval(params, asm, x)
        flag = int(out["flags"][0])
        if flag == dr.FENCED:
            return None, TERMINATED_FENCE, out, asm
        if flag == dr.NO_AXIS:
            return None, TERMINATED_AXIS, out, asm
        if flag == dr.DEGENERATE:
            # conical point: U = 0 but no usable force
            return None, TERMINATED_AXIS, out, asm
        return -out["grad"][0] / mass, None, out, asm

    x = state.position.copy()
    v = state.velocity.copy()
    t = float(state.time)
    if not domain.contains(x):
        raise ValueError("start position outside the integration domain")
    a, term, out, asm = accel(x, t)
    if term is not None:
        raise ValueError(f"start position invalid: {term}")

    times = [t]
    positions = [x.copy()]
    velocities = [v.copy()]
    energies = [0.5 * mass * float(v @ v) + float(out["U"][0])]
    rate0 = schedule.rate(t) if schedule is not None else None
    eta0 = _eta_from_eval(out, v, rate0)
    etas = [eta0]
    max_eta = eta0
    termination = TERMINATED_TIME
    start_label = basin_watch(x) if basin_watch is not None else None

    # tolerate roundoff in t_max/dt so a reversed run retraces step counts
    n_steps = int(math.ceil((t_max - t) / dt - 1e-9))
    for step in range(1, n_steps + 1):
        x = x + v * dt + 0.5 * a * dt * dt
        t_new = t + dt
        if not domain.contains(x):
            termination = TERMINATED_DOMAIN
            t = t_new
            break
        a_new, term, out, asm = accel(x, t_new)
        if term is not None:
            termination = term
            t = t_new
            break
        v = v + 0.5 * (a + a_new) * dt
        a = a_new
        t = t_new

        rate = schedule.rate(t) if schedule is not None else None
        eta = _eta_from_eval(out, v, rate)
        max_eta = max(max_eta, eta)
        if step % record_every == 0 or step == n_steps:
            times.append(t)
            positions.append(x.copy())
            velocities.append(v.copy())
            energies.append(0.5 * mass * float(v @ v) + float(out["U"][0]))
            etas.append(eta)
        if eta > eta_max:
            termination = TERMINATED_ADIABATIC
            break
        if basin_watch is not None:
            label = basin_watch(x)
            if label is not None and label != start_label:
                termination = "basin_change"
                break

    return Trajectory(times=np.asarray(times), positions=np.asarray(positions),
                      velocities=np.asarray(velocities),
                      energies=np.asarray(energies), eta=np.asarray(etas),
                      termination=termination, max_eta=float(max_eta))


def classify_basin(params: dr.DressedParams, assembly: mag.WireAssembly,
                   position, threshold: float = 2.0) -> int | None:
    """Wire index owning a point, or None.

    A point belongs to the wire with the smallest scaled radial coordinate
    rho_i / rho_res,i, provided that ratio is below the threshold; ties go
    to the lower wire index.
    """
    x = np.asarray(position, dtype=float).reshape(3)
    b_res = resonance_field(params.species, params.drive)
    best = None
    for idx, wire in enumerate(assembly.wires):
        if wire.i_dc == 0.0:
            continue
        rho_res = CODATA.mu0 * abs(wire.i_dc) / (2.0 * math.pi * b_res)
        rho = float(mag.wire_distance(wire.geometry, x))
        ratio = rho / rho_res
        if ratio < threshold and (best is None or ratio < best[0]):
            best = (ratio, idx)
    return None if best is None else best[1]


@dataclass(frozen=True)
class SeedSpec:
    """Ensemble initial conditions on one wire's trap surface.

    Particles spread over axial positions with |axial| in
    [axial_min, axial_extent] on both sides; a nonzero axial_min keeps the
    ensemble out of the deformed crossing core where the surface potential
    is far above the well.
    """

    wire_index: int
    n_particles: int
    speed_scale: float          # [m/s] per-component thermal sigma
    rng_seed: int
    axial_extent: float | None = None   # [m]; None: 2x resonance radius
    axial_min: float = 0.0              # [m] excluded half-width around 0
    azimuth_center: float | None = None  # [rad]; None: lowest-U azimuth
    azimuth_halfwidth: float = math.pi   # [rad]; pi covers the full ring
    search_range: tuple[float, float] | None = None


def seed_particles(params: dr.DressedParams, assembly: mag.WireAssembly,
                   spec: SeedSpec) -> list[ParticleState]:
    """Deterministic ensemble on the seed wire's minimum surface.

    Azimuths and axial positions are drawn uniformly, the radial trap
    minimum puts each particle on the surface, and velocities are isotropic
    normal with the given scale. Draw order is fixed so a seed defines the
    ensemble bit-for-bit.
    """
    wire = assembly.wires[spec.wire_index]
    b_res = resonance_field(params.species, params.drive)
    rho_res = CODATA.mu0 * abs(wire.i_dc) / (2.0 * math.pi * b_res)
    if rho_res <= 0.0:
        raise MinimumNotFoundError("seed wire carries no DC current")
    extent = spec.axial_extent if spec.axial_extent is not None else 2.0 * rho_res
    srange = spec.search_range if spec.search_range is not None \
        else (0.05 * rho_res, 5.0 * rho_res)

    if not 0.0 <= spec.axial_min < extent:
        raise ValueError("axial_min must satisfy 0 <= axial_min < axial_extent")

    center = spec.azimuth_center
    if center is None and spec.azimuth_halfwidth < math.pi:
        # anchor the patch at the lowest-U azimuth of a coarse surface scan
        probe_az = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
        probe_ax = np.linspace(spec.axial_min, extent, 5)
        surf = minimum_surface(params, assembly, spec.wire_index, probe_az,
                               probe_ax, srange)
        pot = np.where(surf.found, surf.potential, np.inf)
        center = float(probe_az[np.unravel_index(np.argmin(pot), pot.shape)[0]])
    if center is None:
        center = 0.0

    # oversample ray draws: rays near a deformed crossing may have no
    # interior minimum; the first n successful rays are used, so the
    # ensemble stays a pure function of the seed
    rng = np.random.default_rng(spec.rng_seed)
    n_draw = 4 * spec.n_particles
    azimuths = center + rng.uniform(-spec.azimuth_halfwidth,
                                    spec.azimuth_halfwidth, n_draw)
    raw = rng.uniform(-1.0, 1.0, n_draw)
    axials = np.sign(raw) * (spec.axial_min
                             + np.abs(raw) * (extent - spec.axial_min))
    velocities = rng.normal(0.0, spec.speed_scale, (spec.n_particles, 3))

    positions = []
    for k in range(n_draw):
        if len(positions) == spec.n_particles:
            break
        try:
            rm = radial_trap_minimum(params, assembly, spec.wire_index,
                                     float(azimuths[k]), float(axials[k]), srange)
        except MinimumNotFoundError:
            continue
        positions.append(rm.position)
    if len(positions) < spec.n_particles:
        raise MinimumNotFoundError(
            f"could only seed {len(positions)} of {spec.n_particles} particles "
            "on the trap surface")
    return [ParticleState(position=p, velocity=velocities[k], time=0.0)
            for k, p in enumerate(positions)]


def _classify_many(params: dr.DressedParams, assembly: mag.WireAssembly,
                   positions: np.ndarray, threshold: float = 2.0) -> np.ndarray:
    """Vectorized basin labels; -1 encodes 'neither'."""
    b_res = resonance_field(params.species, params.drive)
    ratios = []
    for wire in assembly.wires:
        if wire.i_dc == 0.0:
            ratios.append(np.full(len(positions), np.inf))
            continue
        rho_res = CODATA.mu0 * abs(wire.i_dc) / (2.0 * math.pi * b_res)
        ratios.append(mag.wire_distance(wire.geometry, positions) / rho_res)
    ratios = np.column_stack(ratios)
    best = np.argmin(ratios, axis=1)
    labels = np.where(ratios[np.arange(len(positions)), best] < threshold,
                      best, -1)
    return labels.astype(np.int64)


def ensemble_transfer(params: dr.DressedParams, assembly: mag.WireAssembly,
                      seed: SeedSpec, dt: float, t_max: float, domain: Box,
                      schedule: BiasSchedule | None = None,
                      eta_max: float = DEFAULT_ETA_MAX) -> TransferStats:
    """Integrate an ensemble and count wire-to-wire transfers.

    Particles advance in vectorized lockstep (each one's arithmetic is
    independent, so results match per-particle integration and are
    deterministic given the seed spec). A particle transfers when its basin
    label first changes from the seed wire to another wire; it is lost when
    it leaves the domain, hits a fence or field zero, or violates the
    adiabaticity bound.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    states = seed_particles(params, assembly, seed)
    n = len(states)
    mass = params.species.mass
    x = np.array([s.position for s in states])
    v = np.array([s.velocity for s in states])
    active = np.ones(n, dtype=bool)
    termination = np.array([TERMINATED_TIME] * n, dtype=object)
    transfer_time = np.full(n, np.nan)

    lo = np.asarray(domain.lo)
    hi = np.asarray(domain.hi)

    def assembly_at(t: float) -> mag.WireAssembly:
        if schedule is None:
            return assembly
        return assembly.with_bias(schedule.value(t))

    def eval_active(xs: np.ndarray, t: float):
        asm = assembly_at(t)
        out = dr.evaluate(params, asm, xs, need_grad=True)
        return out

    def eta_of(out: dict, vs: np.ndarray, t: float) -> np.ndarray:
        jac = out["jac_dc"]
        db = np.einsum("nij,nj->ni", jac, vs)
        if schedule is not None:
            db = db + schedule.rate(t)[None, :]
        bhat = out["b_dc"] / out["b_mag"][:, None]
        par = np.einsum("ni,ni->n", db, bhat)
        perp = db - par[:, None] * bhat
        theta_rate = np.linalg.norm(perp, axis=1) / out["b_mag"]
        split = np.hypot(out["delta"], out["rabi"])
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = theta_rate / split
        return np.where(np.isfinite(eta), eta, np.inf)

    t = 0.0
    out = eval_active(x, t)
    bad0 = out["flags"] != dr.OK
    if np.any(bad0):
        raise ValueError("ensemble seeding produced invalid start positions")
    a = -out["grad"] / mass

    n_steps = int(math.ceil(t_max / dt - 1e-9))
    for step in range(1, n_steps + 1):
        if not np.any(active):
            break
        idx = np.nonzero(active)[0]
        x[idx] = x[idx] + v[idx] * dt + 0.5 * a[idx] * dt * dt
        t_new = t + dt

        outside = np.any((x[idx] < lo) | (x[idx] > hi), axis=1)
        if np.any(outside):
            gone = idx[outside]
            termination[gone] = TERMINATED_DOMAIN
            active[gone] = False
            idx = idx[~outside]
        if len(idx):
            out = eval_active(x[idx], t_new)
            flags = out["flags"]
            fenced = flags == dr.FENCED
            no_axis = (flags == dr.NO_AXIS) | (flags == dr.DEGENERATE)
            if np.any(fenced):
                termination[idx[fenced]] = TERMINATED_FENCE
                active[idx[fenced]] = False
            if np.any(no_axis):
                termination[idx[no_axis]] = TERMINATED_AXIS
                active[idx[no_axis]] = False
            ok = ~(fenced | no_axis)
            live = idx[ok]
            if len(live):
                a_new = -out["grad"][ok] / mass
                v[live] = v[live] + 0.5 * (a[live] + a_new) * dt
                a[live] = a_new
                eta = eta_of({k: (val[ok] if isinstance(val, np.ndarray) else val)
                              for k, val in out.items()}, v[live], t_new)
                hot = eta > eta_max
                if np.any(hot):
                    termination[live[hot]] = TERMINATED_ADIABATIC
                    active[live[hot]] = False
                    live = live[~hot]
                if len(live):
                    # a transfer requires unambiguous membership: the new
                    # basin label plus full exit from the seed wire's scaled
                    # region, so label flicker in the shared crossing zone
                    # never counts
                    labels = _classify_many(params, assembly, x[live])
                    seed_wire = assembly.wires[seed.wire_index]
                    rho_seed = CODATA.mu0 * abs(seed_wire.i_dc) / (
                        2.0 * math.pi * resonance_field(params.species, params.drive))
                    seed_ratio = mag.wire_distance(seed_wire.geometry, x[live]) / rho_seed
                    moved = (labels >= 0) & (labels != seed.wire_index) \
                        & (seed_ratio >= 2.0)
                    if np.any(moved):
                        termination[live[moved]] = "basin_change"
                        transfer_time[live[moved]] = t_new
                        active[live[moved]] = False
        t = t_new

    n_transferred = int(np.sum(termination == "basin_change"))
    lost_kinds = (TERMINATED_DOMAIN, TERMINATED_FENCE, TERMINATED_AXIS,
                  TERMINATED_ADIABATIC)
    n_lost = int(np.sum(np.isin(termination, lost_kinds)))
    terminations: dict[str, int] = {}
    for kind in termination:
        terminations[kind] = terminations.get(kind, 0) + 1
    times = transfer_time[np.isfinite(transfer_time)]
    mean_time = float(np.mean(times)) if len(times) else None
    return TransferStats(n_particles=n, n_transferred=n_transferred,
                         n_lost=n_lost, mean_transfer_time=mean_time,
                         terminations=terminations)
