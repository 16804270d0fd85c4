"""Command-line interface: scenes in, data files and run reports out.

Every invocation writes '<command>_report.json' into the output directory;
data artifacts (CSV, PLY, binary grids) are deterministic and independent
of the worker count. Exit codes: 0 success, 1 domain error (report still
written, with the error recorded), 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, dynamics, magnetostatics as mag, outputs
from .config import SceneConfig, load_scene
from .dressed import dressed_potential
from .errors import WireTrapError
from .grids import Box, GridSpec, extract_isosurface
from .model import energy_report, resonance_field
from .parallel import resolve_workers
from .report import RunReport

POTENTIAL_COLUMNS = ("x_m", "y_m", "z_m", "U_J", "delta_rad_s", "rabi_rad_s",
                     "b_mag_T", "grad_x_J_m", "grad_y_J_m", "grad_z_J_m")


def _vec3(text: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected 'x,y,z'")
    return np.array([float(p) for p in parts])


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected 'lo,hi'")
    return float(parts[0]), float(parts[1])


def _triple_int(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) == 1:
        n = int(parts[0])
        return (n, n, n)
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected 'nx,ny,nz'")
    return tuple(int(p) for p in parts)


def _range_spec(text: str) -> tuple[float, float, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected 'lo,hi,steps'")
    return float(parts[0]), float(parts[1]), int(parts[2])


def _scene_domain(cfg: SceneConfig, params, assembly) -> Box:
    an = cfg.analysis
    if an.domain_lo is not None and an.domain_hi is not None:
        return Box(an.domain_lo, an.domain_hi)
    return analysis.default_analysis_box(params, assembly,
                                         analysis.BarrierOptions())


def _barrier_options(cfg: SceneConfig) -> analysis.BarrierOptions:
    an = cfg.analysis
    return analysis.BarrierOptions(
        touch_tol=an.touch_tolerance,
        surface_azimuths=an.surface_azimuths,
        surface_axials=an.surface_axials,
    )


def _barrier_payload(res: analysis.BarrierResult) -> dict:
    return {
        "min_a": res.min_a, "u_a_J": res.u_a,
        "min_b": res.min_b, "u_b_J": res.u_b,
        "saddle": res.saddle, "u_saddle_J": res.u_saddle,
        "barrier_a_J": res.barrier_a, "barrier_b_J": res.barrier_b,
        "barrier_J": res.barrier,
        "barrier_kelvin": energy_report(res.barrier).kelvin,
        "converged": res.converged, "grad_residual_J_m": res.grad_residual,
        "hessian_index": res.hessian_index, "iterations": res.iterations,
        "touching": res.touching, "touch_tolerance_J": res.touch_tolerance,
        "warnings": list(res.warnings),
    }


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_field(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    assembly = cfg.build_assembly()
    b = mag.b_dc(assembly, args.at)
    result = {"at_m": args.at, "b_dc_T": b, "b_mag_T": float(np.linalg.norm(b))}
    if args.rf:
        result["b_rf_T"] = mag.b_rf_amplitude(assembly, args.at)
    report.results["field"] = result
    print(f"B_dc [T] at {args.at.tolist()}: {b.tolist()}")


def _cmd_potential(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    s = dressed_potential(params, assembly, args.at)
    grad = s.grad if s.grad is not None else np.full(3, np.nan)
    row = [float(s.p[0]), float(s.p[1]), float(s.p[2]), s.U, s.delta, s.rabi,
           s.b_mag, float(grad[0]), float(grad[1]), float(grad[2])]
    report.results["potential"] = dict(zip(POTENTIAL_COLUMNS, row))
    if s.grad is None:
        report.warn("gradient undefined: detuning and Rabi frequency both vanish")
    if args.format == "csv":
        print(",".join(POTENTIAL_COLUMNS))
        print(",".join(format(v, ".17g") for v in row))
    else:
        import json
        print(json.dumps(dict(zip(POTENTIAL_COLUMNS, row))))


def _cmd_grid(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    domain = _scene_domain(cfg, params, assembly)
    resolution = args.resolution or cfg.analysis.grid_resolution
    spec = GridSpec.from_box(domain, resolution)
    workers = resolve_workers(args.workers if args.workers is not None
                              else cfg.analysis.workers)
    fld = analysis.sample_grid(args.quantity, params, assembly, spec,
                               workers=workers)
    unit = {"potential": "J", "bmag": "T", "brf": "T",
            "delta": "rad_s", "rabi": "rad_s"}[args.quantity]
    csv_path = outdir / f"grid_{args.quantity}.csv"
    bin_path = outdir / f"grid_{args.quantity}.bin"
    outputs.write_grid_csv(csv_path, fld, args.quantity, unit)
    outputs.write_grid_binary(bin_path, fld)
    valid = fld.values[fld.mask]
    report.results["grid"] = {
        "quantity": args.quantity, "resolution": list(spec.resolution),
        "origin_m": list(spec.origin), "extents_m": list(spec.extents),
        "n_valid": int(fld.mask.sum()), "n_masked": int((~fld.mask).sum()),
        "min": float(valid.min()) if valid.size else None,
        "max": float(valid.max()) if valid.size else None,
        "csv": csv_path.name, "binary": bin_path.name,
    }
    print(f"wrote {csv_path} and {bin_path}")


def _cmd_surface(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    if args.mode == "iso":
        domain = _scene_domain(cfg, params, assembly)
        resolution = args.resolution or cfg.analysis.grid_resolution
        spec = GridSpec.from_box(domain, resolution)
        workers = resolve_workers(args.workers if args.workers is not None
                                  else cfg.analysis.workers)
        quantity = args.quantity
        fld = analysis.sample_grid(quantity, params, assembly, spec,
                                   workers=workers)
        if args.level is not None:
            level = args.level
        elif quantity == "bmag":
            level = resonance_field(params.species, params.drive)
        else:
            raise WireTrapError("--level is required for non-bmag isosurfaces")
        mesh = extract_isosurface(fld, level)
        path = outdir / f"isosurface_{quantity}.ply"
        outputs.write_mesh_ply(path, mesh, comment=f"quantity {quantity}")
        report.results["surface"] = {
            "mode": "iso", "quantity": quantity, "level": level,
            "n_vertices": len(mesh.vertices), "n_triangles": len(mesh.triangles),
            "ply": path.name,
        }
        print(f"wrote {path} ({len(mesh.vertices)} vertices)")
        return

    wire = args.wire
    b_res = resonance_field(params.species, params.drive)
    rho_guess = mag.CODATA.mu0 * abs(assembly.wires[wire].i_dc) / (2 * math.pi * b_res)
    azimuths = np.linspace(0.0, 2 * math.pi, args.azimuths, endpoint=False)
    extent = args.extent if args.extent is not None else 4.0 * rho_guess
    axials = np.linspace(-extent, extent, args.axials)
    srange = (0.05 * rho_guess, 5.0 * rho_guess)
    surf = analysis.minimum_surface(params, assembly, wire, azimuths, axials,
                                    srange)
    verts, tris = analysis.surface_mesh(surf)
    path = outdir / f"minimum_surface_wire{wire}.ply"
    outputs.write_ply(path, verts, tris, comment=f"minimum surface wire {wire}")
    found_pot = surf.potential[surf.found]
    report.results["surface"] = {
        "mode": "minimum", "wire": wire,
        "n_found": surf.n_found, "n_cells": int(surf.found.size),
        "median_radius_m": float(np.nanmedian(surf.radii)),
        "u_min_J": float(found_pot.min()) if found_pot.size else None,
        "ply": path.name,
    }
    print(f"wrote {path} ({surf.n_found}/{surf.found.size} cells)")


def _cmd_zeros(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    domain = _scene_domain(cfg, params, assembly)
    n = args.resolution or 16
    spec = GridSpec.from_box(domain, (n, n, n))
    zeros = mag.find_field_zeros(assembly, spec)
    path = outdir / "field_zeros.csv"
    outputs.write_table_csv(path, ["x_m", "y_m", "z_m", "b_mag_T"],
                            [[*map(float, z),
                              float(np.linalg.norm(mag.b_dc(assembly, z)))]
                             for z in zeros.zeros])
    report.results["zeros"] = {
        "count": len(zeros.zeros), "threshold_T": zeros.threshold,
        "positions_m": zeros.zeros, "csv": path.name,
    }
    print(f"found {len(zeros.zeros)} field zeros; wrote {path}")


def _cmd_barrier(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    options = _barrier_options(cfg)
    if args.seed_a is not None and args.seed_b is not None:
        seed_a, seed_b = args.seed_a, args.seed_b
    else:
        seeds = analysis.default_well_seeds(params, assembly, options)
        seed_a, seed_b = seeds[0], seeds[1]
    res = analysis.barrier_height(params, assembly, seed_a, seed_b, options)
    report.results["barrier"] = _barrier_payload(res)
    for w in res.warnings:
        report.warn(w)
    path = outdir / "barrier_path.csv"
    outputs.write_table_csv(path, ["x_m", "y_m", "z_m"],
                            [list(map(float, p)) for p in res.path])
    report.results["barrier"]["path_csv"] = path.name
    print(f"barrier: {res.barrier:.6e} J "
          f"({energy_report(res.barrier).kelvin:.3e} K), "
          f"touching: {res.touching}")


def _cmd_critical(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    options = _barrier_options(cfg)
    bracket = args.bracket or cfg.analysis.critical_bracket
    if bracket is None:
        raise WireTrapError("no bracket: pass --bracket or set "
                            "analysis.critical_bracket in the scene")
    tol = args.tol or cfg.analysis.critical_tolerance
    res = analysis.critical_parameter(params, assembly, args.vary, bracket,
                                      tol, mode=args.mode, options=options)
    payload = {
        "parameter": res.parameter, "mode": res.mode,
        "critical_value": res.critical_value,
        "bracket": list(res.bracket), "iterations": res.iterations,
        "barrier_at_solution": res.barrier_at_solution,
        "touch_tolerance": res.touch_tolerance,
        "tolerance_achieved": res.tolerance_achieved,
        "warnings": list(res.warnings),
    }
    reference = cfg.analysis.reference_critical_idc
    if args.vary == "idc" and reference is not None:
        ratio = res.critical_value / reference
        payload["comparison"] = {
            "reference_idc_A": reference,
            "found_idc_A": res.critical_value,
            "ratio": ratio,
            "within_order_of_magnitude": bool(0.1 <= ratio <= 10.0),
        }
    for w in res.warnings:
        report.warn(w)
    report.results["critical"] = payload
    print(f"critical {args.vary} ({args.mode} mode): {res.critical_value:.6g}")


def _cmd_sweep(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    options = _barrier_options(cfg)
    lo, hi, steps = args.range
    rows = analysis.parameter_sweep(params, assembly, args.vary, lo, hi, steps,
                                    args.observe, options=options,
                                    wire_index=args.wire)
    path = outdir / f"sweep_{args.vary}_{args.observe}.csv"
    unit = {"barrier": "J", "min_radius": "m", "touching": "bool"}[args.observe]
    outputs.write_table_csv(path, [f"{args.vary}", f"{args.observe}_{unit}"],
                            [[r.value, r.observable] for r in rows])
    report.results["sweep"] = {
        "vary": args.vary, "observe": args.observe,
        "rows": [[r.value, r.observable] for r in rows], "csv": path.name,
    }
    print(f"wrote {path} ({len(rows)} rows)")


def _cmd_trace(args, cfg: SceneConfig, report: RunReport, outdir: Path) -> None:
    params = cfg.build_params()
    assembly = cfg.build_assembly()
    schedule = cfg.build_schedule()
    domain = _scene_domain(cfg, params, assembly)
    an = cfg.analysis

    if args.ensemble:
        seed = dynamics.SeedSpec(
            wire_index=an.seed_wire, n_particles=an.n_particles,
            speed_scale=an.speed_scale, rng_seed=an.rng_seed,
            axial_extent=an.seed_axial_extent, axial_min=an.seed_axial_min)
        dt = args.dt or an.dt
        if dt is None:
            seeds = analysis.default_well_seeds(params, assembly)
            dt = dynamics.suggest_timestep(params, assembly, seeds[0])
        t_max = args.t_max or an.t_max
        stats = dynamics.ensemble_transfer(params, assembly, seed, dt, t_max,
                                           domain, schedule=schedule,
                                           eta_max=an.eta_max)
        report.results["ensemble"] = {
            "n_particles": stats.n_particles,
            "n_transferred": stats.n_transferred,
            "n_lost": stats.n_lost,
            "mean_transfer_time_s": stats.mean_transfer_time,
            "terminations": stats.terminations,
            "dt_s": dt, "t_max_s": t_max,
        }
        print(f"transferred {stats.n_transferred}/{stats.n_particles}, "
              f"lost {stats.n_lost}")
        return

    if args.start is None:
        raise WireTrapError("trace needs --start x,y,z (or --ensemble)")
    velocity = args.velocity if args.velocity is not None else np.zeros(3)
    state = dynamics.ParticleState(position=args.start, velocity=velocity,
                                   time=0.0)
    dt = args.dt or an.dt
    if dt is None:
        dt = dynamics.suggest_timestep(params, assembly, args.start)
    t_max = args.t_max or an.t_max
    traj = dynamics.integrate_trajectory(params, assembly, state, dt, t_max,
                                         domain, schedule=schedule,
                                         eta_max=an.eta_max,
                                         record_every=args.record_every)
    path = outdir / "trajectory.csv"
    outputs.write_trajectory_csv(path, traj)
    report.results["trajectory"] = {
        "termination": traj.termination, "max_eta": traj.max_eta,
        "n_recorded": len(traj.times), "dt_s": dt, "t_max_s": t_max,
        "csv": path.name,
    }
    if traj.termination == dynamics.TERMINATED_ADIABATIC:
        report.warn("trajectory terminated on adiabaticity violation")
    print(f"wrote {path} ({len(traj.times)} samples, "
          f"terminated: {traj.termination})")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wiretrap",
        description="RF-dressed wire-trap potentials: fields, surfaces, "
                    "barriers, critical currents, transport")
    parser.add_argument("--scene", "-s", default="crossed_default",
                        help="bundled scene name or path to a scene file")
    parser.add_argument("--output-dir", "-o", default=".",
                        help="directory for data files and the run report")
    parser.add_argument("--workers", "-w", type=int, default=None,
                        help="worker processes for grid sampling "
                             "(results never depend on this)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("field", help="static field at a point")
    p.add_argument("--at", type=_vec3, required=True)
    p.add_argument("--rf", action="store_true",
                   help="also print the RF amplitude vector")

    p = sub.add_parser("potential", help="dressed-potential sample at a point")
    p.add_argument("--at", type=_vec3, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("grid", help="sample a scalar on the scene grid")
    p.add_argument("--quantity", choices=analysis.SELECTOR_NAMES,
                   default="potential")
    p.add_argument("--resolution", type=_triple_int, default=None)

    p = sub.add_parser("surface", help="isosurface or minimum-surface mesh")
    p.add_argument("--mode", choices=("iso", "minimum"), default="minimum")
    p.add_argument("--quantity", choices=analysis.SELECTOR_NAMES,
                   default="bmag", help="scalar for iso mode")
    p.add_argument("--level", type=float, default=None,
                   help="iso level (default: resonance field for bmag)")
    p.add_argument("--resolution", type=_triple_int, default=None)
    p.add_argument("--wire", type=int, default=0)
    p.add_argument("--azimuths", type=int, default=48)
    p.add_argument("--axials", type=int, default=33)
    p.add_argument("--extent", type=float, default=None,
                   help="axial half-extent [m] for minimum mode")

    p = sub.add_parser("zeros", help="locate static-field zeros")
    p.add_argument("--resolution", type=int, default=None)

    p = sub.add_parser("barrier", help="wells, saddle, and barrier heights")
    p.add_argument("--seed-a", type=_vec3, default=None)
    p.add_argument("--seed-b", type=_vec3, default=None)

    p = sub.add_parser("critical", help="bisect for the barrier-closing value")
    p.add_argument("--vary", choices=analysis.PARAMETER_NAMES, required=True)
    p.add_argument("--bracket", type=_pair, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--mode", choices=("full", "geometric"), default="full")

    p = sub.add_parser("sweep", help="tabulate an observable over a parameter")
    p.add_argument("--vary", choices=analysis.PARAMETER_NAMES, required=True)
    p.add_argument("--range", type=_range_spec, required=True,
                   metavar="LO,HI,STEPS")
    p.add_argument("--observe", choices=analysis.OBSERVABLES, required=True)
    p.add_argument("--wire", type=int, default=0)

    p = sub.add_parser("trace", help="integrate a trajectory or an ensemble")
    p.add_argument("--start", type=_vec3, default=None)
    p.add_argument("--velocity", type=_vec3, default=None)
    p.add_argument("--ensemble", action="store_true")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-max", type=float, default=None)
    p.add_argument("--record-every", type=int, default=1)
    return parser


_HANDLERS = {
    "field": _cmd_field,
    "potential": _cmd_potential,
    "grid": _cmd_grid,
    "surface": _cmd_surface,
    "zeros": _cmd_zeros,
    "barrier": _cmd_barrier,
    "critical": _cmd_critical,
    "sweep": _cmd_sweep,
    "trace": _cmd_trace,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        cfg = load_scene(args.scene)
    except WireTrapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    report = RunReport(command=args.command, argv=argv, config=cfg)
    status = 0
    try:
        _HANDLERS[args.command](args, cfg, report, outdir)
    except WireTrapError as exc:
        report.results["error"] = {"type": type(exc).__name__,
                                   "message": str(exc)}
        print(f"error: {exc}", file=sys.stderr)
        status = 1
    outputs.write_json(outdir / f"{args.command}_report.json", report.payload())
    return status


if __name__ == "__main__":
    sys.exit(main())
