"""Scene configuration: strict TOML parsing, validation, and round-trip.

A scene file fully determines a run: species, drive, wires, bias (constant
or scheduled), and analysis defaults. Parsing is total and strict: unknown
keys are errors, missing required keys are errors, and every invariant
violation names the offending key. The resolved configuration echoes into
every run report and re-parses to an identical SceneConfig.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

try:
    import tomllib as _toml
except ModuleNotFoundError:  # Python 3.10
    import tomli as _toml

import numpy as np

from .dressed import DressedParams
from .dynamics import BiasSchedule
from .errors import ConfigError
from .magnetostatics import (DEFAULT_EPS_AXIS, DEFAULT_ZERO_THRESHOLD,
                             InfiniteLine, Polyline, Wire, WireAssembly)
from .model import AtomSpecies, RFDrive


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}.{key}", "missing required key")
    return section[key]


def _as_float(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {type(value).__name__}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {type(value).__name__}")
    return int(value)


def _as_vec3(value, where: str) -> list[float]:
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(where, "expected a list of 3 numbers")
    return [_as_float(v, f"{where}[{i}]") for i, v in enumerate(value)]


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}", "unknown key")


@dataclass(frozen=True)
class AnalysisDefaults:
    """Optional [analysis] section; every field has a documented default."""

    domain_lo: tuple[float, float, float] | None = None
    domain_hi: tuple[float, float, float] | None = None
    grid_resolution: tuple[int, int, int] = (64, 64, 64)
    eps_axis: float = DEFAULT_EPS_AXIS
    zero_threshold: float = DEFAULT_ZERO_THRESHOLD
    touch_tolerance: float | None = None
    surface_azimuths: int = 24
    surface_axials: int = 9
    critical_bracket: tuple[float, float] | None = None
    critical_tolerance: float = 1e-3
    reference_critical_idc: float | None = None
    rng_seed: int = 12345
    n_particles: int = 100
    speed_scale: float = 1.2e-3
    seed_wire: int = 0
    seed_axial_extent: float | None = None
    seed_axial_min: float = 0.0
    dt: float | None = None
    t_max: float = 0.5
    eta_max: float = 0.1
    workers: int | None = None


_ANALYSIS_KEYS = {f.name: f for f in fields(AnalysisDefaults)}


@dataclass(frozen=True)
class SceneConfig:
    """Validated scene; plain Python values so equality is structural."""

    species: dict
    frequency: float
    wires: tuple[dict, ...]
    bias: list[float] | None
    schedule: tuple[dict, ...] | None
    analysis: AnalysisDefaults

    # ------------------------------------------------------------------
    # builders

    def build_species(self) -> AtomSpecies:
        s = self.species
        return AtomSpecies(name=s["name"], g_factor=s["g_factor"],
                           total_spin=s["total_spin"],
                           dressed_level=s["dressed_level"], mass=s["mass"])

    def build_drive(self) -> RFDrive:
        return RFDrive(self.frequency)

    def build_params(self) -> DressedParams:
        return DressedParams(species=self.build_species(),
                             drive=self.build_drive())

    def build_assembly(self) -> WireAssembly:
        wires = []
        for w in self.wires:
            if w["kind"] == "infinite_line":
                geom = InfiniteLine(point=np.asarray(w["point"]),
                                    direction=np.asarray(w["direction"]))
            else:
                geom = Polyline(vertices=np.asarray(w["vertices"]))
            wires.append(Wire(geometry=geom, i_dc=w["idc"], i_rf=w["irf"],
                              rf_phase=w["rf_phase"]))
        bias = self.bias if self.bias is not None else self.schedule[0]["field"]
        return WireAssembly(wires=tuple(wires), bias=np.asarray(bias),
                            drive=self.build_drive(),
                            eps_axis=self.analysis.eps_axis,
                            zero_threshold=self.analysis.zero_threshold)

    def build_schedule(self) -> BiasSchedule | None:
        if self.schedule is None:
            return None
        return BiasSchedule(times=np.asarray([k["time"] for k in self.schedule]),
                            fields=np.asarray([k["field"] for k in self.schedule]))

    # ------------------------------------------------------------------
    # serialization

    def to_dict(self) -> dict:
        out = {
            "species": dict(self.species),
            "drive": {"frequency": self.frequency},
            "wires": [dict(w) for w in self.wires],
            "analysis": {},
        }
        bias_section: dict = {}
        if self.bias is not None:
            bias_section["field"] = list(self.bias)
        if self.schedule is not None:
            bias_section["schedule"] = [
                {"time": k["time"], "field": list(k["field"])}
                for k in self.schedule]
        out["bias"] = bias_section
        defaults = AnalysisDefaults()
        for name in _ANALYSIS_KEYS:
            value = getattr(self.analysis, name)
            if value != getattr(defaults, name):
                out["analysis"][name] = list(value) if isinstance(value, tuple) \
                    else value
        if not out["analysis"]:
            del out["analysis"]
        return out


def parse_config(text: str) -> SceneConfig:
    """Parse and validate a scene file; total function (see module docs)."""
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError("<toml>", f"syntax error: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> SceneConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a table")
    _reject_unknown(raw, {"species", "drive", "wires", "bias", "analysis"},
                    "<root>")

    # species -----------------------------------------------------------
    if "species" not in raw:
        raise ConfigError("species", "missing required section")
    sp_raw = raw["species"]
    _reject_unknown(sp_raw, {"name", "g_factor", "total_spin", "dressed_level",
                             "mass"}, "species")
    species = {
        "name": str(_require(sp_raw, "name", "species")),
        "g_factor": _as_float(_require(sp_raw, "g_factor", "species"),
                              "species.g_factor"),
        "total_spin": _as_float(_require(sp_raw, "total_spin", "species"),
                                "species.total_spin"),
        "dressed_level": _as_float(_require(sp_raw, "dressed_level", "species"),
                                   "species.dressed_level"),
        "mass": _as_float(_require(sp_raw, "mass", "species"), "species.mass"),
    }
    if species["g_factor"] == 0.0:
        raise ConfigError("species.g_factor", "must be nonzero")
    if species["mass"] <= 0.0:
        raise ConfigError("species.mass", "must be positive")
    if abs(species["dressed_level"]) > species["total_spin"] + 1e-12:
        raise ConfigError("species.dressed_level",
                          "|dressed_level| must not exceed total_spin")

    # drive --------------------------------------------------------------
    if "drive" not in raw:
        raise ConfigError("drive", "missing required section")
    dr_raw = raw["drive"]
    _reject_unknown(dr_raw, {"frequency"}, "drive")
    frequency = _as_float(_require(dr_raw, "frequency", "drive"),
                          "drive.frequency")
    if frequency <= 0.0:
        raise ConfigError("drive.frequency", "must be positive")

    # wires ----------------------------------------------------------------
    if "wires" not in raw:
        raise ConfigError("wires", "missing required section")
    wires_raw = raw["wires"]
    if not isinstance(wires_raw, list) or not wires_raw:
        raise ConfigError("wires", "expected a non-empty array of tables")
    wires = []
    for i, w_raw in enumerate(wires_raw):
        where = f"wires[{i}]"
        _reject_unknown(w_raw, {"kind", "point", "direction", "vertices",
                                "idc", "irf", "rf_phase"}, where)
        kind = str(_require(w_raw, "kind", where))
        if kind not in ("infinite_line", "polyline"):
            raise ConfigError(f"{where}.kind",
                              "expected 'infinite_line' or 'polyline'")
        wire = {"kind": kind,
                "idc": _as_float(w_raw.get("idc", 0.0), f"{where}.idc"),
                "irf": _as_float(w_raw.get("irf", 0.0), f"{where}.irf"),
                "rf_phase": _as_float(w_raw.get("rf_phase", 0.0),
                                      f"{where}.rf_phase")}
        if wire["irf"] < 0.0:
            raise ConfigError(f"{where}.irf", "RF amplitude must be >= 0")
        if kind == "infinite_line":
            wire["point"] = _as_vec3(_require(w_raw, "point", where),
                                     f"{where}.point")
            direction = _as_vec3(_require(w_raw, "direction", where),
                                 f"{where}.direction")
            norm = math.sqrt(sum(c * c for c in direction))
            if abs(norm - 1.0) > 1e-12:
                if norm == 0.0:
                    raise ConfigError(f"{where}.direction", "must be nonzero")
                direction = [c / norm for c in direction]
            wire["direction"] = direction
        else:
            verts = _require(w_raw, "vertices", where)
            if not isinstance(verts, list) or len(verts) < 2:
                raise ConfigError(f"{where}.vertices",
                                  "expected a list of >= 2 points")
            wire["vertices"] = [_as_vec3(v, f"{where}.vertices[{j}]")
                                for j, v in enumerate(verts)]
        wires.append(wire)

    # bias -----------------------------------------------------------------
    if "bias" not in raw:
        raise ConfigError("bias", "missing required section")
    bias_raw = raw["bias"]
    _reject_unknown(bias_raw, {"field", "schedule"}, "bias")
    bias = None
    schedule = None
    if "schedule" in bias_raw:
        knots_raw = bias_raw["schedule"]
        if not isinstance(knots_raw, list) or not knots_raw:
            raise ConfigError("bias.schedule", "expected >= 1 knot")
        knots = []
        prev_t = -math.inf
        for j, k_raw in enumerate(knots_raw):
            where = f"bias.schedule[{j}]"
            _reject_unknown(k_raw, {"time", "field"}, where)
            t = _as_float(_require(k_raw, "time", where), f"{where}.time")
            if t <= prev_t:
                raise ConfigError(f"{where}.time",
                                  "times must be strictly increasing")
            prev_t = t
            knots.append({"time": t,
                          "field": _as_vec3(_require(k_raw, "field", where),
                                            f"{where}.field")})
        schedule = tuple(knots)
    if "field" in bias_raw:
        bias = _as_vec3(bias_raw["field"], "bias.field")
    if bias is None and schedule is None:
        raise ConfigError("bias", "needs 'field' or 'schedule'")

    # analysis ---------------------------------------------------------------
    an_raw = raw.get("analysis", {})
    _reject_unknown(an_raw, set(_ANALYSIS_KEYS), "analysis")
    an_kwargs = {}
    for key, value in an_raw.items():
        where = f"analysis.{key}"
        if key in ("domain_lo", "domain_hi"):
            an_kwargs[key] = tuple(_as_vec3(value, where))
        elif key == "grid_resolution":
            if not isinstance(value, list) or len(value) != 3:
                raise ConfigError(where, "expected 3 integers")
            res = tuple(_as_int(v, where) for v in value)
            if any(r < 2 for r in res):
                raise ConfigError(where, "resolution must be >= 2 per axis")
            an_kwargs[key] = res
        elif key == "critical_bracket":
            if not isinstance(value, list) or len(value) != 2:
                raise ConfigError(where, "expected [lo, hi]")
            lo = _as_float(value[0], where)
            hi = _as_float(value[1], where)
            if not lo < hi:
                raise ConfigError(where, "needs lo < hi")
            an_kwargs[key] = (lo, hi)
        elif key in ("surface_azimuths", "surface_axials", "rng_seed",
                     "n_particles", "seed_wire"):
            an_kwargs[key] = _as_int(value, where)
        elif key == "workers":
            an_kwargs[key] = _as_int(value, where)
        else:
            an_kwargs[key] = _as_float(value, where)
    analysis = AnalysisDefaults(**an_kwargs)
    for name, bound in (("eps_axis", 0.0), ("zero_threshold", 0.0),
                        ("critical_tolerance", 0.0), ("t_max", 0.0),
                        ("speed_scale", 0.0)):
        if getattr(analysis, name) is not None and getattr(analysis, name) <= bound:
            raise ConfigError(f"analysis.{name}", "must be positive")

    cfg = SceneConfig(species=species, frequency=frequency, wires=tuple(wires),
                      bias=bias, schedule=schedule, analysis=analysis)
    # constructing domain objects revalidates cross-field invariants
    cfg.build_assembly()
    if cfg.schedule is not None:
        cfg.build_schedule()
    return cfg


def bundled_scene_text(name: str) -> str:
    """Text of a scene shipped with the package (no .toml suffix)."""
    from importlib import resources
    ref = resources.files("wiretrap").joinpath("scenes", f"{name}.toml")
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError("scene", f"no bundled scene named {name!r}") from exc


def load_scene(name_or_path: str) -> SceneConfig:
    """Load a scene by bundled name or filesystem path."""
    import os
    if os.path.exists(name_or_path):
        with open(name_or_path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    return parse_config(bundled_scene_text(name_or_path))
