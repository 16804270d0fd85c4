"""Wire-trap toolkit: RF-dressed potentials of current-carrying wires.

Computes DC/RF magnetic fields of wire assemblies, the adiabatic dressed
potential felt by trapped atoms, its minimum surfaces around each wire,
the potential barrier between neighboring traps, the critical currents at
which the barrier closes, and classical transport of atoms across it.
"""

from .dressed import DressedParams, PotentialSample, detuning, dressed_potential, \
    potential_gradient, rabi_frequency
from .errors import (ConfigError, EmptyMeshError, MinimumNotFoundError,
                     NoBracketError, NonDifferentiablePointError,
                     QuantizationAxisError, SaddleConvergenceError,
                     SingularityError, UnsupportedConfigurationError,
                     WireTrapError)
from .grids import Box, GridSpec, IsoSurfaceMesh, ScalarField3D, extract_isosurface
from .magnetostatics import (FieldZeros, InfiniteLine, Polyline, Wire,
                             WireAssembly, b_dc, b_rf_amplitude,
                             find_field_zeros)
from .model import (CODATA, RB87_LIKE, AtomSpecies, EnergyReport,
                    PhysicalConstants, RFDrive, energy_report, resonance_field)

__version__ = "0.1.0"

__all__ = [
    "AtomSpecies", "Box", "CODATA", "ConfigError", "DressedParams",
    "EmptyMeshError", "EnergyReport", "FieldZeros", "GridSpec",
    "InfiniteLine", "IsoSurfaceMesh", "MinimumNotFoundError",
    "NoBracketError", "NonDifferentiablePointError", "PhysicalConstants",
    "Polyline", "PotentialSample", "QuantizationAxisError", "RB87_LIKE",
    "RFDrive", "SaddleConvergenceError", "ScalarField3D", "SingularityError",
    "UnsupportedConfigurationError", "Wire", "WireAssembly", "WireTrapError",
    "b_dc", "b_rf_amplitude", "detuning", "dressed_potential",
    "energy_report", "extract_isosurface", "find_field_zeros",
    "potential_gradient", "rabi_frequency", "resonance_field",
]
