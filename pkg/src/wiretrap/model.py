"""Physical constants, atom species, and RF drive parameters.

Everything internal is SI. Conversions to spectroscopic or thermal units
happen only in :func:`energy_report`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants as _codata

from .errors import ConfigError

QUASI_STATIC_LIMIT_HZ = 1.0e6


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA values used throughout; immutable after construction."""

    mu0: float = _codata.mu_0                                       # [T m / A]
    hbar: float = _codata.hbar                                      # [J s]
    muB: float = _codata.physical_constants["Bohr magneton"][0]     # [J / T]
    kB: float = _codata.k                                           # [J / K]

    def __post_init__(self):
        for name in ("mu0", "hbar", "muB", "kB"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"physical constant {name} must be positive")


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class AtomSpecies:
    """Atom in a single dressed level.

    g_factor is the Lande g-factor of the manifold (sign allowed),
    dressed_level the signed level index m (|m| <= total_spin).
    """

    name: str
    g_factor: float
    total_spin: float
    dressed_level: float
    mass: float  # [kg]

    def __post_init__(self):
        if self.g_factor == 0.0:
            raise ValueError("g_factor must be nonzero")
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        if abs(self.dressed_level) > self.total_spin + 1e-12:
            raise ValueError("|dressed_level| must not exceed total_spin")

    @property
    def seeks_weak_field(self) -> bool:
        return self.g_factor * self.dressed_level > 0.0


# Default species: Rb-87-like weak-field seeker in the upper dressed level.
# An artifact choice (configurable per scene); every run report echoes it.
RB87_LIKE = AtomSpecies(
    name="Rb87-like",
    g_factor=0.5,
    total_spin=2.0,
    dressed_level=2.0,
    mass=1.44316e-25,
)


@dataclass(frozen=True)
class RFDrive:
    """RF drive at a single frequency; omega is derived, never stored separately."""

    frequency: float  # [Hz]

    def __post_init__(self):
        if not self.frequency > 0.0:
            raise ValueError("drive frequency must be positive")

    @property
    def omega(self) -> float:
        """Angular frequency [rad/s]."""
        return 2.0 * math.pi * self.frequency

    @property
    def quasi_static(self) -> bool:
        """True when the magnetostatic treatment of the RF field is trusted.

        Above ~1 MHz the instantaneous-field approximation degrades; callers
        surface this as a warning, not an error.
        """
        return self.frequency <= QUASI_STATIC_LIMIT_HZ


@dataclass(frozen=True)
class EnergyReport:
    """One energy expressed in J, Hz (per h), and K (per kB)."""

    joules: float
    hertz: float
    kelvin: float
    species: str | None = None


def resonance_field(species: AtomSpecies, drive: RFDrive,
                    constants: PhysicalConstants = CODATA) -> float:
    """Static-field magnitude [T] at which the drive is resonant.

    B_res = hbar * omega / (|g_factor| * muB); detuning vanishes there.
    """
    if species.g_factor == 0.0:
        raise ValueError("species g_factor must be nonzero")
    return constants.hbar * drive.omega / (abs(species.g_factor) * constants.muB)


def energy_report(energy_j: float, species: AtomSpecies | None = None,
                  constants: PhysicalConstants = CODATA) -> EnergyReport:
    """Express an energy in J, Hz, and K for human-readable output."""
    h = 2.0 * math.pi * constants.hbar
    return EnergyReport(
        joules=energy_j,
        hertz=energy_j / h,
        kelvin=energy_j / constants.kB,
        species=species.name if species is not None else None,
    )


def species_from_dict(section: dict, where: str = "species") -> AtomSpecies:
    """Build an AtomSpecies from a validated config section."""
    try:
        return AtomSpecies(
            name=str(section["name"]),
            g_factor=float(section["g_factor"]),
            total_spin=float(section["total_spin"]),
            dressed_level=float(section["dressed_level"]),
            mass=float(section["mass"]),
        )
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc
