"""Constants, species, drive, and unit-conversion checks."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from wiretrap.model import (CODATA, RB87_LIKE, AtomSpecies, RFDrive,
                            energy_report, resonance_field)


def oracle_resonance(g_factor, frequency):
    """Independent evaluation of hbar * 2 pi f / (|g| muB)."""
    return CODATA.hbar * 2.0 * math.pi * frequency / (abs(g_factor) * CODATA.muB)


def test_resonance_field_rb87_at_0p8_mhz():
    drive = RFDrive(0.8e6)
    got = resonance_field(RB87_LIKE, drive)
    assert_allclose(got, oracle_resonance(0.5, 0.8e6), rtol=1e-15)
    # frozen from the oracle above
    assert_allclose(got, 1.1431637624818325e-04, rtol=1e-12)


def test_resonance_field_inverse_in_g_factor():
    drive = RFDrive(0.8e6)
    half = resonance_field(RB87_LIKE, drive)
    full = resonance_field(
        AtomSpecies("g1", g_factor=1.0, total_spin=2.0, dressed_level=2.0,
                    mass=RB87_LIKE.mass), drive)
    assert_allclose(full, 0.5 * half, rtol=1e-15)


def test_resonance_field_linear_in_frequency():
    b1 = resonance_field(RB87_LIKE, RFDrive(0.8e6))
    b2 = resonance_field(RB87_LIKE, RFDrive(1.6e6))
    assert_allclose(b2, 2.0 * b1, rtol=1e-15)


def test_resonance_field_monotonic_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(200):
        f1, f2 = sorted(rng.uniform(1e4, 5e6, 2))
        g1, g2 = sorted(rng.uniform(0.1, 2.0, 2))
        sp1 = AtomSpecies("a", g_factor=g1, total_spin=3.0, dressed_level=1.0,
                          mass=1e-25)
        sp2 = AtomSpecies("b", g_factor=g2, total_spin=3.0, dressed_level=1.0,
                          mass=1e-25)
        if f1 < f2:
            assert resonance_field(sp1, RFDrive(f1)) < resonance_field(sp1, RFDrive(f2))
        if g1 < g2:
            assert resonance_field(sp2, RFDrive(f1)) < resonance_field(sp1, RFDrive(f1))


def test_resonance_consistency_relation():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g = rng.uniform(-2.0, 2.0)
        if abs(g) < 1e-3:
            continue
        f = rng.uniform(1e4, 5e6)
        sp = AtomSpecies("r", g_factor=g, total_spin=3.0, dressed_level=0.5,
                         mass=1e-25)
        drive = RFDrive(f)
        back = resonance_field(sp, drive) * abs(g) * CODATA.muB / CODATA.hbar
        assert abs(back - drive.omega) / drive.omega <= 1e-14


def test_species_validation():
    with pytest.raises(ValueError):
        AtomSpecies("bad", g_factor=0.0, total_spin=2.0, dressed_level=1.0, mass=1e-25)
    with pytest.raises(ValueError):
        AtomSpecies("bad", g_factor=0.5, total_spin=1.0, dressed_level=2.0, mass=1e-25)
    with pytest.raises(ValueError):
        AtomSpecies("bad", g_factor=0.5, total_spin=2.0, dressed_level=1.0, mass=-1.0)


def test_drive_validation_and_flags():
    with pytest.raises(ValueError):
        RFDrive(-1.0)
    assert RFDrive(0.8e6).quasi_static
    assert not RFDrive(2.0e6).quasi_static
    drive = RFDrive(0.8e6)
    assert_allclose(drive.omega, 2.0 * math.pi * 0.8e6, rtol=0)


def test_energy_report_zero():
    rep = energy_report(0.0)
    assert rep.joules == rep.hertz == rep.kelvin == 0.0


def test_energy_report_values():
    u = 4.637e-28
    rep = energy_report(u, RB87_LIKE)
    assert_allclose(rep.kelvin, u / CODATA.kB, rtol=1e-15)
    assert_allclose(rep.hertz, u / (2.0 * math.pi * CODATA.hbar), rtol=1e-15)
    # frozen oracle values (divide by kB and h)
    assert_allclose(rep.kelvin, 3.3586e-05, rtol=1e-4)
    assert_allclose(rep.hertz, 6.998e5, rtol=1e-3)
    assert rep.species == "Rb87-like"
