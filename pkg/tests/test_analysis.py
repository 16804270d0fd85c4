"""Trap analysis: radial minima, surfaces, saddles, barriers, criticals."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import wiretrap.analysis as ana
import wiretrap.magnetostatics as mag
from wiretrap.errors import (MinimumNotFoundError, NoBracketError,
                             UnsupportedConfigurationError)
from wiretrap.model import CODATA, RB87_LIKE, RFDrive, resonance_field

from conftest import X_HAT, make_crossed, make_single_wire

DIAG_BIAS = (4.0417e-6, 4.0417e-6, 0.0)


def rho_res(i_dc, params):
    return CODATA.mu0 * i_dc / (2 * np.pi * resonance_field(params.species,
                                                            params.drive))


def double_well_fgrad(a):
    """U = (x^2 - a^2)^2 + y^2 + z^2: minima (+-a,0,0), saddle at 0, barrier a^4."""
    def fgrad(pts):
        pts = np.atleast_2d(pts)
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        u = (x ** 2 - a ** 2) ** 2 + y ** 2 + z ** 2
        g = np.stack([4 * x * (x ** 2 - a ** 2), 2 * y, 2 * z], axis=1)
        return u, g
    return fgrad


class TestRadialMinimum:
    def test_single_wire_resonance_radius(self, params):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.05)
        expect = rho_res(0.0925, params)
        for az in (0.0, 1.3, 2.2, 4.8):
            rm = ana.radial_trap_minimum(params, asm, 0, az, 1e-4,
                                         (1e-5, 6e-4))
            assert abs(rm.radius - expect) < 1e-7

    def test_azimuth_independence(self, params):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.05)
        r1 = ana.radial_trap_minimum(params, asm, 0, 0.4, 0.0, (1e-5, 6e-4))
        r2 = ana.radial_trap_minimum(params, asm, 0, 2.9, 0.0, (1e-5, 6e-4))
        assert abs(r1.radius - r2.radius) < 1e-9

    def test_zero_rf_minimum_still_at_resonance(self, params):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.0)
        rm = ana.radial_trap_minimum(params, asm, 0, 1.0, 0.0, (1e-5, 6e-4))
        assert abs(rm.radius - rho_res(0.0925, params)) < 1e-7
        assert abs(rm.sample.U) < 1e-34

    def test_no_interior_minimum_raises(self, params):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.05)
        with pytest.raises(MinimumNotFoundError):
            # range entirely inside the resonance radius: U decreases outward
            ana.radial_trap_minimum(params, asm, 0, 0.0, 0.0, (1e-5, 1e-4))


class TestMinimumSurface:
    def test_isolated_wire_gives_cylinder(self, params):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.05)
        az = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        ax = np.linspace(-4e-4, 4e-4, 7)
        surf = ana.minimum_surface(params, asm, 0, az, ax, (1e-5, 6e-4))
        assert surf.n_found == surf.found.size
        assert np.nanmax(np.abs(surf.radii - rho_res(0.0925, params))) < 1e-7

    def test_crossed_scene_deformed_at_crossing(self, params):
        asm = make_crossed(bias=DIAG_BIAS)
        az = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        ax = np.linspace(-8e-4, 8e-4, 9)
        surf = ana.minimum_surface(params, asm, 0, az, ax, (1e-5, 8e-4))
        assert surf.n_found > 0
        assert np.all(np.isfinite(surf.radii[surf.found]))
        # deviation from the unperturbed cylinder radius, per axial column
        rho0 = rho_res(0.0925, params)
        deviation = []
        for j in range(len(ax)):
            col = surf.radii[:, j][surf.found[:, j]]
            deviation.append(np.max(np.abs(col - rho0)) if len(col) else 0.0)
        deviation = np.asarray(deviation)
        # deformation peaks at the axial position closest to the other wire
        assert np.argmax(deviation) == len(ax) // 2
        assert deviation[len(ax) // 2] > 3 * deviation[0]

    def test_huge_bias_pushes_surface_out_of_range(self, params):
        b_res = resonance_field(params.species, params.drive)
        asm = make_crossed(bias=(0, 0, 5 * b_res))
        az = np.linspace(0, 2 * np.pi, 12, endpoint=False)
        ax = np.linspace(-4e-4, 4e-4, 5)
        # range excludes the inner side-guide dip; the resonance surface
        # itself is pushed beyond reach by the bias
        surf = ana.minimum_surface(params, asm, 0, az, ax, (1e-4, 6e-4))
        assert surf.n_found < 0.5 * surf.found.size

    def test_polyline_wire_rejected(self, params):
        poly = mag.Polyline(vertices=np.array([[-1.0, 0, 0], [1.0, 0, 0]]))
        asm = mag.WireAssembly(
            wires=(mag.Wire(geometry=poly, i_dc=0.1),),
            bias=np.zeros(3), drive=params.drive)
        with pytest.raises(UnsupportedConfigurationError):
            ana.radial_trap_minimum(params, asm, 0, 0.0, 0.0, (1e-5, 1e-3))


class TestSaddleOracle:
    def test_double_well_family(self):
        rng = np.random.default_rng(77)
        for _ in range(5):
            a = rng.uniform(0.4, 1.6)
            res = ana.neb_saddle(double_well_fgrad(a),
                                 np.array([-a, 0.0, 0.0]),
                                 np.array([a, 0.0, 0.0]), tol_grad=1e-10)
            assert res.converged
            assert res.hessian_index == 1
            assert abs(res.barrier_a - a ** 4) / a ** 4 <= 1e-6
            assert abs(res.barrier_b - a ** 4) / a ** 4 <= 1e-6
            assert np.linalg.norm(res.saddle) <= 1e-5

    def test_degenerate_endpoints_rejected(self):
        fg = double_well_fgrad(1.0)
        with pytest.raises(ValueError):
            ana.neb_saddle(fg, np.array([1.0, 0, 0]), np.array([1.0, 0, 0]))

    def test_path_has_endpoints(self):
        fg = double_well_fgrad(1.0)
        res = ana.neb_saddle(fg, np.array([-1.0, 0, 0]), np.array([1.0, 0, 0]),
                             tol_grad=1e-9)
        assert_allclose(res.path[0], [-1.0, 0, 0])
        assert_allclose(res.path[-1], [1.0, 0, 0])


class TestBarrier:
    def test_symmetric_crossed_barriers_equal(self, params):
        asm = make_crossed(i_dc=0.0925, i_rf=0.05, bias=DIAG_BIAS)
        seeds = ana.default_well_seeds(params, asm)
        res = ana.barrier_height(params, asm, seeds[0], seeds[1])
        assert res.converged
        assert res.barrier > 0.0
        assert not res.touching
        denom = max(abs(res.barrier_a), abs(res.barrier_b))
        assert abs(res.barrier_a - res.barrier_b) / denom <= 1e-6

    def test_sub_critical_not_touching_and_critical_touching(self, params):
        low = make_crossed(i_dc=0.05, i_rf=0.05, bias=DIAG_BIAS)
        seeds = ana.default_well_seeds(params, low)
        res_low = ana.barrier_height(params, low, seeds[0], seeds[1])
        assert not res_low.touching

        high = make_crossed(i_dc=0.7, i_rf=0.05, bias=DIAG_BIAS)
        seeds = ana.default_well_seeds(params, high)
        res_high = ana.barrier_height(params, high, seeds[0], seeds[1])
        assert res_high.touching

    def test_parallel_wire_touching_at_analytic_current(self, params):
        d = 2e-4
        i_crit = np.pi * d * resonance_field(params.species, params.drive) \
            / CODATA.mu0
        assert_allclose(i_crit, 0.05716, rtol=2e-4)
        p2, asm = None, None
        wires = tuple(
            mag.Wire(geometry=mag.InfiniteLine(
                point=np.array([0.0, s * d / 2, 0.0]), direction=X_HAT),
                i_dc=i_crit, i_rf=0.05) for s in (+1, -1))
        asm = mag.WireAssembly(wires=wires, bias=np.zeros(3),
                               drive=params.drive)
        assert ana.geometric_separation(params, asm) == pytest.approx(0.0,
                                                                      abs=1e-12)

    def test_same_minimum_rejected(self, params):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.05, bias=DIAG_BIAS)
        rm = ana.radial_trap_minimum(params, asm, 0, 1.0, 0.0, (1e-5, 6e-4))
        with pytest.raises(ValueError):
            ana.barrier_height(params, asm, rm.position, rm.position)


class TestCritical:
    def test_parallel_wire_geometric_oracle(self, params):
        rng = np.random.default_rng(5)
        for _ in range(3):
            d = rng.uniform(5e-5, 5e-4)
            i_crit = np.pi * d * resonance_field(params.species, params.drive) \
                / CODATA.mu0
            wires = tuple(
                mag.Wire(geometry=mag.InfiniteLine(
                    point=np.array([0.0, s * d / 2, 0.0]), direction=X_HAT),
                    i_dc=0.05, i_rf=0.05) for s in (+1, -1))
            asm = mag.WireAssembly(wires=wires, bias=np.zeros(3),
                                   drive=params.drive)
            lo, hi = 0.25 * i_crit, 4.0 * i_crit
            res = ana.critical_parameter(params, asm, "idc", (lo, hi),
                                         tol_param=1e-5, mode="geometric")
            assert abs(res.critical_value - i_crit) <= 2e-5
            assert res.barrier_at_solution <= res.touch_tolerance
            assert res.tolerance_achieved <= 1e-5

    def test_no_bracket_error(self, params):
        wires = tuple(
            mag.Wire(geometry=mag.InfiniteLine(
                point=np.array([0.0, s * 1e-4, 0.0]), direction=X_HAT),
                i_dc=0.01, i_rf=0.0) for s in (+1, -1))
        asm = mag.WireAssembly(wires=wires, bias=np.zeros(3),
                               drive=params.drive)
        with pytest.raises(NoBracketError):
            ana.critical_parameter(params, asm, "idc", (0.001, 0.002),
                                   tol_param=1e-5, mode="geometric")

    def test_frequency_parameter_moves_geometry(self, params):
        wires = tuple(
            mag.Wire(geometry=mag.InfiniteLine(
                point=np.array([0.0, s * 1e-4, 0.0]), direction=X_HAT),
                i_dc=0.05, i_rf=0.05) for s in (+1, -1))
        asm = mag.WireAssembly(wires=wires, bias=np.zeros(3),
                               drive=params.drive)
        sep_base = ana.geometric_separation(params, asm)
        p2, a2 = ana.apply_parameter(params, asm, "frequency", 1.6e6)
        sep_double = ana.geometric_separation(p2, a2)
        # doubling f doubles B_res, halving both radii
        d = ana.axis_distance(wires[0].geometry, wires[1].geometry)
        assert_allclose(d - sep_double, (d - sep_base) / 2, rtol=1e-12)


class TestSweeps:
    def test_min_radius_monotone_in_idc(self, params):
        asm = make_single_wire(i_dc=0.05, i_rf=0.05)
        rows = ana.parameter_sweep(params, asm, "idc", 0.02, 0.2, 7,
                                   "min_radius")
        values = [r.observable for r in rows]
        assert all(b > a for a, b in zip(values, values[1:]))
        expect = [rho_res(r.value, params) for r in rows]
        assert_allclose(values, expect, rtol=1e-4)

    def test_zero_length_range_single_row(self, params):
        asm = make_single_wire(i_dc=0.05, i_rf=0.05)
        rows = ana.parameter_sweep(params, asm, "idc", 0.05, 0.05, 5,
                                   "min_radius")
        assert len(rows) == 1

    def test_rows_ascending(self, params):
        asm = make_single_wire(i_dc=0.05, i_rf=0.05)
        rows = ana.parameter_sweep(params, asm, "idc", 0.2, 0.02, 4,
                                   "min_radius")
        values = [r.value for r in rows]
        assert values == sorted(values)
