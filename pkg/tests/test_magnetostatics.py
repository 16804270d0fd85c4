"""Biot-Savart fields, Jacobians, superposition, and zero detection."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

import wiretrap.magnetostatics as mag
from wiretrap.errors import (SingularityError, UnsupportedConfigurationError)
from wiretrap.grids import GridSpec
from wiretrap.model import CODATA, RFDrive, resonance_field, RB87_LIKE

from conftest import X_HAT, Y_HAT, Z_HAT, make_crossed, make_single_wire

MU0 = CODATA.mu0


def x_wire(i_dc=1.0, i_rf=0.0):
    return mag.Wire(geometry=mag.InfiniteLine(point=np.zeros(3), direction=X_HAT),
                    i_dc=i_dc, i_rf=i_rf)


def segment_quadrature_field(a, b, current, p):
    """Adaptive quadrature of the Biot-Savart integrand; independent oracle."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    p = np.asarray(p, float)

    def integrand(t, comp):
        x = a + t * (b - a)
        r = p - x
        v = np.cross(b - a, r) / np.linalg.norm(r) ** 3
        return v[comp]

    out = np.array([quad(integrand, 0.0, 1.0, args=(c,), epsabs=1e-18,
                         epsrel=1e-13, limit=200)[0] for c in range(3)])
    return MU0 * current / (4.0 * np.pi) * out


class TestInfiniteWire:
    def test_closed_form_value(self):
        line = mag.InfiniteLine(point=np.zeros(3), direction=X_HAT)
        b = mag.infinite_line_field(line, 1.0, np.array([0.0, 0.01, 0.0]))
        assert_allclose(b, [0.0, 0.0, MU0 / (2.0 * np.pi * 0.01)], rtol=1e-14)
        assert_allclose(b[2], 2.0e-5, rtol=1e-9)

    def test_linearity_in_current(self):
        line = mag.InfiniteLine(point=np.zeros(3), direction=X_HAT)
        p = np.array([0.2, 0.01, -0.03])
        assert_allclose(mag.infinite_line_field(line, -1.0, p),
                        -mag.infinite_line_field(line, 1.0, p), rtol=1e-15)

    def test_on_axis_singularity(self):
        asm = make_single_wire(i_dc=1.0, i_rf=0.0)
        with pytest.raises(SingularityError):
            mag.b_dc(asm, np.array([0.5, 0.0, 0.0]))

    def test_random_points_match_mu0_i_over_2pirho(self):
        rng = np.random.default_rng(11)
        point = rng.uniform(-1, 1, 3)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        line = mag.InfiniteLine(point=point, direction=direction)
        for _ in range(100):
            p = rng.uniform(-2, 2, 3)
            rho_vec = (p - point) - ((p - point) @ direction) * direction
            rho = np.linalg.norm(rho_vec)
            if rho < 1e-3:
                continue
            b = mag.infinite_line_field(line, 0.37, p)
            assert_allclose(np.linalg.norm(b), MU0 * 0.37 / (2 * np.pi * rho),
                            rtol=1e-12)
            assert abs(b @ direction) <= 1e-18
            assert abs(b @ rho_vec) <= 1e-18 * rho

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        line = mag.InfiniteLine(point=rng.uniform(-1, 1, 3), direction=d)
        for _ in range(25):
            p = rng.uniform(-2, 2, 3)
            if mag.infinite_line_distance(line, p) < 0.05:
                continue
            jac = mag.infinite_line_jacobian(line, 1.3, p)
            h = 1e-7
            fd = np.zeros((3, 3))
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                fd[:, k] = (mag.infinite_line_field(line, 1.3, p + e)
                            - mag.infinite_line_field(line, 1.3, p - e)) / (2 * h)
            assert_allclose(jac, fd, rtol=0, atol=1e-6 * np.abs(fd).max())


class TestPolyline:
    def test_single_long_segment_matches_infinite(self):
        seg = mag.Polyline(vertices=np.array([[-1e3, 0, 0], [1e3, 0, 0]]))
        line = mag.InfiniteLine(point=np.zeros(3), direction=X_HAT)
        p = np.array([0.0, 0.01, 0.0])
        b_seg = mag.polyline_field(seg, 1.0, p)
        b_lin = mag.infinite_line_field(line, 1.0, p)
        assert np.linalg.norm(b_seg - b_lin) / np.linalg.norm(b_lin) < 1e-8

    def test_segment_matches_quadrature(self):
        a = np.array([-0.7, 0.2, -0.1])
        b = np.array([0.9, -0.3, 0.5])
        p = np.array([0.15, 0.4, 0.2])
        got = mag.polyline_field(mag.Polyline(vertices=np.array([a, b])), 1.3, p)
        want = segment_quadrature_field(a, b, 1.3, p)
        assert_allclose(got, want, rtol=1e-10)

    def test_square_loop_center(self):
        a = 0.3
        h = a / 2
        sq = mag.Polyline(vertices=np.array(
            [[h, h, 0], [-h, h, 0], [-h, -h, 0], [h, -h, 0], [h, h, 0]]))
        b = mag.polyline_field(sq, 2.0, np.zeros(3))
        expect = 2.0 * np.sqrt(2.0) * MU0 * 2.0 / (np.pi * a)
        assert_allclose(np.linalg.norm(b), expect, rtol=1e-12)
        assert_allclose(b[:2], 0.0, atol=1e-20)

    def test_vertex_reversal_negates(self):
        verts = np.array([[-1.0, 0, 0], [0, 0.3, 0.1], [1.0, -0.2, 0.4]])
        p = np.array([0.3, 0.5, -0.2])
        fwd = mag.polyline_field(mag.Polyline(vertices=verts), 1.0, p)
        rev = mag.polyline_field(mag.Polyline(vertices=verts[::-1]), 1.0, p)
        assert_allclose(rev, -fwd, rtol=1e-14)

    def test_infinite_limit_length_1e6(self):
        rho = 0.01
        half = 0.5e6 * rho
        seg = mag.Polyline(vertices=np.array([[-half, 0, 0], [half, 0, 0]]))
        line = mag.InfiniteLine(point=np.zeros(3), direction=X_HAT)
        for p in ([0.0, rho, 0.0], [2.0, 0.0, rho], [-3.0, rho / 2, rho / 2]):
            p = np.array(p)
            b_seg = mag.polyline_field(seg, 1.0, p)
            b_lin = mag.infinite_line_field(line, 1.0, p)
            assert np.linalg.norm(b_seg - b_lin) / np.linalg.norm(b_lin) < 1e-8

    def test_polyline_validation(self):
        with pytest.raises(ValueError):
            mag.Polyline(vertices=np.array([[0.0, 0, 0]]))
        with pytest.raises(ValueError):
            mag.Polyline(vertices=np.array([[0.0, 0, 0], [0.0, 0, 0], [1, 0, 0]]))


class TestAssemblyFields:
    def test_zero_currents_bias_only(self):
        asm = make_single_wire(i_dc=0.0, i_rf=0.0, bias=(0, 0, 1e-4))
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, (20, 3))
        b = mag.b_dc(asm, pts, check=False)
        assert_allclose(b, np.tile([0, 0, 1e-4], (20, 1)), rtol=0, atol=0)

    def test_crossed_superposition_on_diagonal(self):
        asm = make_crossed(i_dc=0.4, i_rf=0.0)
        p = np.array([2e-4, 2e-4, 0.0])
        total = mag.b_dc(asm, p)
        parts = sum(mag.wire_field(w.geometry, w.i_dc, p) for w in asm.wires)
        assert_allclose(total, parts, rtol=1e-15)
        # equal co-directed currents cancel on the diagonal midline
        assert np.linalg.norm(total) <= 1e-12 * MU0 * 0.4 / (2 * np.pi * 2e-4)

    def test_single_wire_resonance_radius_field(self, drive):
        asm = make_single_wire(i_dc=0.0925, i_rf=0.0)
        b_res = resonance_field(RB87_LIKE, drive)
        rho_res = MU0 * 0.0925 / (2.0 * np.pi * b_res)
        assert_allclose(rho_res, 1.6183e-4, rtol=1e-4)
        b = mag.b_dc(asm, np.array([0.0, rho_res, 0.0]))
        assert_allclose(np.linalg.norm(b), b_res, rtol=1e-12)

    def test_linearity_property(self):
        rng = np.random.default_rng(9)
        asm = make_crossed(i_dc=0.3, i_rf=0.0, bias=(1e-5, -2e-5, 3e-5))
        alpha = 1.7
        scaled = mag.WireAssembly(
            wires=tuple(mag.Wire(geometry=w.geometry, i_dc=alpha * w.i_dc,
                                 i_rf=w.i_rf, rf_phase=w.rf_phase)
                        for w in asm.wires),
            bias=alpha * np.asarray(asm.bias), drive=asm.drive)
        for _ in range(50):
            p = rng.uniform(-1e-3, 1e-3, 3)
            if not mag.off_fence(asm, p):
                continue
            assert_allclose(mag.b_dc(scaled, p), alpha * mag.b_dc(asm, p),
                            rtol=1e-13)

    def test_divergence_free(self):
        asm = make_crossed(i_dc=0.3, i_rf=0.0, bias=(1e-5, 0, 2e-5))
        rng = np.random.default_rng(21)
        h = 1e-7
        checked = 0
        while checked < 30:
            p = rng.uniform(-1e-3, 1e-3, 3)
            dist = mag.fence_distances(asm, p).min()
            if dist < 1e-4:
                continue
            div = 0.0
            for k in range(3):
                e = np.zeros(3)
                e[k] = h
                db = mag.b_dc(asm, p + e) - mag.b_dc(asm, p - e)
                div += db[k] / (2 * h)
            bmag = np.linalg.norm(mag.b_dc(asm, p))
            assert abs(div) * dist / bmag <= 1e-6
            checked += 1

    def test_rf_amplitude_direction_and_magnitude(self):
        asm = make_single_wire(i_dc=0.0, i_rf=0.05)
        b = mag.b_rf_amplitude(asm, np.array([0.0, 1e-4, 0.0]))
        assert_allclose(b, [0.0, 0.0, MU0 * 0.05 / (2 * np.pi * 1e-4)], rtol=1e-12)
        assert_allclose(b[2], 1e-4, rtol=1e-9)

    def test_rf_zero_and_scaling(self):
        asm = make_crossed(i_dc=0.1, i_rf=0.0)
        p = np.array([1e-4, 3e-4, 1e-4])
        assert_allclose(mag.b_rf_amplitude(asm, p), np.zeros(3), atol=0)
        asm1 = make_crossed(i_dc=0.1, i_rf=0.02)
        asm2 = make_crossed(i_dc=0.1, i_rf=0.04)
        assert_allclose(mag.b_rf_amplitude(asm2, p),
                        2.0 * mag.b_rf_amplitude(asm1, p), rtol=1e-15)

    def test_rf_bias_does_not_contribute(self):
        asm = make_single_wire(i_dc=0.0, i_rf=0.05, bias=(5e-5, 0, 0))
        b = mag.b_rf_amplitude(asm, np.array([0.0, 1e-4, 0.0]))
        assert b[0] == 0.0

    def test_unequal_rf_phases_rejected(self):
        wire_a = mag.Wire(geometry=mag.InfiniteLine(point=np.zeros(3), direction=X_HAT),
                          i_rf=0.05, rf_phase=0.0)
        wire_b = mag.Wire(geometry=mag.InfiniteLine(point=np.zeros(3), direction=Y_HAT),
                          i_rf=0.05, rf_phase=0.5)
        asm = mag.WireAssembly(wires=(wire_a, wire_b), bias=np.zeros(3),
                               drive=RFDrive(0.8e6))
        with pytest.raises(UnsupportedConfigurationError):
            mag.b_rf_amplitude(asm, np.array([1e-4, 2e-4, 0.0]))

    def test_common_nonzero_phase_allowed(self):
        wire_a = mag.Wire(geometry=mag.InfiniteLine(point=np.zeros(3), direction=X_HAT),
                          i_rf=0.05, rf_phase=1.0)
        wire_b = mag.Wire(geometry=mag.InfiniteLine(point=np.zeros(3), direction=Y_HAT),
                          i_rf=0.05, rf_phase=1.0 + 2 * np.pi)
        asm = mag.WireAssembly(wires=(wire_a, wire_b), bias=np.zeros(3),
                               drive=RFDrive(0.8e6))
        mag.b_rf_amplitude(asm, np.array([1e-4, 2e-4, 0.0]))


class TestFieldZeros:
    def grid(self, half=1e-3, n=16):
        return GridSpec(origin=(-half, -half, -half),
                        extents=(2 * half, 2 * half, 2 * half),
                        resolution=(n, n, n))

    def test_parallel_wires_midline_zero(self):
        d = 4e-4
        wires = (
            mag.Wire(geometry=mag.InfiniteLine(point=np.array([0, d / 2, 0.0]),
                                               direction=X_HAT), i_dc=0.1),
            mag.Wire(geometry=mag.InfiniteLine(point=np.array([0, -d / 2, 0.0]),
                                               direction=X_HAT), i_dc=0.1),
        )
        asm = mag.WireAssembly(wires=wires, bias=np.zeros(3), drive=RFDrive(0.8e6))
        found = mag.find_field_zeros(asm, self.grid())
        assert len(found.zeros) >= 3
        for z in found.zeros:
            assert np.linalg.norm(mag.b_dc(asm, z)) < found.threshold
            assert abs(z[1]) < 1e-6 and abs(z[2]) < 1e-6

    def test_axial_bias_removes_zeros(self):
        d = 4e-4
        wires = (
            mag.Wire(geometry=mag.InfiniteLine(point=np.array([0, d / 2, 0.0]),
                                               direction=X_HAT), i_dc=0.1),
            mag.Wire(geometry=mag.InfiniteLine(point=np.array([0, -d / 2, 0.0]),
                                               direction=X_HAT), i_dc=0.1),
        )
        asm = mag.WireAssembly(wires=wires, bias=np.array([2e-5, 0, 0]),
                               drive=RFDrive(0.8e6))
        found = mag.find_field_zeros(asm, self.grid())
        assert len(found.zeros) == 0
        # oracle: dense scan confirms min |B| is the bias floor, above threshold
        spec = self.grid(n=24)
        pts = spec.nodes()
        ok = mag.off_fence(asm, pts)
        bmin = np.linalg.norm(mag.b_dc(asm, pts[ok], check=False), axis=1).min()
        assert bmin > found.threshold

    def test_side_guide_zero_line_position(self):
        i_dc = 0.1
        b_bias = 5e-5
        rho_zero = MU0 * i_dc / (2 * np.pi * b_bias)
        asm = make_single_wire(i_dc=i_dc, i_rf=0.0, bias=(0.0, b_bias, 0.0))
        spec = GridSpec(origin=(-1e-3, -1e-3, -1e-3),
                        extents=(2e-3, 2e-3, 2e-3), resolution=(20, 20, 20))
        found = mag.find_field_zeros(asm, spec)
        assert len(found.zeros) >= 1
        for z in found.zeros:
            # wire along x with bias +y: cancellation on the z > 0 side
            assert abs(z[2] - rho_zero) <= spec.cell_diagonal
            assert abs(z[1]) <= spec.cell_diagonal
            assert np.linalg.norm(mag.b_dc(asm, z)) < found.threshold

    def test_resolution_precondition(self):
        asm = make_single_wire()
        spec = GridSpec(origin=(-1e-3,) * 3, extents=(2e-3,) * 3,
                        resolution=(4, 16, 16))
        with pytest.raises(ValueError):
            mag.find_field_zeros(asm, spec)
