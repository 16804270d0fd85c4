"""Adiabatic RF-dressed effective potential and its analytic gradient.

The implemented potential is the standard adiabatic dressed-level form
under the rotating-wave approximation, with the directional Rabi coupling
(only the RF component perpendicular to the local static field drives the
transition):

    delta(p) = |g| muB |B_dc(p)| / hbar - omega          detuning [rad/s]
    Omega(p) = |g| muB |B_rf_perp(p)| / (2 hbar)         Rabi rate [rad/s]
    U(p)     = m hbar sqrt(delta^2 + Omega^2)            energy [J]

with g the g-factor and m the signed dressed-level index. Weak-field
seekers (g*m > 0) see minima near delta = 0; negating m flips the sign of
U everywhere, which is how strong-field seekers are represented.

The gradient is exact (chain rule through |B_dc|, the perpendicular
projector, and the Biot-Savart Jacobians). It is undefined at conical
points delta = Omega = 0 and wherever |B_dc| falls below the assembly's
zero threshold (no quantization axis); vectorized evaluation reports
those through flags instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import magnetostatics as mag
from .errors import (NonDifferentiablePointError, QuantizationAxisError,
                     SingularityError)
from .model import CODATA, AtomSpecies, RFDrive

# per-point status flags for vectorized evaluation
OK = 0
FENCED = 1          # inside a wire's exclusion radius
NO_AXIS = 2         # |B_dc| below the zero threshold
DEGENERATE = 3      # delta = Omega = 0: U defined, gradient is not


@dataclass(frozen=True)
class DressedParams:
    """Species plus drive; fixes every constant in the potential."""

    species: AtomSpecies
    drive: RFDrive

    @property
    def g_mu(self) -> float:
        """|g_factor| * muB [J/T]."""
        return abs(self.species.g_factor) * CODATA.muB


@dataclass(frozen=True)
class PotentialSample:
    """Potential and its ingredients at one point."""

    p: np.ndarray        # [m]
    U: float             # [J]
    grad: np.ndarray | None  # [J/m], None at non-differentiable points
    delta: float         # [rad/s]
    rabi: float          # [rad/s]
    b_mag: float         # [T]


def detuning(params: DressedParams, assembly: mag.WireAssembly, points,
             check: bool = True) -> np.ndarray | float:
    """delta = |g| muB |B_dc| / hbar - omega, vectorized over points."""
    b = mag.b_dc(assembly, points, check=check)
    bmag = np.linalg.norm(np.atleast_2d(b), axis=1)
    out = params.g_mu * bmag / CODATA.hbar - params.drive.omega
    return float(out[0]) if np.ndim(points) == 1 else out


def rabi_frequency(params: DressedParams, assembly: mag.WireAssembly, points,
                   check: bool = True) -> np.ndarray | float:
    """Omega from the RF component perpendicular to the local static field."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    b = np.atleast_2d(mag.b_dc(assembly, p, check=check))
    bmag = np.linalg.norm(b, axis=1)
    if np.any(bmag <= assembly.zero_threshold):
        raise QuantizationAxisError(
            "|B_dc| below zero threshold: quantization axis undefined")
    brf = np.atleast_2d(mag.b_rf_amplitude(assembly, p, check=False))
    q = np.einsum("ij,ij->i", brf, b) / bmag
    perp2 = np.maximum(np.einsum("ij,ij->i", brf, brf) - q * q, 0.0)
    out = params.g_mu * np.sqrt(perp2) / (2.0 * CODATA.hbar)
    return float(out[0]) if np.ndim(points) == 1 else out


def evaluate(params: DressedParams, assembly: mag.WireAssembly, points,
             need_grad: bool = True) -> dict:
    """Vectorized dressed-potential evaluation.

    Returns a dict of arrays over the input points: U, grad, delta, rabi,
    b_mag, b_dc, b_rf, flags. Entries at flagged points hold NaN rather
    than poisoning neighbors; callers choose whether to raise.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(p)
    hbar = CODATA.hbar
    gmu = params.g_mu
    m_level = params.species.dressed_level

    flags = np.full(n, OK, dtype=np.int8)
    fence_ok = mag.off_fence(assembly, p)
    flags[~fence_ok] = FENCED

    b = np.full((n, 3), np.nan)
    if np.any(fence_ok):
        b[fence_ok] = mag.b_dc(assembly, p[fence_ok], check=False)
    bmag = np.linalg.norm(b, axis=1)
    no_axis = fence_ok & (bmag <= assembly.zero_threshold)
    flags[no_axis] = NO_AXIS
    usable = fence_ok & ~no_axis

    brf = np.full((n, 3), np.nan)
    if np.any(usable):
        brf[usable] = mag.b_rf_amplitude(assembly, p[usable], check=False)

    with np.errstate(invalid="ignore", divide="ignore"):
        bhat = b / bmag[:, None]
        q = np.einsum("ij,ij->i", brf, bhat)
        perp2 = np.maximum(np.einsum("ij,ij->i", brf, brf) - q * q, 0.0)
        delta = gmu * bmag / hbar - params.drive.omega
        omega2 = (gmu / (2.0 * hbar)) ** 2 * perp2
        w = delta * delta + omega2
        u_val = m_level * hbar * np.sqrt(w)

    rabi = np.sqrt(omega2)
    grad = np.full((n, 3), np.nan)
    jac_dc = np.full((n, 3, 3), np.nan)
    if need_grad:
        degenerate = usable & (w == 0.0)
        flags[degenerate] = DEGENERATE
        live = usable & ~degenerate
        if np.any(live):
            jac = mag.b_dc_jacobian(assembly, p[live], check=False)
            jac_dc[live] = jac
            jrf = mag.b_rf_jacobian(assembly, p[live], check=False)
            bh = bhat[live]
            bl = brf[live]
            ql = q[live]
            grad_bmag = np.einsum("nik,ni->nk", jac, bh)
            grad_delta = gmu / hbar * grad_bmag
            brf_perp = bl - ql[:, None] * bh
            grad_q = (np.einsum("nik,ni->nk", jrf, bh)
                      + np.einsum("nik,ni->nk", jac, brf_perp) / bmag[live, None])
            grad_perp2 = 2.0 * np.einsum("nik,ni->nk", jrf, bl) - 2.0 * ql[:, None] * grad_q
            grad_w = (2.0 * delta[live, None] * grad_delta
                      + (gmu / (2.0 * hbar)) ** 2 * grad_perp2)
            grad[live] = (m_level * hbar * 0.5 / np.sqrt(w[live]))[:, None] * grad_w

    bad = flags != OK
    for arr in (delta, rabi, u_val):
        arr[bad] = np.nan
    if need_grad:
        grad[flags != OK] = np.nan

    return {
        "U": u_val, "grad": grad, "delta": delta, "rabi": rabi,
        "b_mag": bmag, "b_dc": b, "b_rf": brf, "flags": flags,
        "jac_dc": jac_dc,
    }


def _raise_for_flag(flag: int, assembly: mag.WireAssembly, point: np.ndarray) -> None:
    if flag == FENCED:
        dists = mag.fence_distances(assembly, point)
        i = int(np.argmin(dists[0]))
        raise SingularityError(i, float(dists[0, i]), assembly.eps_axis)
    if flag == NO_AXIS:
        raise QuantizationAxisError(
            f"|B_dc| below zero threshold at {np.asarray(point).tolist()}")
    if flag == DEGENERATE:
        raise NonDifferentiablePointError(
            "detuning and Rabi frequency both vanish: conical point")


def dressed_potential(params: DressedParams, assembly: mag.WireAssembly,
                      point) -> PotentialSample:
    """Full PotentialSample at a single point; raises on fenced/axis failures."""
    p = np.asarray(point, dtype=float).reshape(3)
    out = evaluate(params, assembly, p[None, :], need_grad=True)
    flag = int(out["flags"][0])
    if flag in (FENCED, NO_AXIS):
        _raise_for_flag(flag, assembly, p[None, :])
    grad = None if flag == DEGENERATE else out["grad"][0]
    if flag == DEGENERATE:
        # U is still defined (= 0) at a conical point
        u_val, delta, rabi = 0.0, 0.0, 0.0
    else:
        u_val = float(out["U"][0])
        delta = float(out["delta"][0])
        rabi = float(out["rabi"][0])
    return PotentialSample(p=p, U=u_val, grad=grad, delta=delta, rabi=rabi,
                           b_mag=float(out["b_mag"][0]))


def potential_gradient(params: DressedParams, assembly: mag.WireAssembly,
                       point) -> np.ndarray:
    """Analytic gradient of U [J/m] at a single point; raises where undefined."""
    p = np.asarray(point, dtype=float).reshape(3)
    out = evaluate(params, assembly, p[None, :], need_grad=True)
    flag = int(out["flags"][0])
    if flag != OK:
        _raise_for_flag(flag, assembly, p[None, :])
    return out["grad"][0]


def potential_only(params: DressedParams, assembly: mag.WireAssembly, points):
    """(U, valid) arrays for grid sampling; no gradient work."""
    out = evaluate(params, assembly, points, need_grad=False)
    return out["U"], out["flags"] == OK


def potential_and_gradient(params: DressedParams, assembly: mag.WireAssembly, points):
    """(U, grad, valid) arrays; the fast path for descent, band relaxation,
    and trajectory integration."""
    out = evaluate(params, assembly, points, need_grad=True)
    return out["U"], out["grad"], out["flags"] == OK
