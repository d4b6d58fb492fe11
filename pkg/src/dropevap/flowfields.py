"""Ambient air-flow models on the rescaled shell plus structural validators.

Velocities are physical (m/s) but evaluated at rescaled coordinates; the
discretization divides by the droplet radius itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_OMEGA = 2.0 * math.pi * 58_000.0
DEFAULT_C0 = 343.0


def spl_to_amplitude(spl: float) -> float:
    """Sound pressure level in dB to pressure amplitude in Pa (1 Pa <-> 94 dB)."""
    return 10.0 ** ((spl - 94.0) / 20.0)


def amplitude_to_spl(A: float) -> float:
    if not A > 0:
        raise ValueError(f"amplitude must be positive, got {A}")
    return 20.0 * math.log10(A) + 94.0


@dataclass(frozen=True)
class Stagnant:
    kind = "stagnant"

    def eval(self, theta, r, R=None):
        z = np.zeros(np.broadcast(np.asarray(theta), np.asarray(r)).shape)
        return z, z.copy()

    def describe(self) -> dict:
        return {"kind": "stagnant"}


@dataclass(frozen=True)
class Stokes:
    """Creeping flow past a sphere, far-field speed ``V_inf`` along the axis."""

    V_inf: float
    kind = "stokes"

    def eval(self, theta, r, R=None):
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        ir = 1.0 / r
        ir3 = ir**3
        v_theta = -self.V_inf * np.sin(theta) * (1.0 - 0.25 * ir3 - 0.75 * ir)
        v_r = self.V_inf * np.cos(theta) * (1.0 + 0.5 * ir3 - 1.5 * ir)
        return v_theta, v_r

    def describe(self) -> dict:
        return {"kind": "stokes", "V_inf_m_per_s": self.V_inf}


@dataclass(frozen=True)
class Acoustic:
    """Outer acoustic streaming around a levitated droplet.

    ``rho_g`` is carried here because the streaming prefactor depends on it.
    """

    A: float
    rho_g: float
    omega: float = DEFAULT_OMEGA
    c0: float = DEFAULT_C0
    kind = "acoustic"

    def prefactor(self, R: float) -> float:
        if not R > 0:
            raise ValueError("acoustic streaming needs a positive droplet radius")
        return 45.0 * self.A**2 / (32.0 * self.omega * R * self.rho_g**2 * self.c0**2)

    def eval(self, theta, r, R):
        K = self.prefactor(R)
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        ir2 = 1.0 / r**2
        ir4 = ir2 * ir2
        v_theta = -K * ir4 * np.sin(2.0 * theta)
        v_r = K * (ir2 - ir4) * (3.0 * np.cos(theta) ** 2 - 1.0)
        return v_theta, v_r

    @property
    def spl(self) -> float:
        return amplitude_to_spl(self.A)

    def describe(self) -> dict:
        d = {"kind": "acoustic", "A_Pa": self.A, "SPL_dB": self.spl,
             "omega_rad_s": self.omega, "c0_m_s": self.c0, "rho_g_kg_m3": self.rho_g}
        return d


def divergence(model, theta, r, R, h: float = 1e-5):
    """Axisymmetric spherical divergence by central differences."""
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    _, vr_p = model.eval(theta, r + h, R)
    _, vr_m = model.eval(theta, r - h, R)
    vt_p, _ = model.eval(theta + h, r, R)
    vt_m, _ = model.eval(theta - h, r, R)
    d_r = ((r + h) ** 2 * vr_p - (r - h) ** 2 * vr_m) / (2.0 * h * r**2)
    d_t = (np.sin(theta + h) * vt_p - np.sin(theta - h) * vt_m) / (2.0 * h * r * np.sin(theta))
    return d_r + d_t


def check_divergence(model, grid, R: float = 1.0, h: float = 1e-5) -> float:
    """Max |div v| over cell centers, normalized by the local speed over radius."""
    th, r = grid.centers()
    div = divergence(model, th, r, R, h)
    vt, vr = model.eval(th, r, R)
    speed = np.hypot(vt, vr)
    scale = np.max(speed / r)
    if scale == 0.0:
        return float(np.max(np.abs(div)))
    return float(np.max(np.abs(div)) / scale)


def lipschitz_in_R(model, R1: float, R2: float, grid) -> float:
    """Sup over cell centers of |v(x R1) - v(x R2)| in rescaled coordinates."""
    th, r = grid.centers()
    a = np.stack(model.eval(th, r, R1))
    b = np.stack(model.eval(th, r, R2))
    return float(np.max(np.sqrt(np.sum((a - b) ** 2, axis=0))))


def acoustic_lipschitz_oracle(model: "Acoustic", R: float, grid) -> float:
    """Closed-form |d/dR v(x R)| sup over cell centers: (K(R)/R) times the shape maximum."""
    th, r = grid.centers()
    shape_t = np.sin(2.0 * th) / r**4
    shape_r = (1.0 / r**2 - 1.0 / r**4) * (3.0 * np.cos(th) ** 2 - 1.0)
    return model.prefactor(R) / R * float(np.max(np.hypot(shape_t, shape_r)))


def model_from_dict(d: dict, rho_g: float):
    kind = d.get("kind", "stagnant")
    if kind == "stagnant":
        return Stagnant()
    if kind == "stokes":
        return Stokes(float(d["V_inf_m_per_s"]))
    if kind == "acoustic":
        has_spl, has_A = "SPL_dB" in d, "A_Pa" in d
        if has_spl == has_A:
            raise ValueError("acoustic flow needs exactly one of SPL_dB or A_Pa")
        A = spl_to_amplitude(float(d["SPL_dB"])) if has_spl else float(d["A_Pa"])
        if not A > 0:
            raise ValueError("acoustic amplitude must be positive")
        return Acoustic(A=A, rho_g=float(d.get("rho_g_kg_m3", rho_g)),
                        omega=float(d.get("omega_rad_s", DEFAULT_OMEGA)),
                        c0=float(d.get("c0_m_s", DEFAULT_C0)))
    raise ValueError(f"unknown flow kind {kind!r}")


def describe(model) -> dict:
    if hasattr(model, "describe"):
        return model.describe()
    return {"kind": type(model).__name__}


__all__ = ["Stagnant", "Stokes", "Acoustic", "spl_to_amplitude", "amplitude_to_spl",
           "check_divergence", "divergence", "lipschitz_in_R", "acoustic_lipschitz_oracle", "model_from_dict"]
