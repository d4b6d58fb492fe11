"""Thermophysical closures: saturation curve, Hertz-Knudsen rate, far-field bounds.

Temperatures are in degrees Celsius at the API surface; Kelvin only appears
inside the ideal-gas conversion.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

KELVIN = 273.15
TETENS_P0 = 610.78  # Pa
TETENS_A = 17.27
TETENS_B = 237.3  # degC, pole of the exponent at -B

R_GAS = 8.314462618
M_WATER = 0.018015


class PhysicsError(ValueError):
    """Invalid thermophysical input (domain error, bracket failure, bad params)."""


def _check_pole(T):
    T = np.asarray(T, dtype=float)
    if np.any(T <= -TETENS_B):
        raise PhysicsError(f"temperature at or below the Tetens pole ({-TETENS_B} degC)")
    return T


def p_sat(T):
    """Saturation vapor pressure of water in Pa (Tetens fit, T in degC)."""
    T = _check_pole(T)
    out = TETENS_P0 * np.exp(TETENS_A * T / (T + TETENS_B))
    return out if out.ndim else float(out)


def dp_sat_dT(T):
    T = _check_pole(T)
    out = p_sat(T) * TETENS_A * TETENS_B / (T + TETENS_B) ** 2
    return out if np.ndim(out) else float(out)


def tetens_rho_sat(T, M_w=M_WATER, R_gas=R_GAS):
    """Saturated vapor mass density (kg/m^3) from the ideal gas law."""
    T = _check_pole(T)
    out = p_sat(T) * M_w / (R_gas * (T + KELVIN))
    return out if np.ndim(out) else float(out)


def tetens_drho_sat_dT(T, M_w=M_WATER, R_gas=R_GAS):
    T = _check_pole(T)
    Tk = T + KELVIN
    p = p_sat(T)
    out = M_w / R_gas * (dp_sat_dT(T) / Tk - p / Tk**2)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class TetensSaturation:
    """Water saturation curve rho_sat(T) = p_sat(T) M_w / (R (T + 273.15))."""

    M_w: float = M_WATER
    R_gas: float = R_GAS
    kind: str = field(default="tetens", init=False)

    def __call__(self, T):
        return tetens_rho_sat(T, self.M_w, self.R_gas)

    def derivative(self, T):
        return tetens_drho_sat_dT(T, self.M_w, self.R_gas)


@dataclass(frozen=True)
class RampSaturation:
    """Monotone Lipschitz surrogate used in nondimensional mode.

    ``rho_sat(T) = clip(rho_lo + slope * (T - T_lo), rho_lo, rho_hi)``.
    A zero slope gives a constant curve equal to ``rho_lo``.
    """

    T_lo: float
    rho_lo: float
    rho_hi: float
    slope: float
    kind: str = field(default="ramp", init=False)

    def __post_init__(self):
        if self.slope < 0 or self.rho_hi < self.rho_lo:
            raise PhysicsError("ramp surrogate must be nondecreasing")

    def __call__(self, T):
        T = np.asarray(T, dtype=float)
        out = np.clip(self.rho_lo + self.slope * (T - self.T_lo), self.rho_lo, self.rho_hi)
        return out if out.ndim else float(out)

    def derivative(self, T):
        T = np.asarray(T, dtype=float)
        if self.slope == 0.0:
            out = np.zeros_like(T)
        else:
            T_hi = self.T_lo + (self.rho_hi - self.rho_lo) / self.slope
            out = np.where((T >= self.T_lo) & (T <= T_hi), self.slope, 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class MaterialParams:
    """Physical coefficients of the droplet/air system (SI units).

    Defaults are standard water/air values around 60 degC. ``C_hk=None``
    means "derive from kinetic theory at the reference temperature".
    """

    rho_d: float = 997.0
    rho_g: float = 1.06
    cp_g: float = 1007.0
    k_g: float = 0.0287
    D_v: float = 2.9e-5
    Lambda: float = 2.43e6
    M_w: float = M_WATER
    R_gas: float = R_GAS
    beta: float = 1.0
    C_hk: float | None = None
    nondimensional: bool = False

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("nondimensional", "C_hk"):
                continue
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise PhysicsError(f"material coefficient {f.name} must be positive, got {v!r}")
        if not 0.0 < self.beta <= 1.0:
            raise PhysicsError(f"beta must lie in (0, 1], got {self.beta}")
        if self.C_hk is not None and not self.C_hk > 0:
            raise PhysicsError(f"C_hk must be positive, got {self.C_hk}")
        if self.nondimensional:
            bad = [f.name for f in fields(self)
                   if f.name != "nondimensional" and getattr(self, f.name) not in (1, 1.0)]
            if bad:
                raise PhysicsError(f"nondimensional mode requires unit coefficients: {bad}")

    @classmethod
    def unit(cls) -> "MaterialParams":
        """All coefficients equal to one."""
        return cls(rho_d=1.0, rho_g=1.0, cp_g=1.0, k_g=1.0, D_v=1.0, Lambda=1.0,
                   M_w=1.0, R_gas=1.0, beta=1.0, C_hk=1.0, nondimensional=True)

    @property
    def thermal_diffusivity(self) -> float:
        return self.k_g / (self.rho_g * self.cp_g)

    @property
    def latent_factor(self) -> float:
        # converts an evaporation mass flux into a temperature flux
        return self.Lambda / (self.rho_g * self.cp_g)

    def to_dict(self) -> dict:
        return asdict(self)


def hk_coefficient(params: MaterialParams, T_ref: float) -> float:
    """Hertz-Knudsen prefactor in m/s, frozen at ``T_ref`` (degC)."""
    if params.nondimensional:
        return 1.0
    if params.C_hk is not None:
        return float(params.C_hk)
    Tk = T_ref + KELVIN
    if Tk <= 0:
        raise PhysicsError("reference temperature must be above absolute zero")
    return params.beta * math.sqrt(params.R_gas * Tk / (2.0 * math.pi * params.M_w))


def _bisect_increasing(f, lo, hi, tol, max_iter=400):
    """Largest root of a nondecreasing f on [lo, hi] (f(lo) <= 0 < f(hi) or f(hi) <= 0)."""
    if f(hi) <= 0.0:
        return hi
    if f(lo) > 0.0:
        raise PhysicsError("root not bracketed")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) <= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_T_star(saturation, rho_inf: float, T_inf: float, T_lo: float = -100.0,
                 tol: float = 1e-12) -> float:
    """Temperature whose saturation density equals ``rho_inf`` (bisection).

    The default tolerance is tighter than needed for the temperature itself so
    that rho_sat(T_star) matches rho_inf to about 1e-13 relative.
    """
    rho_star = saturation(T_inf)
    if not 0.0 < rho_inf <= rho_star * (1.0 + 1e-15):
        raise PhysicsError("rho_inf must lie in (0, rho_sat(T_inf)]")
    if rho_inf >= rho_star:
        return float(T_inf)
    if saturation(T_lo) > rho_inf:
        raise PhysicsError(f"rho_inf below rho_sat({T_lo} degC); cannot bracket T_star")
    return _bisect_increasing(lambda T: saturation(T) - rho_inf, T_lo, T_inf, tol)


def lipschitz_L(saturation, T_star: float, T_inf: float, n: int = 2001,
                safety: float = 1.01) -> float:
    """Sampled maximum of d rho_sat/dT on [T_star, T_inf] times a safety factor."""
    if T_inf <= T_star:
        Ts = np.array([T_inf])
    else:
        Ts = np.linspace(T_star, T_inf, n)
    return safety * float(np.max(saturation.derivative(Ts)))


@dataclass(frozen=True)
class DryingState:
    """Far-field conditions together with the derived comparison bounds."""

    T_inf: float
    RH_inf: float
    rho_inf: float
    rho_star: float
    T_star: float
    L: float
    C_hk: float
    J_inf: float
    saturation: TetensSaturation | RampSaturation

    @classmethod
    def from_conditions(cls, params: MaterialParams, T_inf: float, RH_inf: float,
                        saturation=None, T_ref: float | None = None) -> "DryingState":
        if not 0.0 < RH_inf <= 1.0:
            raise PhysicsError(f"RH_inf must lie in (0, 1], got {RH_inf}")
        if saturation is None:
            if params.nondimensional:
                raise PhysicsError("nondimensional mode needs an explicit saturation surrogate")
            saturation = TetensSaturation(params.M_w, params.R_gas)
        rho_star = float(saturation(T_inf))
        rho_inf = RH_inf * rho_star
        T_star = solve_T_star(saturation, rho_inf, T_inf)
        L = lipschitz_L(saturation, T_star, T_inf)
        C = hk_coefficient(params, T_inf if T_ref is None else T_ref)
        return cls(T_inf=float(T_inf), RH_inf=float(RH_inf), rho_inf=rho_inf,
                   rho_star=rho_star, T_star=T_star, L=L, C_hk=C,
                   J_inf=C * (rho_star - rho_inf), saturation=saturation)

    @classmethod
    def nondimensional(cls, T_inf: float = 1.0, RH_inf: float = 0.1, rho_star: float = 1.0,
                       slope: float = 1.0) -> "DryingState":
        """Unit-coefficient drying state with the clamped linear saturation ramp."""
        rho_inf = RH_inf * rho_star
        if slope > 0:
            T_star = T_inf - (rho_star - rho_inf) / slope
        else:
            if RH_inf != 1.0:
                raise PhysicsError("zero ramp slope requires RH_inf = 1")
            T_star = T_inf
        ramp = RampSaturation(T_lo=T_star, rho_lo=rho_inf, rho_hi=rho_star, slope=slope)
        L = slope * 1.01 if slope > 0 else 0.0
        return cls(T_inf=float(T_inf), RH_inf=float(RH_inf), rho_inf=rho_inf,
                   rho_star=rho_star, T_star=T_star, L=L, C_hk=1.0,
                   J_inf=rho_star - rho_inf, saturation=ramp)

    def rho_sat(self, T):
        return self.saturation(T)

    def drho_sat_dT(self, T):
        return self.saturation.derivative(T)

    def evap_rate(self, T_s, rho_s):
        """Hertz-Knudsen mass flux C (rho_sat(T_s) - rho_s) in kg/(m^2 s)."""
        return self.C_hk * (self.saturation(T_s) - np.asarray(rho_s, dtype=float))

    def with_saturation(self, **kw) -> "DryingState":
        return replace(self, **kw)
