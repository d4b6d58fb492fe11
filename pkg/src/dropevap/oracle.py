"""Analytic references: the d^2-law with its wet-bulb temperature, and a
harmonic manufactured profile for checking the spherical Laplacian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import Field, Kind
from .physics import _bisect_increasing


@dataclass(frozen=True)
class D2Law:
    T_d: float
    slope: float  # d(R^2)/dt in m^2/s
    R0: float | None = None

    @property
    def lifetime(self) -> float:
        if self.R0 is None:
            raise ValueError("lifetime needs R0")
        if self.slope >= 0:
            return float("inf")
        return self.R0**2 / -self.slope


def wet_bulb_residual(T, params, drying):
    """F(T) = (rho_sat(T) - rho_inf) - k/(D Lambda) (T_inf - T); increasing in T."""
    return (drying.rho_sat(T) - drying.rho_inf
            - params.k_g / (params.D_v * params.Lambda) * (drying.T_inf - T))


def solve_wet_bulb(params, drying, tol: float = 1e-10) -> float:
    """Uniform droplet temperature from the heat/mass balance, by bisection."""
    if drying.RH_inf >= 1.0 or drying.T_star >= drying.T_inf:
        return float(drying.T_inf)
    return _bisect_increasing(lambda T: wet_bulb_residual(T, params, drying),
                              drying.T_star, drying.T_inf, tol)


def d2_law(params, drying, R0: float | None = None) -> D2Law:
    T_d = solve_wet_bulb(params, drying)
    slope = -2.0 * params.k_g * (drying.T_inf - T_d) / (params.rho_d * params.Lambda)
    return D2Law(T_d, slope, R0)


def d2_radius_sq(t, R0: float, law: D2Law):
    return np.maximum(R0**2 + law.slope * np.asarray(t, dtype=float), 0.0)


def harmonic_profile(grid, a: float, b: float, kind: Kind = Kind.TEMPERATURE) -> Field:
    """u = a + b/r at cell centers, with the exact trace a + b on the droplet surface."""
    _, r = grid.centers()
    return Field(a + b / r, np.full(grid.n_theta, a + b), kind)


def fit_r2_slope(t, R2, t_max: float | None = None) -> float:
    """Least-squares slope of R^2(t), optionally restricted to t <= t_max."""
    t = np.asarray(t, dtype=float)
    R2 = np.asarray(R2, dtype=float)
    if t_max is not None:
        keep = t <= t_max
        t, R2 = t[keep], R2[keep]
    if t.size < 2:
        raise ValueError("need at least two samples to fit a slope")
    return float(np.polyfit(t, R2, 1)[0])


def linearity_deviation(t, y) -> float:
    """Max deviation of y(t) from its least-squares line."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.polyfit(t, y, 1)
    return float(np.max(np.abs(y - np.polyval(c, t))))


def harmonic_solve_error(grid, a: float = 2.0, b: float = 3.0) -> float:
    """Max cell error of the steady diffusion solve with exact data at both boundaries."""
    import math

    from .discretization import (GridGeometry, apply_dirichlet_far, assemble_transport,
                                 solve_sparse)
    from .flowfields import Stagnant

    geo = GridGeometry(grid)
    system = assemble_transport(geo, Kind.TEMPERATURE, 1.0, 1.0, 0.0, math.inf, None, Stagnant())
    apply_dirichlet_far(system, geo, a + b / grid.r_out)
    system.rhs[geo.surf_idx] = a + b  # identity trace rows pin the surface value
    x = solve_sparse(system.matrix, system.rhs)
    exact = harmonic_profile(grid, a, b, Kind.TEMPERATURE).values.ravel()
    return float(np.max(np.abs(x[: geo.n] - exact)))


def harmonic_convergence(levels: int = 4, n_theta: int = 4, n_r0: int = 128,
                         stretch0: float = 1.04 ** 0.5, r_out: float = 50.0,
                         a: float = 2.0, b: float = 3.0) -> list[dict]:
    """Refinement study for u = a + b/r: n_r doubles and the stretch takes its square root,
    so every level refines the same smooth mapping."""
    from .geometry import build_grid

    rows = []
    n_r, s = n_r0, stretch0
    for k in range(levels):
        g = build_grid(n_theta, n_r, r_out, s)
        err = harmonic_solve_error(g, a, b)
        order = None if not rows else float(np.log2(rows[-1]["error"] / err))
        rows.append({"level": k, "n_r": n_r, "stretch": s, "h_surface": float(g.r_faces[1] - 1.0),
                     "error": err, "order": order})
        n_r *= 2
        s = s ** 0.5
    return rows
