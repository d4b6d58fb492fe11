"""Global-in-time fixed-point machinery for the droplet radius.

A radius path is mapped to the fields it induces (decoupled solve with the
radius prescribed) and then to a new path by time-integrating the surface
evaporation rate. The coupled solution is the fixed point of that map.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .timeloop import FieldSolver, SolverConfig, check_box, run


class AdmissibilityError(ValueError):
    """Radius path outside the admissible set (rate bound or positivity)."""


@dataclass
class RadiusPath:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.size < 2:
            raise ValueError("path needs matching times/values with at least two points")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("path times must increase")

    @classmethod
    def constant(cls, R0: float, t_star: float, dt: float) -> "RadiusPath":
        n = int(round(t_star / dt))
        t = dt * np.arange(n + 1)
        return cls(t, np.full(n + 1, float(R0)))

    @property
    def R0(self) -> float:
        return float(self.values[0])

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def rates(self) -> np.ndarray:
        """Backward differences, one per step (length N)."""
        return np.diff(self.values) / self.dts

    def h1_norm(self) -> float:
        return h1_norm(self.times, self.values)

    def admissible(self, rate_cap: float, eta: float = 0.0, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.rates) <= rate_cap * (1 + 1e-9) + atol)
                    and np.all(self.values >= eta))

    def __sub__(self, other: "RadiusPath") -> np.ndarray:
        return self.values - other.values


def h1_norm(times, values) -> float:
    """(sum dt R_n^2 + sum dt Rdot_n^2)^(1/2) on the step grid (n >= 1)."""
    dts = np.diff(times)
    rates = np.diff(values) / dts
    return float(math.sqrt(np.sum(dts * values[1:] ** 2) + np.sum(dts * rates**2)))


@dataclass
class DecoupledResult:
    T: list
    rho: list
    J_avg: np.ndarray
    iterations: list = field(default_factory=list)


def _rate_bound(solver) -> tuple[float, float]:
    """Rate cap J_inf/rho_d and a round-off allowance on the scale C rho_star / rho_d."""
    d, rho_d = solver.drying, solver.params.rho_d
    cap = d.J_inf / rho_d
    return cap, 1e-12 * max(cap, d.C_hk * abs(d.rho_star) / rho_d)


def decoupled_solve(path: RadiusPath, solver: FieldSolver, cfg: SolverConfig, T0, rho0,
                    eta: float | None = None, check: bool = True) -> DecoupledResult:
    """Fields induced by a prescribed radius path (radius update disabled)."""
    cap, atol = _rate_bound(solver)
    eta = 0.5 * path.R0 if eta is None else eta
    if not path.admissible(cap, eta, atol):
        raise AdmissibilityError("radius path violates the rate bound or drops below eta")
    T, rho = T0, rho0
    Ts, rhos, J = [T], [rho], [solver.mean_J(T, rho)]
    iters = []
    for n, (dt, Rdot) in enumerate(zip(path.dts, path.rates)):
        R = path.values[n + 1]
        T, rho, info = solver.step_fields(R, Rdot, dt, T, rho, cfg, guess=(T, rho))
        if check:
            from .timeloop import SimState
            check_box(SimState(path.times[n + 1], R, Rdot, T, rho, n + 1), solver.drying,
                      "decoupled ")
        Ts.append(T)
        rhos.append(rho)
        J.append(solver.mean_J(T, rho))
        iters.append(info.iterations)
    return DecoupledResult(Ts, rhos, np.array(J), iters)


def _cumtrapz(y, t):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def volterra_apply(path: RadiusPath, solver: FieldSolver, cfg: SolverConfig, T0, rho0,
                   eta: float | None = None) -> tuple[RadiusPath, DecoupledResult]:
    """R0 - (1/rho_d) int_0^t (1/4pi) int J dsigma dtau for the fields of ``path``."""
    res = decoupled_solve(path, solver, cfg, T0, rho0, eta)
    new = path.R0 - _cumtrapz(res.J_avg, path.times) / solver.params.rho_d
    out = RadiusPath(path.times.copy(), new)
    cap, atol = _rate_bound(solver)
    if not out.admissible(cap, 0.0, atol):
        raise AdmissibilityError("Volterra image left the admissible set")
    return out, res


@dataclass
class ContractionReport:
    t_star: float
    rows: list  # dicts with m, q_m, residual
    path: RadiusPath
    converged: bool
    coupled_sup_diff: float | None
    coupled_tolerance: float
    apriori_bound: float
    apriori_satisfied: bool
    min_radius: float

    @property
    def ratios(self) -> list:
        return [r["q_m"] for r in self.rows if r["q_m"] is not None]

    @property
    def passed(self) -> bool:
        ok = self.converged and all(q < 1.0 for q in self.ratios)
        if self.coupled_sup_diff is not None:
            ok = ok and self.coupled_sup_diff <= self.coupled_tolerance
        return ok

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# t_star_s={self.t_star!r} apriori_bound_s={self.apriori_bound!r} "
                     f"apriori_satisfied={self.apriori_satisfied} "
                     "rate_bound=J_inf/rho_d (dimensional translation)\n")
            w = csv.writer(fh)
            w.writerow(["m", "q_m", "residual"])
            for r in self.rows:
                w.writerow([r["m"], "" if r["q_m"] is None else repr(r["q_m"]), repr(r["residual"])])

    def summary(self) -> str:
        qs = self.ratios
        qmax = max(qs) if qs else float("nan")
        return (f"{'PASS' if self.passed else 'FAIL'} contraction t*={self.t_star:g}s "
                f"iterations={len(self.rows)} max_q={qmax:.3e} "
                f"coupled_sup_diff={self.coupled_sup_diff}")


def picard_to_fixed_point(t_star: float, solver: FieldSolver, cfg: SolverConfig, R0: float,
                          T0, rho0, m_max: int = 30, tol: float = 1e-12,
                          compare_coupled: bool = True, strict_bound: bool = False) -> ContractionReport:
    """Iterate R <- T(R) from the constant path and report the contraction ratios.

    ``q_m = |R^(m+1) - R^(m)|_H1 / |R^(m) - R^(m-1)|_H1``. Iteration stops when
    the increment falls below ``tol`` times the path norm. The a-priori
    short-time bound t* < R0 rho_d / (2 J_inf) is reported; with
    ``strict_bound`` it is enforced, otherwise every iterate is required to
    stay above R0/2 instead.
    """
    cap = solver.drying.J_inf / solver.params.rho_d
    bound = R0 / (2.0 * cap) if cap > 0 else math.inf
    if strict_bound and not t_star < bound:
        raise AdmissibilityError(f"t* = {t_star} s exceeds the short-time bound {bound:.3e} s")
    path = RadiusPath.constant(R0, t_star, cfg.dt)
    rows = []
    prev_inc = None
    converged = False
    min_R = path.values.min()
    for m in range(m_max):
        new, _ = volterra_apply(path, solver, cfg, T0, rho0, eta=0.5 * R0)
        inc = h1_norm(path.times, new.values - path.values)
        q = inc / prev_inc if prev_inc not in (None, 0.0) else None
        rows.append({"m": m, "q_m": q, "residual": inc})
        min_R = min(min_R, new.values.min())
        path = new
        if inc <= tol * path.h1_norm():
            converged = True
            break
        prev_inc = inc
    diff = None
    if compare_coupled:
        c = SolverConfig(**{**cfg.to_dict(), "t_end": t_star, "R_min_frac": 1e-6})
        tr = run(c, solver.params, solver.model, solver.drying, solver.grid, R0,
                 solver=solver, T0=T0, rho0=rho0)
        R_c = tr.column("R_m")
        n = min(len(R_c), len(path.values))
        diff = float(np.max(np.abs(R_c[:n] - path.values[:n])))
    return ContractionReport(t_star, rows, path, converged, diff,
                             max(cfg.dt * cap, 1e-9), bound, t_star < bound, float(min_R))


def discrete_norms(solver: FieldSolver, field_values: np.ndarray) -> tuple[float, float]:
    """Volume-weighted L2 norm and interior-face gradient energy norm of a cell field."""
    geo = solver.geo
    l2 = float(np.sqrt(np.sum(geo.vol * field_values**2)))
    dr = np.diff(field_values, axis=1)
    dth = np.diff(field_values, axis=0)
    grad2 = np.sum(geo.Gr * dr**2) + np.sum(geo.Gt * dth**2)
    return l2, float(math.sqrt(grad2))


def stability_ratio(solver: FieldSolver, cfg: SolverConfig, base: RadiusPath, delta,
                    T0, rho0) -> dict:
    """Discrete analogue of the Lipschitz estimate of S(R) in the radius.

    ``delta`` is a scalar shift or an array added to the base path values.
    Returns the ratios (sup_t |dT|^2 + int |grad dT|^2)^(1/2) / |dR|_H1 for both
    fields, plus the raw pieces.
    """
    pert = RadiusPath(base.times, base.values + np.broadcast_to(delta, base.values.shape))
    d_h1 = h1_norm(base.times, pert.values - base.values)
    a = decoupled_solve(base, solver, cfg, T0, rho0, eta=0.25 * base.R0)
    b = decoupled_solve(pert, solver, cfg, T0, rho0, eta=0.25 * base.R0)
    out = {"dR_h1": d_h1}
    for name, fa, fb in (("T", a.T, b.T), ("rho", a.rho, b.rho)):
        sup_l2 = 0.0
        grad_int = 0.0
        for n in range(len(fa)):
            l2, g = discrete_norms(solver, fb[n].values - fa[n].values)
            sup_l2 = max(sup_l2, l2**2)
            if n > 0:
                grad_int += base.dts[n - 1] * g**2
        num = math.sqrt(sup_l2 + grad_int)
        out[f"{name}_numerator"] = num
        out[f"{name}_ratio"] = num / d_h1 if d_h1 > 0 else (0.0 if num == 0 else math.inf)
    return out
