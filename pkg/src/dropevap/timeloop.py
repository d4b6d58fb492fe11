"""Time integration of the coupled radius / temperature / vapor system.

Each step advances the radius explicitly with the previous fields, then solves
both fields implicitly (implicit Euler) with the Hertz-Knudsen surface
coupling, either by monolithic Newton or by the monotone Picard iteration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .discretization import (Field, GridGeometry, Kind, SolveError, apply_dirichlet_far,
                             apply_robin_boundary, assemble_transport, m_matrix_report,
                             solve_sparse)
from .geometry import AxiGrid

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi


class ConvergenceError(RuntimeError):
    """Nonlinear iteration did not converge."""


class InvariantViolation(RuntimeError):
    """A monitored bound (box, radius monotonicity, rate bound) failed."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1.0
    t_end: float = math.inf
    R_min_frac: float = 0.01
    nonlinear_mode: str = "newton"  # or "picard"
    newton_tol: float = 1e-10
    newton_max: int = 20
    picard_max: int = 200
    scheme: str = "upwind"
    initial_fields: str = "quasi_steady"  # or "far_field"
    max_steps: int = 1_000_000
    check_invariants: bool = True
    audit_m_matrix: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.R_min_frac < 1.0:
            raise ValueError("R_min_frac must lie in (0, 1)")
        if self.nonlinear_mode not in ("newton", "picard"):
            raise ValueError(f"unknown nonlinear mode {self.nonlinear_mode!r}")
        if self.scheme not in ("upwind", "central"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.initial_fields not in ("quasi_steady", "far_field"):
            raise ValueError(f"unknown initial field policy {self.initial_fields!r}")
        if not 0.0 < self.newton_tol < 1.0:
            raise ValueError("newton_tol must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["t_end"]):
            d["t_end"] = None
        return d


@dataclass
class SimState:
    t: float
    R: float
    Rdot: float
    T: Field
    rho: Field
    step: int = 0
    monitors: dict = field(default_factory=dict)


@dataclass
class StepInfo:
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    monotone_violation: float = 0.0
    m_matrix_ok: bool = True


def box_tolerances(drying) -> tuple[float, float]:
    sT = max(abs(drying.T_inf), abs(drying.T_star), drying.T_inf - drying.T_star)
    sR = max(abs(drying.rho_star), abs(drying.rho_inf))
    return 1e-8 * (sT or 1.0), 1e-8 * (sR or 1.0)


class FieldSolver:
    """Implicit solver for both transport fields at a prescribed radius and rate."""

    def __init__(self, grid: AxiGrid, params, drying, model, scheme: str = "upwind",
                 heat_flux_sign: float = 1.0):
        self.grid = grid
        self.geo = GridGeometry(grid)
        self.params = params
        self.drying = drying
        self.model = model
        self.scheme = scheme
        self.heat_flux_sign = heat_flux_sign
        self.alpha = params.thermal_diffusivity
        self.D = params.D_v
        self.scale_T = max(abs(drying.T_inf), abs(drying.T_star), drying.T_inf - drying.T_star) or 1.0
        self.scale_rho = max(abs(drying.rho_star), abs(drying.rho_inf)) or 1.0
        self.weights = grid.surface_weights

    # -- helpers -----------------------------------------------------------
    def far_field(self) -> tuple[Field, Field]:
        return (Field.constant(self.grid, self.drying.T_inf, Kind.TEMPERATURE),
                Field.constant(self.grid, self.drying.rho_inf, Kind.VAPOR))

    def upper_solution(self) -> tuple[Field, Field]:
        return (Field.constant(self.grid, self.drying.T_inf, Kind.TEMPERATURE),
                Field.constant(self.grid, self.drying.rho_star, Kind.VAPOR))

    def surface_J(self, T: Field, rho: Field) -> np.ndarray:
        return np.asarray(self.drying.evap_rate(T.surface, rho.surface), dtype=float)

    def mean_J(self, T: Field, rho: Field) -> float:
        """Surface average (1/4pi) int J dsigma."""
        return float(self.weights @ self.surface_J(T, rho)) / FOUR_PI

    def cell_systems(self, R, Rdot, dt, T_old, rho_old):
        fluxes = self.geo.face_fluxes(self.model, R, Rdot)
        sT = assemble_transport(self.geo, Kind.TEMPERATURE, self.alpha, R, Rdot, dt, T_old,
                                self.model, self.scheme, fluxes=fluxes)
        apply_dirichlet_far(sT, self.geo, self.drying.T_inf)
        sR = assemble_transport(self.geo, Kind.VAPOR, self.D, R, Rdot, dt, rho_old,
                                self.model, self.scheme, fluxes=fluxes)
        apply_dirichlet_far(sR, self.geo, self.drying.rho_inf)
        return sT, sR

    def _robin(self, sys_, T_lin, rho_lin, mode):
        return apply_robin_boundary(sys_, self.geo, T_lin, rho_lin, self.drying, self.params,
                                    mode=mode, heat_flux_sign=self.heat_flux_sign)

    def _rel_residual(self, AT, bT, xT, AR, bR, xR) -> float:
        rT = (AT @ xT - bT) / AT.diagonal()
        rR = (AR @ xR - bR) / AR.diagonal()
        return max(np.max(np.abs(rT)) / self.scale_T, np.max(np.abs(rR)) / self.scale_rho)

    # -- nonlinear solves --------------------------------------------------
    def newton(self, R, Rdot, dt, T_old, rho_old, guess=None, tol=1e-10, max_iter=20,
               audit=False) -> tuple[Field, Field, StepInfo]:
        sT, sR = self.cell_systems(R, Rdot, dt, T_old, rho_old)
        T, rho = guess if guess is not None else (T_old, rho_old)
        if T is None:
            T, rho = self.far_field()
        xT, xR = T.flat(), rho.flat()
        geo, C = self.geo, self.drying.C_hk
        ff = self.heat_flux_sign * self.params.latent_factor
        nt = self.grid.n_theta
        s_loc = geo.surf_idx
        m_ok = True
        res = math.inf
        for it in range(1, max_iter + 1):
            Ts, rs = xT[s_loc], xR[s_loc]
            self._robin(sT, Ts, rs, "newton")
            self._robin(sR, Ts, rs, "newton")
            AT, AR = sT.matrix, sR.matrix
            if audit:
                m_ok &= m_matrix_report(AT)["ok"] and m_matrix_report(AR)["ok"]
            FT = AT @ xT - sT.rhs
            FR = AR @ xR - sR.rhs
            dsat = np.broadcast_to(np.asarray(self.drying.drho_sat_dT(Ts), dtype=float), (nt,))
            X_TR = sp.csr_matrix((np.full(nt, -R * ff * C), (s_loc, s_loc)), shape=AT.shape)
            X_RT = sp.csr_matrix((-R * C * dsat, (s_loc, s_loc)), shape=AT.shape)
            Jm = sp.bmat([[AT, X_TR], [X_RT, AR]], format="csc")
            delta = solve_sparse(Jm, -np.concatenate([FT, FR]))
            xT = xT + delta[: geo.size]
            xR = xR + delta[geo.size:]
            Ts, rs = xT[s_loc], xR[s_loc]
            self._robin(sT, Ts, rs, "newton")
            self._robin(sR, Ts, rs, "newton")
            res = self._rel_residual(sT.matrix, sT.rhs, xT, sR.matrix, sR.rhs, xR)
            if res <= tol:
                break
        else:
            raise ConvergenceError(f"Newton stalled at relative residual {res:.3e} after {max_iter} iterations")
        info = StepInfo(iterations=it, residual=res, m_matrix_ok=m_ok)
        return (Field.from_flat(xT, self.grid, Kind.TEMPERATURE),
                Field.from_flat(xR, self.grid, Kind.VAPOR), info)

    def picard(self, R, Rdot, dt, T_old, rho_old, start=None, tol=1e-10, max_iter=200,
               record=False, audit=False) -> tuple[Field, Field, StepInfo]:
        """Upper/lower iteration with linear Robin rows (coefficients C*L and C).

        Starting from the constant upper solution (T_inf, rho_star) the iterates
        decrease monotonically cell by cell; ``monotone_violation`` reports the
        largest increase seen between consecutive iterates (scaled).
        """
        sT, sR = self.cell_systems(R, Rdot, dt, T_old, rho_old)
        T, rho = start if start is not None else self.upper_solution()
        xT, xR = T.flat(), rho.flat()
        history = [(xT.copy(), xR.copy())] if record else []
        s_loc = self.geo.surf_idx
        worst = 0.0
        m_ok = True
        diff = math.inf
        for it in range(1, max_iter + 1):
            Ts, rs = xT[s_loc], xR[s_loc]
            self._robin(sT, Ts, rs, "picard")
            self._robin(sR, Ts, rs, "picard")
            if audit:
                m_ok &= m_matrix_report(sT.matrix)["ok"] and m_matrix_report(sR.matrix)["ok"]
            nT = solve_sparse(sT.matrix, sT.rhs)
            nR = solve_sparse(sR.matrix, sR.rhs)
            worst = max(worst, np.max(nT - xT) / self.scale_T, np.max(nR - xR) / self.scale_rho)
            diff = max(np.max(np.abs(nT - xT)) / self.scale_T, np.max(np.abs(nR - xR)) / self.scale_rho)
            xT, xR = nT, nR
            if record:
                history.append((xT.copy(), xR.copy()))
            if diff <= tol:
                break
        else:
            raise ConvergenceError(f"Picard iteration budget exhausted (last change {diff:.3e})")
        info = StepInfo(iterations=it, residual=diff, history=history,
                        monotone_violation=max(worst, 0.0), m_matrix_ok=m_ok)
        return (Field.from_flat(xT, self.grid, Kind.TEMPERATURE),
                Field.from_flat(xR, self.grid, Kind.VAPOR), info)

    def quasi_steady(self, R, tol=1e-10, max_iter=50) -> tuple[Field, Field]:
        """Steady fields for a frozen radius (no time derivative, no interface motion)."""
        T, rho, _ = self.newton(R, 0.0, math.inf, None, None, guess=self.far_field(),
                                tol=tol, max_iter=max_iter)
        return T, rho

    def solve(self, R, Rdot, dt, T_old, rho_old, cfg: SolverConfig, guess=None):
        if cfg.nonlinear_mode == "newton":
            return self.newton(R, Rdot, dt, T_old, rho_old, guess=guess, tol=cfg.newton_tol,
                               max_iter=cfg.newton_max, audit=cfg.audit_m_matrix)
        return self.picard(R, Rdot, dt, T_old, rho_old, tol=cfg.newton_tol,
                           max_iter=cfg.picard_max, audit=cfg.audit_m_matrix)

    def step_fields(self, R, Rdot, dt, T_old, rho_old, cfg: SolverConfig, guess=None):
        """One implicit field step; on nonlinear failure retry once as two half steps."""
        try:
            return self.solve(R, Rdot, dt, T_old, rho_old, cfg, guess)
        except (ConvergenceError, SolveError) as exc:
            log.warning("step failed (%s); retrying with dt/2", exc)
        R_half = R - 0.5 * dt * Rdot
        T1, r1, i1 = self.solve(R_half, Rdot, 0.5 * dt, T_old, rho_old, cfg)
        T2, r2, i2 = self.solve(R, Rdot, 0.5 * dt, T1, r1, cfg, guess=(T1, r1))
        i2.iterations += i1.iterations
        i2.monotone_violation = max(i1.monotone_violation, i2.monotone_violation)
        i2.m_matrix_ok = i1.m_matrix_ok and i2.m_matrix_ok
        return T2, r2, i2


def radius_update(state: SimState, params, solver: FieldSolver, dt: float) -> tuple[float, float]:
    """Explicit Euler for dR/dt = -(1/(4 pi rho_d)) int J dsigma with the state's fields."""
    Rdot = -solver.mean_J(state.T, state.rho) / params.rho_d
    return state.R + dt * Rdot, Rdot


def monitor_record(state: SimState, solver: FieldSolver, R0: float, iters: int) -> dict:
    return {
        "t_s": state.t,
        "R_m": state.R,
        "R2_norm": (state.R / R0) ** 2,
        "J_avg": solver.mean_J(state.T, state.rho),
        "T_min": state.T.min(),
        "T_max": state.T.max(),
        "rho_min": state.rho.min(),
        "rho_max": state.rho.max(),
        "newton_iters": iters,
    }


def check_box(state: SimState, drying, where: str = "") -> None:
    tT, tR = box_tolerances(drying)
    T_lo, T_hi = state.T.min(), state.T.max()
    r_lo, r_hi = state.rho.min(), state.rho.max()
    if T_lo < drying.T_star - tT or T_hi > drying.T_inf + tT:
        raise InvariantViolation(f"{where}temperature [{T_lo}, {T_hi}] leaves "
                                 f"[{drying.T_star}, {drying.T_inf}] at step {state.step}")
    if r_lo < drying.rho_inf - tR or r_hi > drying.rho_star + tR:
        raise InvariantViolation(f"{where}vapor density [{r_lo}, {r_hi}] leaves "
                                 f"[{drying.rho_inf}, {drying.rho_star}] at step {state.step}")


@dataclass
class Trajectory:
    records: list
    states: list
    R0: float
    extinct: bool
    lifetime: float
    audit: dict

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.records])


def extrapolated_lifetime(t: np.ndarray, R2: np.ndarray, frac: float = 0.1) -> float:
    """Zero crossing of a straight line fitted to the last ``frac`` of R^2(t)."""
    n = len(t)
    if n < 3:
        return math.nan
    k = max(3, int(math.ceil(frac * n)))
    tt, yy = t[-k:], R2[-k:]
    slope, icpt = np.polyfit(tt, yy, 1)
    if slope >= 0:
        return math.inf
    return float(-icpt / slope)


def initial_state(solver: FieldSolver, R0: float, cfg: SolverConfig, T0=None, rho0=None) -> SimState:
    if T0 is not None:
        T, rho = T0, rho0
    elif cfg.initial_fields == "quasi_steady":
        T, rho = solver.quasi_steady(R0, tol=cfg.newton_tol)
    else:
        T, rho = solver.far_field()
    Rdot = -solver.mean_J(T, rho) / solver.params.rho_d
    return SimState(0.0, R0, Rdot, T, rho, 0)


def run(config: SolverConfig, params, model, drying, grid: AxiGrid, R0: float,
        keep_states: bool | int = False, solver: FieldSolver | None = None,
        on_step=None, T0=None, rho0=None) -> Trajectory:
    """Advance until ``t_end`` or until R drops to ``R_min_frac * R0``.

    ``keep_states=True`` stores every state, an int N stores every N-th.
    """
    solver = solver or FieldSolver(grid, params, drying, model, config.scheme)
    state = initial_state(solver, R0, config, T0, rho0)
    if config.check_invariants:
        check_box(state, drying, "initial ")
    rate_cap = drying.J_inf / params.rho_d
    # round-off allowance on the natural flux scale C * rho_star, so saturated air (cap 0) works
    rate_tol = 1e-12 * max(rate_cap, drying.C_hk * abs(drying.rho_star) / params.rho_d)
    records = [monitor_record(state, solver, R0, 0)]
    states = [state] if keep_states else []
    audit = {"box_checks": 1, "max_newton_iters": 0, "max_monotone_violation": 0.0,
             "m_matrix_ok": True, "steps": 0}
    R_min = config.R_min_frac * R0
    extinct = False
    while state.t < config.t_end - 1e-12 * config.dt and state.step < config.max_steps:
        dt = min(config.dt, config.t_end - state.t)
        R_new, Rdot = radius_update(state, params, solver, dt)
        if config.check_invariants:
            if -Rdot > rate_cap * (1 + 1e-9) + rate_tol or Rdot > rate_tol:
                raise InvariantViolation(f"radius rate {Rdot} outside [-{rate_cap}, 0] at step {state.step}")
        if Rdot > 0.0:  # round-off in (near-)saturated air; the radius never grows
            R_new, Rdot = state.R, 0.0
        if R_new <= R_min:
            extinct = True
            break
        T, rho, info = solver.step_fields(R_new, Rdot, dt, state.T, state.rho, config,
                                          guess=(state.T, state.rho))
        new = SimState(state.t + dt, R_new, 0.0, T, rho, state.step + 1)
        new.Rdot = -solver.mean_J(T, rho) / params.rho_d
        if config.check_invariants:
            check_box(new, drying)
            if new.R > state.R * (1 + 1e-14):
                raise InvariantViolation(f"radius increased at step {new.step}")
        audit["box_checks"] += 1
        audit["steps"] += 1
        audit["max_newton_iters"] = max(audit["max_newton_iters"], info.iterations)
        audit["max_monotone_violation"] = max(audit["max_monotone_violation"], info.monotone_violation)
        audit["m_matrix_ok"] = audit["m_matrix_ok"] and info.m_matrix_ok
        new.monitors = monitor_record(new, solver, R0, info.iterations)
        records.append(new.monitors)
        if keep_states is True or (keep_states and new.step % int(keep_states) == 0):
            states.append(new)
        if on_step is not None:
            on_step(new, info)
        state = new
    t = np.array([r["t_s"] for r in records])
    R2 = np.array([r["R_m"] for r in records]) ** 2
    lifetime = extrapolated_lifetime(t, R2) if extinct else math.nan
    if not keep_states:
        states = [state]
    return Trajectory(records, states, R0, extinct, lifetime, audit)


def volume_to_radius(volume_ul: float) -> float:
    """Radius (m) of a sphere holding ``volume_ul`` microliters."""
    return (3.0 * volume_ul * 1e-9 / FOUR_PI) ** (1.0 / 3.0)
