"""Desk-scale property suite behind ``dropevap verify``.

Every check returns a (passed, detail) pair; the runner times each one and
always runs the whole list so one failure does not hide another.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import flowfields as ff
from .discretization import m_matrix_report
from .fixedpoint import RadiusPath, picard_to_fixed_point, stability_ratio
from .geometry import build_grid
from .oracle import harmonic_convergence
from .physics import DryingState, MaterialParams, p_sat
from .timeloop import FieldSolver, InvariantViolation, SolverConfig, run, volume_to_radius


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    detail: str


class LeakyFlow:
    """Deliberately compressible flow (tangent at r = 1) used as a mutation fixture."""

    kind = "leaky"

    def __init__(self, V: float = 0.5):
        self.V = V

    def eval(self, theta, r, R=None):
        theta = np.asarray(theta, dtype=float)
        r = np.asarray(r, dtype=float)
        return 0.0 * theta * r, self.V * np.cos(theta) * (1.0 - 1.0 / r)


def _dimensional(n_theta=32, n_r=64):
    p = MaterialParams()
    d = DryingState.from_conditions(p, 60.0, 0.1)
    return p, d, build_grid(n_theta, n_r, 50.0, 1.08), volume_to_radius(1.0)


def check_physics():
    T = np.linspace(0.0, 100.0, 1000)
    p = MaterialParams()
    d = DryingState.from_conditions(p, 60.0, 0.1)
    mono = np.all(np.diff(p_sat(T)) > 0) and np.all(np.diff(d.rho_sat(T)) > 0)
    Ts = np.linspace(d.T_star, 60.0, 200)
    der = d.drho_sat_dT(Ts)
    lip = np.all(der >= 0) and np.all(der <= d.L)
    tstar = abs(d.rho_sat(d.T_star) - d.rho_inf) <= 1e-12 * d.rho_inf
    TT, RR = np.meshgrid(Ts, np.linspace(d.rho_inf, d.rho_star, 50))
    J = d.evap_rate(TT, RR)
    # |J| <= J_inf on the whole box; the sign is only fixed along trajectories
    jbox = np.max(np.abs(J)) <= d.J_inf * (1 + 1e-12)
    ok = bool(mono and lip and tstar and jbox)
    return ok, f"monotone={mono} lipschitz={lip} T_star={tstar} J_in_box={jbox}"


def check_geometry():
    g = build_grid(32, 64, 50.0, 1.08)
    vol = abs(g.vol.sum() / (4 * math.pi / 3 * (50.0**3 - 1)) - 1)
    area = abs(g.surface_weights.sum() / (4 * math.pi) - 1)
    odd = abs(g.surface_weights @ np.cos(g.theta_c))
    ok = vol <= 1e-12 and area <= 1e-12 and odd <= 1e-14
    return ok, f"volume_err={vol:.1e} area_err={area:.1e} cos_integral={odd:.1e}"


def check_flows():
    g = build_grid(32, 64, 50.0, 1.08)
    st = ff.Stokes(0.8)
    ac = ff.Acoustic(ff.spl_to_amplitude(166.0), 1.06)
    div = max(ff.check_divergence(st, g), ff.check_divergence(ac, g, R=6.2e-4))
    th = np.linspace(0, math.pi, 101)
    tang = all(np.all(m.eval(th, np.ones_like(th), 6e-4)[1] == 0.0) for m in (st, ac))
    stokes_R = ff.lipschitz_in_R(st, 6e-4, 3e-4, g) == 0.0
    R1 = 6e-4
    ratios = [ff.lipschitz_in_R(ac, R1, R2, g) / abs(R1 - R2) for R2 in (5.9e-4, 5.99e-4, 5.999e-4)]
    ref = ff.acoustic_lipschitz_oracle(ac, R1, g)
    lip = all(1 / 1.1 <= q / ref <= 1.1 for q in ratios)
    ok = div <= 1e-6 and tang and stokes_R and lip
    return ok, (f"max_div={div:.1e} tangent={tang} stokes_R_invariant={stokes_R} "
                f"acoustic_ratio/oracle={[round(q / ref, 4) for q in ratios]}")


def check_leaky_flow_detected():
    g = build_grid(32, 64, 50.0, 1.08)
    div = ff.check_divergence(LeakyFlow(), g)
    return div > 1e-6, f"mutated flow divergence={div:.2e} (must exceed 1e-6)"


def check_operator():
    rows = harmonic_convergence(levels=4)
    orders = [r["order"] for r in rows[1:]]
    p, d, g, R0 = _dimensional()
    s = FieldSolver(g, p, d, ff.Stokes(0.8))
    T, rho = s.quasi_steady(R0)
    sT, sR = s.cell_systems(R0, -1e-6, 1.0, T, rho)
    s._robin(sT, T.surface, rho.surface, "newton")
    s._robin(sR, T.surface, rho.surface, "picard")
    mm = m_matrix_report(sT.matrix)["ok"] and m_matrix_report(sR.matrix)["ok"]
    ok = min(orders) >= 1.9 and mm
    return ok, f"orders={[round(o, 3) for o in orders]} m_matrix={mm}"


def check_box_run():
    p, d, g, R0 = _dimensional()
    cfg = SolverConfig(t_end=30.0, audit_m_matrix=True)
    tr = run(cfg, p, ff.Stokes(0.8), d, g, R0)
    a = tr.audit
    ok = a["box_checks"] == 31 and a["m_matrix_ok"]
    return ok, f"steps={a['steps']} box_checks={a['box_checks']} newton_max={a['max_newton_iters']}"


def check_flipped_heat_flux_detected():
    p, d, g, R0 = _dimensional(16, 32)
    solver = FieldSolver(g, p, d, ff.Stagnant(), heat_flux_sign=-1.0)
    try:
        run(SolverConfig(t_end=5.0), p, ff.Stagnant(), d, g, R0, solver=solver)
    except InvariantViolation as exc:
        return True, f"detected: {exc}"
    return False, "sign-flipped surface heat flux went unnoticed"


def check_picard_monotone():
    p = MaterialParams.unit()
    d = DryingState.nondimensional()
    g = build_grid(16, 32, 50.0, 1.08)
    cfg = SolverConfig(dt=0.01, t_end=0.1, nonlinear_mode="picard", initial_fields="far_field",
                       audit_m_matrix=True)
    tr = run(cfg, p, ff.Stokes(0.5), d, g, 1.0)
    it = tr.column("newton_iters")[1:]
    viol = tr.audit["max_monotone_violation"]
    ok = viol <= 1e-10 and it.min() >= 3 and tr.audit["m_matrix_ok"]
    return ok, f"max_increase={viol:.1e} min_iters={it.min()} max_iters={it.max()}"


def check_contraction():
    p, d, g, R0 = _dimensional()
    s = FieldSolver(g, p, d, ff.Stagnant())
    cfg = SolverConfig()
    T0, r0 = s.quasi_steady(R0)
    a = picard_to_fixed_point(10.0, s, cfg, R0, T0, r0)
    b = picard_to_fixed_point(5.0, s, cfg, R0, T0, r0, compare_coupled=False)
    q1a, q1b = a.rows[1]["q_m"], b.rows[1]["q_m"]
    ok = a.passed and q1b <= q1a + 1e-3
    return ok, f"{a.summary()} q1(t*/2)={q1b:.3e}"


def check_stability():
    p, d, g, R0 = _dimensional()
    s = FieldSolver(g, p, d, ff.Stagnant())
    cfg = SolverConfig()
    T0, r0 = s.quasi_steady(R0)
    base = RadiusPath.constant(R0, 10.0, 1.0)
    q = [stability_ratio(s, cfg, base, f * 0.01 * R0, T0, r0)["T_ratio"] for f in (1, 0.5, 0.25)]
    ok = max(q) <= 2 * min(q) and min(q) > 0
    return ok, f"T_ratios={[round(x, 4) for x in q]}"


CHECKS = [
    ("physics.invariants", check_physics),
    ("geometry.partition", check_geometry),
    ("flowfields.structure", check_flows),
    ("flowfields.mutation_detected", check_leaky_flow_detected),
    ("discretization.operator", check_operator),
    ("timeloop.box_and_m_matrix", check_box_run),
    ("timeloop.mutation_detected", check_flipped_heat_flux_detected),
    ("timeloop.picard_monotone", check_picard_monotone),
    ("fixedpoint.contraction", check_contraction),
    ("fixedpoint.stability_ratio", check_stability),
]


def run_suite(names=None, echo=print) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(name, bool(ok), time.perf_counter() - t0, detail)
        out.append(res)
        if echo:
            echo(f"{'PASS' if res.passed else 'FAIL'} {name} ({res.seconds:.2f}s) {detail}")
    return out
