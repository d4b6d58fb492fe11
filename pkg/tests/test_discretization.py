import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dropevap.discretization import (Field, GridGeometry, Kind, SolveError, apply_dirichlet_far,
                                     apply_robin_boundary, assemble_advection, assemble_diffusion,
                                     assemble_transport, dump_triplets, m_matrix_report,
                                     outer_from_extrapolation, solve_sparse,
                                     surface_from_extrapolation)
from dropevap.flowfields import Acoustic, Stagnant, Stokes
from dropevap.geometry import build_grid
from dropevap.oracle import harmonic_convergence, harmonic_profile
from dropevap.physics import DryingState, MaterialParams


def test_diffusion_kills_constants(small_grid):
    L = assemble_diffusion(small_grid, 2.0, 1e-3)
    assert np.max(np.abs(L @ np.ones(small_grid.n_cells))) <= 1e-9 * abs(L).max()


def test_diffusion_zero_alpha(small_grid):
    assert assemble_diffusion(small_grid, 0.0, 1.0).count_nonzero() == 0


def test_diffusion_symmetric_negative_semidefinite(small_grid):
    L = assemble_diffusion(small_grid, 1.0, 1.0)
    assert abs(L - L.T).max() <= 1e-12 * abs(L).max()
    # volume-weighted form V^-1 L is self-adjoint in the V inner product
    V = small_grid.vol.ravel()
    rng_free = np.sin(np.arange(V.size)), np.cos(np.arange(V.size) * 0.7)
    u, w = rng_free
    lhs = (V * (L @ u / V)) @ w
    rhs = (V * (L @ w / V)) @ u
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)
    ev = np.linalg.eigvalsh(L.toarray())
    assert ev.max() <= 1e-10 * abs(ev).max()


def test_harmonic_interior_residual_shrinks():
    errs = []
    n_r, s = 64, 1.04
    for _ in range(3):
        g = build_grid(4, n_r, 50.0, s)
        u = harmonic_profile(g, 2.0, 3.0).values.ravel()
        res = (assemble_diffusion(g, 1.0) @ u).reshape(4, n_r)[:, 1:-1] / g.vol[:, 1:-1]
        errs.append(np.max(np.abs(res)))
        n_r *= 2
        s = math.sqrt(s)
    assert errs[0] > errs[1] > errs[2]


def test_harmonic_solution_second_order():
    rows = harmonic_convergence(levels=4)
    orders = [r["order"] for r in rows[1:]]
    assert len(orders) == 3 and min(orders) >= 1.9


def test_extrapolation_second_order():
    errs = []
    n_r, s = 64, 1.04
    for _ in range(3):
        g = build_grid(4, n_r, 50.0, s)
        u = harmonic_profile(g, 2.0, 3.0).values
        errs.append((np.max(np.abs(surface_from_extrapolation(g, u) - 5.0)),
                     np.max(np.abs(outer_from_extrapolation(g, u) - (2.0 + 3.0 / 50.0)))))
        n_r *= 2
        s = math.sqrt(s)
    for k in range(2):
        assert math.log2(errs[k][0] / errs[k + 1][0]) >= 1.8
    assert errs[-1][1] < errs[0][1]


def test_advection_zero_for_stagnant(small_grid):
    A, Fr, Ft = assemble_advection(small_grid, Stagnant(), 1e-3, 0.0)
    assert A.count_nonzero() == 0 and not Fr.any() and not Ft.any()


@pytest.mark.parametrize("scheme", ["upwind", "central"])
@pytest.mark.parametrize("model", [Stokes(0.8), Acoustic(3000.0, 1.06)])
def test_advection_kills_constants(small_grid, model, scheme):
    A, _, _ = assemble_advection(small_grid, model, 6e-4, -1e-6, scheme)
    assert np.max(np.abs(A @ np.ones(small_grid.n_cells))) <= 1e-12 * max(abs(A).max(), 1.0)


def test_ale_flux_outward_when_shrinking(small_grid):
    _, Fr, _ = assemble_advection(small_grid, Stagnant(), 6e-4, -1e-6)
    assert np.all(Fr > 0)


def test_central_advection_negates_with_velocity(small_grid):
    A, _, _ = assemble_advection(small_grid, Stokes(0.8), 6e-4, 0.0, "central")
    B, _, _ = assemble_advection(small_grid, Stokes(-0.8), 6e-4, 0.0, "central")
    assert abs(A + B).max() == 0.0


def test_unknown_scheme(small_grid):
    with pytest.raises(ValueError):
        assemble_advection(small_grid, Stagnant(), 1.0, 0.0, "quick")


def _systems(grid, model, R=6.2e-4, Rdot=-1.5e-6, dt=1.0):
    p = MaterialParams()
    d = DryingState.from_conditions(p, 60.0, 0.1)
    geo = GridGeometry(grid)
    T_old = Field.constant(grid, 40.0, Kind.TEMPERATURE)
    r_old = Field.constant(grid, 0.03, Kind.VAPOR)
    sT = assemble_transport(geo, Kind.TEMPERATURE, p.thermal_diffusivity, R, Rdot, dt, T_old, model)
    sR = assemble_transport(geo, Kind.VAPOR, p.D_v, R, Rdot, dt, r_old, model)
    apply_dirichlet_far(sT, geo, d.T_inf)
    apply_dirichlet_far(sR, geo, d.rho_inf)
    return p, d, geo, sT, sR


@pytest.mark.parametrize("mode", ["newton", "picard"])
@pytest.mark.parametrize("model", [Stagnant(), Stokes(0.8), Acoustic(6309.6, 1.06)])
def test_m_matrix_upwind(small_grid, model, mode):
    p, d, geo, sT, sR = _systems(small_grid, model)
    Ts = np.linspace(d.T_star, d.T_inf, small_grid.n_theta)
    rs = np.linspace(d.rho_inf, d.rho_star, small_grid.n_theta)
    for s in (sT, sR):
        apply_robin_boundary(s, geo, Ts, rs, d, p, mode)
        rep = m_matrix_report(s.matrix)
        assert rep["ok"], rep


@settings(max_examples=25, deadline=None)
@given(V=st.floats(-2.0, 2.0), Rdot=st.floats(-1e-4, 0.0), dt=st.floats(1e-3, 10.0))
def test_m_matrix_property(V, Rdot, dt):
    grid = build_grid(8, 12, 50.0, 1.1)
    p, d, geo, sT, sR = _systems(grid, Stokes(V), Rdot=Rdot, dt=dt)
    for s in (sT, sR):
        apply_robin_boundary(s, geo, np.full(8, 30.0), np.full(8, 0.05), d, p, "picard")
        assert m_matrix_report(s.matrix)["ok"]


def test_robin_rows_zero_flux_when_J_vanishes(small_grid):
    p, d, geo, sT, sR = _systems(small_grid, Stagnant())
    nt = small_grid.n_theta
    Ts, rs = np.full(nt, d.T_star), np.full(nt, d.rho_inf)
    for s, u in ((sT, Ts), (sR, rs)):
        apply_robin_boundary(s, geo, Ts, rs, d, p, "newton")
        x = np.zeros(geo.size)
        x[geo.first_cell] = u
        x[geo.surf_idx] = u
        r = (s.matrix @ x - s.rhs)[geo.surf_idx]
        assert np.max(np.abs(r)) <= 1e-12 * np.max(np.abs(s.rhs[geo.surf_idx])) + 1e-300


def _surface_flux(s, geo, R, value_s):
    """Flux into the first cell implied by the trace row at the given trace value."""
    A = s.matrix.tocsr()
    rows = geo.surf_idx
    diag = A[rows, rows].A1
    cell = A[rows, geo.first_cell].A1
    u0 = (s.rhs[rows] - diag * value_s) / cell
    return s.kappa / R**2 * geo.Gs * (value_s - u0)


def test_uniform_surface_heat_sink(small_grid):
    R = 6.2e-4
    p, d, geo, sT, sR = _systems(small_grid, Stagnant(), R=R)
    nt = small_grid.n_theta
    Ts, rs = np.full(nt, d.T_inf), np.full(nt, d.rho_inf)
    apply_robin_boundary(sT, geo, Ts, rs, d, p, "newton")
    apply_robin_boundary(sR, geo, Ts, rs, d, p, "newton")
    A_s = small_grid.area_r[:, 0]
    heat = _surface_flux(sT, geo, R, Ts)
    vap = _surface_flux(sR, geo, R, rs)
    # per unit rescaled area the flux is the physical flux divided by R
    assert np.allclose(heat, -A_s * p.latent_factor * d.J_inf / R, rtol=1e-9)
    assert heat.sum() == pytest.approx(-4 * math.pi * p.latent_factor * d.J_inf / R, rel=1e-9)
    assert np.allclose(vap, A_s * d.J_inf / R, rtol=1e-9)
    assert np.all(heat < 0) and np.all(vap > 0)


def test_neumann_far_with_pure_flux_trace_is_singular(small_grid):
    geo = GridGeometry(small_grid)
    s = assemble_transport(geo, Kind.TEMPERATURE, 1.0, 1.0, 0.0, math.inf, None, Stagnant(),
                           far="neumann")
    nt = small_grid.n_theta
    s.matrix = geo.to_matrix(s.meta["coeffs"], np.full(nt, 1.0 / geo.h_s), np.full(nt, -1.0 / geo.h_s))
    assert np.max(np.abs(s.matrix @ np.ones(geo.size))) <= 1e-9
    with pytest.raises(SolveError):
        solve_sparse(s.matrix, np.ones(geo.size))


def test_constant_far_field_state_is_stationary(small_grid):
    p = MaterialParams()
    d = DryingState.from_conditions(p, 60.0, 1.0)
    geo = GridGeometry(small_grid)
    T = Field.constant(small_grid, d.T_inf, Kind.TEMPERATURE)
    s = assemble_transport(geo, Kind.TEMPERATURE, p.thermal_diffusivity, 6e-4, 0.0, 1.0, T,
                           Stokes(0.4))
    apply_dirichlet_far(s, geo, d.T_inf)
    apply_robin_boundary(s, geo, T.surface, np.full(small_grid.n_theta, d.rho_inf), d, p)
    x = solve_sparse(s.matrix, s.rhs)
    assert np.max(np.abs(x - d.T_inf)) <= 1e-10 * d.T_inf


def test_outer_perturbation_propagates_monotonically(small_grid):
    geo = GridGeometry(small_grid)
    u_old = Field.constant(small_grid, 1.0, Kind.TEMPERATURE)
    s = assemble_transport(geo, Kind.TEMPERATURE, 1.0, 1.0, 0.0, 50.0, u_old, Stokes(0.3))
    apply_dirichlet_far(s, geo, 2.0)
    nt = small_grid.n_theta
    s.matrix = geo.to_matrix(s.meta["coeffs"], np.full(nt, 1.0), np.full(nt, -1.0))
    s.rhs[geo.surf_idx] = 0.0
    x = solve_sparse(s.matrix, s.rhs)
    assert x.min() >= 1.0 - 1e-12 and x.max() <= 2.0 + 1e-12
    assert x[geo.last_cell].min() > x[geo.first_cell].max()


def test_solve_sparse_contracts():
    b = np.arange(5.0)
    assert np.array_equal(solve_sparse(sp.identity(5), b), b)
    n = 40
    M = sp.diags([-np.ones(n - 1), 4 + np.linspace(0, 1, n), -np.ones(n - 1)], [-1, 0, 1])
    x = solve_sparse(M, np.ones(n))
    assert np.linalg.norm(M @ x - 1) <= 1e-10 * np.sqrt(n)
    with pytest.raises(SolveError):
        solve_sparse(sp.csr_matrix((3, 3)), np.ones(3))


def test_m_matrix_report_flags_bad_rows():
    A = sp.csr_matrix(np.array([[2.0, -1.0, 0.0], [0.5, 1.0, -0.2], [0.0, -3.0, 1.0]]))
    rep = m_matrix_report(A)
    assert not rep["ok"]
    assert rep["positive_offdiagonal"] == [1]
    assert rep["not_dominant"] == [2]


def test_dump_triplets(tmp_path, small_grid):
    L = assemble_diffusion(small_grid, 1.0)
    path = tmp_path / "L.txt"
    dump_triplets(L, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("#") and len(lines) == 1 + L.nnz
    r, c, v = lines[1].split()
    assert L[int(r), int(c)] == float(v)
