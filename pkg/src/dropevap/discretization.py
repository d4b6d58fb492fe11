"""Finite-volume assembly of the rescaled transport equations.

Each field (temperature or vapor density) is discretized on the cells of an
:class:`~dropevap.geometry.AxiGrid` plus one auxiliary unknown per polar band
holding the trace on the droplet surface. The trace rows carry the
Hertz-Knudsen flux condition; the far boundary is a Dirichlet closure on the
outermost face. Unknown ordering of a single-field system is
``[cells (i * n_r + j) ..., surface traces ...]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .geometry import AxiGrid


class Kind(str, Enum):
    TEMPERATURE = "T"
    VAPOR = "rho"


class SolveError(RuntimeError):
    """Singular or badly conditioned linear system."""


@dataclass
class Field:
    """Cell-centered scalar plus its surface trace (one value per polar band)."""

    values: np.ndarray
    surface: np.ndarray
    kind: Kind

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.surface = np.asarray(self.surface, dtype=float)
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.surface))):
            raise ValueError(f"non-finite entries in {self.kind.value} field")
        if self.surface.shape != (self.values.shape[0],):
            raise ValueError("surface trace must have one entry per polar band")

    @classmethod
    def constant(cls, grid: AxiGrid, value: float, kind: Kind) -> "Field":
        return cls(np.full((grid.n_theta, grid.n_r), float(value)),
                   np.full(grid.n_theta, float(value)), kind)

    def copy(self) -> "Field":
        return Field(self.values.copy(), self.surface.copy(), self.kind)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.values.ravel(), self.surface])

    @classmethod
    def from_flat(cls, x: np.ndarray, grid: AxiGrid, kind: Kind) -> "Field":
        n = grid.n_cells
        return cls(x[:n].reshape(grid.n_theta, grid.n_r).copy(), x[n:].copy(), kind)

    def min(self) -> float:
        return float(min(self.values.min(), self.surface.min()))

    def max(self) -> float:
        return float(max(self.values.max(), self.surface.max()))


@dataclass
class TransportSystem:
    """Sparse system for one field; ``surface_rows`` are filled by the boundary step."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    far_coef: np.ndarray
    kappa: float
    R: float
    Rdot: float
    dt: float
    kind: Kind
    meta: dict = field(default_factory=dict)


class GridGeometry:
    """Conductances and sparsity pattern derived once per grid."""

    def __init__(self, grid: AxiGrid):
        self.grid = grid
        nt, nr = grid.n_theta, grid.n_r
        r_c, th_c = grid.r_c, grid.theta_c
        self.Gr = grid.area_r[:, 1:-1] / np.diff(r_c)[None, :]
        self.Gt = grid.area_theta[1:-1, :] / (r_c[None, :] * np.diff(th_c)[:, None])
        self.h_s = r_c[0] - 1.0
        self.h_o = grid.r_out - r_c[-1]
        self.Gs = grid.area_r[:, 0] / self.h_s
        self.Go = grid.area_r[:, -1] / self.h_o
        self.vol = grid.vol
        self.n = grid.n_cells
        self.size = self.n + nt

        idx = np.arange(self.n).reshape(nt, nr)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel())
        rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel())
        rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel())
        rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel())
        surf_idx = self.n + np.arange(nt)
        rows.append(idx[:, 0]); cols.append(surf_idx)
        rows.append(surf_idx); cols.append(surf_idx)
        rows.append(surf_idx); cols.append(idx[:, 0])
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.first_cell = idx[:, 0]
        self.last_cell = idx[:, -1]
        self.surf_idx = surf_idx

    def face_fluxes(self, model, R: float, Rdot: float):
        """Volumetric fluxes of w = (v - Rdot x) / R through every face."""
        g = self.grid
        th_c, r_c, r_f, th_f = g.theta_c, g.r_c, g.r_faces, g.theta_faces
        TH, RF = np.meshgrid(th_c, r_f, indexing="ij")
        _, vr = model.eval(TH, RF, R)
        wr = (np.asarray(vr) - Rdot * RF) / R
        Fr = wr * g.area_r
        THf, RC = np.meshgrid(th_f, r_c, indexing="ij")
        vt, _ = model.eval(THf, RC, R)
        Ft = np.asarray(vt) / R * g.area_theta
        return Fr, Ft

    def stencil(self, kappa_R2, Fr, Ft, vdt, scheme="upwind"):
        if scheme not in ("upwind", "central"):
            raise ValueError(f"unknown advection scheme {scheme!r}")
        return kernels.stencil(kappa_R2, self.Gr, self.Gt, self.Gs, self.Go,
                               np.ascontiguousarray(Fr), np.ascontiguousarray(Ft),
                               vdt, scheme == "upwind")

    def to_matrix(self, coeffs, surf_diag, surf_cell) -> sp.csr_matrix:
        diag, rm, rp, tm, tp, surf, _ = coeffs
        vals = np.concatenate([
            diag.ravel(), rm[:, 1:].ravel(), rp[:, :-1].ravel(),
            tm[1:, :].ravel(), tp[:-1, :].ravel(), surf, surf_diag, surf_cell,
        ])
        return sp.csr_matrix((vals, (self.rows, self.cols)), shape=(self.size, self.size))


def assemble_diffusion(grid: AxiGrid, alpha: float, R: float = 1.0) -> sp.csr_matrix:
    """Volume-integrated (alpha/R^2) Laplacian over interior faces only.

    Returns the n_cells square matrix L with (L u)_c = sum_f D_f (u_nb - u_c);
    symmetric and negative semidefinite.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    geo = GridGeometry(grid)
    nt, nr = grid.n_theta, grid.n_r
    k = alpha / R**2
    idx = np.arange(geo.n).reshape(nt, nr)
    Dr = k * geo.Gr
    Dt = k * geo.Gt
    rows = np.concatenate([idx[:, :-1].ravel(), idx[:, 1:].ravel(),
                           idx[:-1, :].ravel(), idx[1:, :].ravel()])
    cols = np.concatenate([idx[:, 1:].ravel(), idx[:, :-1].ravel(),
                           idx[1:, :].ravel(), idx[:-1, :].ravel()])
    vals = np.concatenate([Dr.ravel(), Dr.ravel(), Dt.ravel(), Dt.ravel()])
    off = sp.csr_matrix((vals, (rows, cols)), shape=(geo.n, geo.n))
    return (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()


def assemble_advection(grid: AxiGrid, model, R: float, Rdot: float,
                       scheme: str = "upwind"):
    """Interior-face advection operator for w . grad u with w = (v - Rdot x)/R.

    Returns ``(A, Fr, Ft)`` where (A u)_c = sum_f F_f (u_f - u_c) over interior
    faces and Fr/Ft are the face flux arrays (along +r / +theta).
    """
    if scheme not in ("upwind", "central"):
        raise ValueError(f"unknown advection scheme {scheme!r}")
    geo = GridGeometry(grid)
    Fr, Ft = geo.face_fluxes(model, R, Rdot)
    Fr_i = Fr.copy()
    Fr_i[:, 0] = 0.0
    Fr_i[:, -1] = 0.0
    nt, nr = grid.n_theta, grid.n_r
    zeros_G = (np.zeros_like(geo.Gr), np.zeros_like(geo.Gt), np.zeros(nt), np.zeros(nt))
    coeffs = kernels.stencil_numpy(0.0, *zeros_G, Fr_i, Ft, np.zeros((nt, nr)),
                                   scheme == "upwind")
    diag, rm, rp, tm, tp, _, _ = coeffs
    idx = np.arange(geo.n).reshape(nt, nr)
    rows = np.concatenate([idx.ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel(),
                           idx[1:, :].ravel(), idx[:-1, :].ravel()])
    cols = np.concatenate([idx.ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel(),
                           idx[:-1, :].ravel(), idx[1:, :].ravel()])
    vals = np.concatenate([diag.ravel(), rm[:, 1:].ravel(), rp[:, :-1].ravel(),
                           tm[1:, :].ravel(), tp[:-1, :].ravel()])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(geo.n, geo.n))
    return A, Fr, Ft


def assemble_transport(geo: GridGeometry, kind: Kind, kappa: float, R: float, Rdot: float,
                       dt: float, u_old: Field | None, model, scheme: str = "upwind",
                       far: str = "dirichlet", fluxes=None) -> TransportSystem:
    """Implicit-Euler system (V/dt + transport) for one field, surface rows empty.

    ``dt = inf`` (or ``u_old is None``) gives the steady operator.
    ``far='neumann'`` drops the outer Dirichlet closure (used for nullspace checks).
    """
    if not R > 0:
        raise ValueError("R must be positive")
    nt, nr = geo.grid.n_theta, geo.grid.n_r
    steady = u_old is None or not math.isfinite(dt)
    vdt = np.zeros((nt, nr)) if steady else geo.vol / dt
    Fr, Ft = geo.face_fluxes(model, R, Rdot) if fluxes is None else fluxes
    if far == "neumann":
        Fr = Fr.copy()
        Fr[:, -1] = 0.0
        Go = geo.Go
        geo.Go = np.zeros_like(Go)
        try:
            coeffs = geo.stencil(kappa / R**2, Fr, Ft, vdt, scheme)
        finally:
            geo.Go = Go
    elif far == "dirichlet":
        coeffs = geo.stencil(kappa / R**2, Fr, Ft, vdt, scheme)
    else:
        raise ValueError(f"unknown far-field closure {far!r}")
    # surface rows are placeholders (identity) until a boundary is applied
    A = geo.to_matrix(coeffs, np.ones(nt), np.zeros(nt))
    rhs = np.zeros(geo.size)
    if not steady:
        rhs[: geo.n] = (vdt * u_old.values).ravel()
    return TransportSystem(A, rhs, coeffs[6].copy(), kappa, R, Rdot, dt, kind,
                           meta={"scheme": scheme, "far": far, "coeffs": coeffs})


def apply_dirichlet_far(system: TransportSystem, geo: GridGeometry, value: float) -> TransportSystem:
    """Pin the outer ghost value; only the right-hand side changes."""
    system.rhs[geo.last_cell] += system.far_coef * value
    system.meta["far_value"] = float(value)
    return system


def robin_rows(geo: GridGeometry, kind: Kind, kappa: float, R: float, flux_factor: float,
               coef: np.ndarray, source: np.ndarray):
    """Linear trace rows ``(kappa/h + R*ff*coef) u_s - (kappa/h) u_0 = R*ff*source``.

    Temperature traces use ``flux_factor = Lambda/(rho_g cp_g)`` with
    ``coef`` the linearized dJ/dT and ``source = coef*T_lin - J_lin``; vapor
    traces use ``flux_factor = 1`` with ``coef`` the dJ/d(-rho) slope and
    ``source = J_lin + coef*rho_lin``.
    """
    k_h = kappa / geo.h_s
    diag = k_h + R * flux_factor * np.asarray(coef, dtype=float)
    cell = np.full(geo.grid.n_theta, -k_h)
    rhs = R * flux_factor * np.asarray(source, dtype=float)
    return diag, cell, rhs


def apply_robin_boundary(system: TransportSystem, geo: GridGeometry, T_lin: np.ndarray,
                         rho_lin: np.ndarray, drying, params, mode: str = "newton",
                         heat_flux_sign: float = 1.0) -> TransportSystem:
    """Fill the surface rows with the Hertz-Knudsen condition linearized at (T_lin, rho_lin).

    ``mode='newton'`` uses the tangent slope C*rho_sat'(T_lin) for the
    temperature rows; ``mode='picard'`` uses the Lipschitz bound C*L, which
    gives the monotone upper/lower iteration. Vapor rows always use C.
    Cross-variable terms are handled by the caller (monolithic Newton).
    """
    C = drying.C_hk
    J = np.asarray(drying.evap_rate(T_lin, rho_lin), dtype=float)
    if system.kind is Kind.TEMPERATURE:
        ff = heat_flux_sign * params.latent_factor
        slope = C * drying.L if mode == "picard" else C * np.asarray(drying.drho_sat_dT(T_lin))
        slope = np.broadcast_to(slope, J.shape)
        diag, cell, rhs = robin_rows(geo, system.kind, system.kappa, system.R, ff,
                                     slope, slope * T_lin - J)
    else:
        slope = np.full_like(J, C)
        diag, cell, rhs = robin_rows(geo, system.kind, system.kappa, system.R, 1.0,
                                     slope, J + C * np.asarray(rho_lin))
    system.matrix = geo.to_matrix(system.meta["coeffs"], diag, cell)
    system.rhs[geo.surf_idx] = rhs
    system.meta["linearization"] = mode
    return system


def solve_sparse(A, b, rtol: float = 1e-10) -> np.ndarray:
    """Direct sparse solve with a residual check.

    Accepts the result when ``|Ax - b| <= rtol |b|``, or when the backward
    error ``|Ax - b| / (|A||x| + |b|)`` is below ``rtol`` and the matrix is not
    numerically singular (equilibrated 1-norm condition estimate below 1e14).
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A, b)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SolveError(f"singular system: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolveError(f"singular system (non-finite solution); {_cond_hint(A)}")
    bn = np.linalg.norm(b, np.inf)
    res = np.linalg.norm(A @ x - b, np.inf)
    if res <= rtol * bn or res == 0.0:
        return x
    An = spla.norm(A, np.inf)
    backward = res / (An * np.linalg.norm(x, np.inf) + bn)
    cond = condition_estimate(A)
    if backward <= rtol and cond < 1e14:
        return x
    raise SolveError(f"relative residual {res / max(bn, 1e-300):.3e} (backward error "
                     f"{backward:.3e}) above {rtol:g}; condition estimate {cond:.3e}; {_cond_hint(A)}")


def condition_estimate(A, equilibrate: bool = True) -> float:
    """1-norm condition number estimate from a sparse LU factorization.

    With ``equilibrate`` the rows and then the columns are scaled to unit max
    entry first, so blocks carrying different physical units do not inflate
    the estimate.
    """
    A = sp.csc_matrix(A)
    if equilibrate:
        r = np.asarray(abs(A).max(axis=1).todense()).ravel()
        r[r == 0] = 1.0
        A = sp.diags(1.0 / r) @ A
        c = np.asarray(abs(A).max(axis=0).todense()).ravel()
        c[c == 0] = 1.0
        A = sp.csc_matrix(A @ sp.diags(1.0 / c))
    try:
        lu = spla.splu(A)
    except RuntimeError:
        return math.inf
    n = A.shape[0]
    inv = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda y: lu.solve(y, trans="T"),
                              dtype=float)
    return float(spla.onenormest(A) * spla.onenormest(inv))


def _cond_hint(A) -> str:
    d = np.abs(A.diagonal())
    if d.size == 0 or d.min() == 0.0:
        return "zero on the diagonal"
    return f"diagonal ratio {d.max() / d.min():.3e}"


def m_matrix_report(A, rows=None, tol: float = 1e-12) -> dict:
    """Row-by-row audit: positive diagonal, nonpositive off-diagonals, weak dominance."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    rows = np.arange(n) if rows is None else np.asarray(rows)
    diag = A.diagonal()
    off = A - sp.diags(diag)
    off = off.tocsr()
    max_off = np.full(n, -np.inf)
    off_abs_sum = np.asarray(abs(off).sum(axis=1)).ravel()
    coo = off.tocoo()
    np.maximum.at(max_off, coo.row, coo.data)
    max_off[np.isinf(max_off)] = 0.0
    scale = np.maximum(np.abs(diag), 1e-300)
    bad_diag = rows[diag[rows] <= 0]
    bad_off = rows[max_off[rows] > tol * scale[rows]]
    bad_dom = rows[diag[rows] < off_abs_sum[rows] * (1 - tol) - tol * scale[rows]]
    return {"rows": int(rows.size), "nonpositive_diagonal": bad_diag.tolist(),
            "positive_offdiagonal": bad_off.tolist(), "not_dominant": bad_dom.tolist(),
            "ok": not (bad_diag.size or bad_off.size or bad_dom.size)}


def surface_from_extrapolation(grid: AxiGrid, values: np.ndarray) -> np.ndarray:
    """Linear extrapolation of the first two radial layers to r = 1 (diagnostic only)."""
    r0, r1 = grid.r_c[0], grid.r_c[1]
    w1 = (1.0 - r0) / (r1 - r0)
    return values[:, 0] + w1 * (values[:, 1] - values[:, 0])


def outer_from_extrapolation(grid: AxiGrid, values: np.ndarray) -> np.ndarray:
    r0, r1 = grid.r_c[-1], grid.r_c[-2]
    w1 = (grid.r_out - r0) / (r1 - r0)
    return values[:, -1] + w1 * (values[:, -2] - values[:, -1])


def dump_triplets(A, path) -> None:
    """Coordinate-format text dump: one ``row col value`` line per stored entry."""
    coo = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
