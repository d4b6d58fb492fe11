"""Per-cell stencil coefficients for the implicit convection-diffusion operator.

Two interchangeable implementations: a numba-compiled cell loop and a
vectorized numpy version. Setting ``DROPEVAP_DISABLE_NUMBA=1`` (or running
without numba installed) selects the numpy path; both return bit-compatible
coefficients up to summation order.

Row convention for cell c = (i, j)::

    diag*u_c + rm*u[i,j-1] + rp*u[i,j+1] + tm*u[i-1,j] + tp*u[i+1,j]
        + surf*u_s[i]  (j == 0 only)  =  vdt*u_old + far*u_inf  (far: j == n_r-1 only)

Off-diagonal coefficients of upwind stencils are nonpositive.
"""
from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("DROPEVAP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def stencil_numpy(kappa, Gr, Gt, Gs, Go, Fr, Ft, vdt, upwind):
    """Vectorized stencil coefficients.

    Gr (nt, nr-1) interior radial conductances, Gt (nt-1, nr) interior polar
    conductances, Gs/Go (nt,) surface/outer half-cell conductances. Fr
    (nt, nr+1) volumetric fluxes through radial faces along +r, Ft (nt+1, nr)
    through polar faces along +theta. ``kappa`` already carries 1/R^2.
    """
    nt, nr = vdt.shape
    diag = vdt.copy()
    rm = np.zeros((nt, nr))
    rp = np.zeros((nt, nr))
    tm = np.zeros((nt, nr))
    tp = np.zeros((nt, nr))

    D = kappa * Gr
    diag[:, :-1] += D
    diag[:, 1:] += D
    rp[:, :-1] -= D
    rm[:, 1:] -= D
    D = kappa * Gt
    diag[:-1, :] += D
    diag[1:, :] += D
    tp[:-1, :] -= D
    tm[1:, :] -= D

    Fri = Fr[:, 1:-1]
    Fti = Ft[1:-1, :]
    Fs = -Fr[:, 0]
    Fo = Fr[:, -1]
    surf = -kappa * Gs
    far = kappa * Go
    diag[:, 0] += kappa * Gs
    diag[:, -1] += kappa * Go
    if upwind:
        inn = np.maximum(-Fri, 0.0)  # flow from the high-r cell into the low-r cell
        out = np.maximum(Fri, 0.0)
        diag[:, :-1] += inn
        rp[:, :-1] -= inn
        diag[:, 1:] += out
        rm[:, 1:] -= out
        inn = np.maximum(-Fti, 0.0)
        out = np.maximum(Fti, 0.0)
        diag[:-1, :] += inn
        tp[:-1, :] -= inn
        diag[1:, :] += out
        tm[1:, :] -= out
        a = np.maximum(-Fs, 0.0)
        diag[:, 0] += a
        surf -= a
        a = np.maximum(-Fo, 0.0)
        diag[:, -1] += a
        far += a
    else:
        h = 0.5 * Fri
        diag[:, :-1] -= h
        rp[:, :-1] += h
        diag[:, 1:] += h
        rm[:, 1:] -= h
        h = 0.5 * Fti
        diag[:-1, :] -= h
        tp[:-1, :] += h
        diag[1:, :] += h
        tm[1:, :] -= h
        diag[:, 0] -= 0.5 * Fs
        surf += 0.5 * Fs
        diag[:, -1] -= 0.5 * Fo
        far -= 0.5 * Fo
    return diag, rm, rp, tm, tp, surf, far


if HAVE_NUMBA:

    @njit(cache=True)
    def _stencil_loop(kappa, Gr, Gt, Gs, Go, Fr, Ft, vdt, upwind):
        nt, nr = vdt.shape
        diag = vdt.copy()
        rm = np.zeros((nt, nr))
        rp = np.zeros((nt, nr))
        tm = np.zeros((nt, nr))
        tp = np.zeros((nt, nr))
        surf = np.zeros(nt)
        far = np.zeros(nt)
        for i in range(nt):
            for j in range(nr):
                d = diag[i, j]
                # radial face toward smaller r
                if j > 0:
                    D = kappa * Gr[i, j - 1]
                    F = -Fr[i, j]  # outward from this cell
                    d += D
                    c = -D
                    if upwind:
                        if F < 0.0:
                            d -= F
                            c += F
                    else:
                        d -= 0.5 * F
                        c += 0.5 * F
                    rm[i, j] = c
                else:
                    D = kappa * Gs[i]
                    F = -Fr[i, 0]
                    d += D
                    c = -D
                    if upwind:
                        if F < 0.0:
                            d -= F
                            c += F
                    else:
                        d -= 0.5 * F
                        c += 0.5 * F
                    surf[i] = c
                # radial face toward larger r
                if j < nr - 1:
                    D = kappa * Gr[i, j]
                    F = Fr[i, j + 1]
                    d += D
                    c = -D
                    if upwind:
                        if F < 0.0:
                            d -= F
                            c += F
                    else:
                        d -= 0.5 * F
                        c += 0.5 * F
                    rp[i, j] = c
                else:
                    D = kappa * Go[i]
                    F = Fr[i, nr]
                    d += D
                    c = D
                    if upwind:
                        if F < 0.0:
                            d -= F
                            c -= F
                    else:
                        d -= 0.5 * F
                        c -= 0.5 * F
                    far[i] = c
                # polar faces
                if i > 0:
                    D = kappa * Gt[i - 1, j]
                    F = -Ft[i, j]
                    d += D
                    c = -D
                    if upwind:
                        if F < 0.0:
                            d -= F
                            c += F
                    else:
                        d -= 0.5 * F
                        c += 0.5 * F
                    tm[i, j] = c
                if i < nt - 1:
                    D = kappa * Gt[i, j]
                    F = Ft[i + 1, j]
                    d += D
                    c = -D
                    if upwind:
                        if F < 0.0:
                            d -= F
                            c += F
                    else:
                        d -= 0.5 * F
                        c += 0.5 * F
                    tp[i, j] = c
                diag[i, j] = d
        return diag, rm, rp, tm, tp, surf, far

    def stencil_numba(kappa, Gr, Gt, Gs, Go, Fr, Ft, vdt, upwind):
        return _stencil_loop(float(kappa), Gr, Gt, Gs, Go, Fr, Ft,
                             np.ascontiguousarray(vdt, dtype=np.float64), bool(upwind))

    stencil = stencil_numba
    BACKEND = "numba"
else:
    stencil_numba = None
    stencil = stencil_numpy
    BACKEND = "numpy"
