"""Axisymmetric (theta, r) control-volume mesh of the rescaled shell 1 <= r <= r_out."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GridError(ValueError):
    pass


def _radial_faces(n_r: int, r_out: float, stretch: float) -> np.ndarray:
    span = r_out - 1.0
    if stretch == 1.0:
        widths = np.full(n_r, span / n_r)
    else:
        dr0 = span * (stretch - 1.0) / (stretch**n_r - 1.0)
        widths = dr0 * stretch ** np.arange(n_r)
    faces = np.empty(n_r + 1)
    faces[0] = 1.0
    faces[1:] = 1.0 + np.cumsum(widths)
    faces[-1] = r_out
    return faces


@dataclass(frozen=True, eq=False)
class AxiGrid:
    """Structured cell-centered grid; cell (i, j) is polar index i, radial index j.

    Flattened unknown index is ``i * n_r + j``.
    """

    n_theta: int
    n_r: int
    r_out: float
    stretch: float
    theta_faces: np.ndarray
    r_faces: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.n_theta * self.n_r

    @cached_property
    def theta_c(self) -> np.ndarray:
        return 0.5 * (self.theta_faces[:-1] + self.theta_faces[1:])

    @cached_property
    def r_c(self) -> np.ndarray:
        return 0.5 * (self.r_faces[:-1] + self.r_faces[1:])

    @cached_property
    def dcos(self) -> np.ndarray:
        """cos(theta_lo) - cos(theta_hi) per polar band."""
        c = np.cos(self.theta_faces)
        return c[:-1] - c[1:]

    @cached_property
    def vol(self) -> np.ndarray:
        """Exact cell volumes, shape (n_theta, n_r)."""
        r3 = self.r_faces**3
        return 2.0 * math.pi / 3.0 * np.outer(self.dcos, r3[1:] - r3[:-1])

    @cached_property
    def area_r(self) -> np.ndarray:
        """Radial face areas, shape (n_theta, n_r + 1); column 0 is the droplet surface."""
        return 2.0 * math.pi * np.outer(self.dcos, self.r_faces**2)

    @cached_property
    def area_theta(self) -> np.ndarray:
        """Polar face areas, shape (n_theta + 1, n_r); rows 0 and n_theta lie on the axis."""
        r2 = self.r_faces**2
        a = math.pi * np.outer(np.sin(self.theta_faces), r2[1:] - r2[:-1])
        a[0, :] = 0.0
        a[-1, :] = 0.0
        return a

    @cached_property
    def surface_weights(self) -> np.ndarray:
        return surface_weights(self)

    def centers(self):
        """Meshgrid of cell centers (theta, r), each shaped (n_theta, n_r)."""
        return np.meshgrid(self.theta_c, self.r_c, indexing="ij")

    def dump_csv(self, path) -> None:
        th, r = self.centers()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "theta_c", "r_c", "volume"])
            for i in range(self.n_theta):
                for j in range(self.n_r):
                    w.writerow([i, j, repr(th[i, j]), repr(r[i, j]), repr(self.vol[i, j])])


# "fine" matches a reference mesh in unknown count (about 2 x 119k cells for
# the two fields) and per-layer growth 1.0025; it is far too slow for tests.
GRID_PRESETS = {
    "desk": {"n_theta": 32, "n_r": 64, "r_out": 50.0, "stretch": 1.08},
    "fine": {"n_theta": 192, "n_r": 620, "r_out": 50.0, "stretch": 1.0025},
}


def build_grid(n_theta: int = 32, n_r: int = 64, r_out: float = 50.0,
               stretch: float = 1.08, min_cells: int = 4) -> AxiGrid:
    """Uniform polar bands and geometrically stretched radial layers.

    Layer widths satisfy ``dr[j+1] = stretch * dr[j]`` and tile [1, r_out]
    exactly. ``min_cells`` only exists so the quadrature helpers can be
    exercised on a single polar band.
    """
    if n_theta < min_cells or n_r < min_cells:
        raise GridError(f"need at least {min_cells} cells per direction, got {n_theta}x{n_r}")
    if not r_out > 1.0:
        raise GridError(f"r_out must exceed 1, got {r_out}")
    if not stretch >= 1.0:
        raise GridError(f"stretch must be >= 1, got {stretch}")
    theta_faces = np.linspace(0.0, math.pi, n_theta + 1)
    theta_faces[-1] = math.pi
    r_faces = _radial_faces(n_r, float(r_out), float(stretch))
    if np.any(np.diff(r_faces) <= 0):
        raise GridError("stretch too large for this layer count")
    for a in (theta_faces, r_faces):
        a.setflags(write=False)
    return AxiGrid(n_theta, n_r, float(r_out), float(stretch), theta_faces, r_faces)


def surface_weights(grid: AxiGrid) -> np.ndarray:
    """Quadrature weights on the unit sphere, 2 pi (cos theta_i - cos theta_{i+1})."""
    return 2.0 * math.pi * grid.dcos


def refine_stretch(stretch: float, factor: int = 2) -> float:
    """Per-layer growth that keeps the same mapping when the layer count is multiplied."""
    return stretch ** (1.0 / factor)
