"""Shared pieces of the face-flux schemes: stencils, cell fields and upwinding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from . import ad
from .grid import SubdomainGrid, tpfa_transmissibilities


@dataclass(eq=False)
class FaceStencil:
    """Interior faces of one grid with their two-point data.

    ``dz = z_m - z_n`` so that ``Delta Phi = Phi_m - Phi_n = dp + rho g dz``.
    """

    faces: np.ndarray
    m: np.ndarray
    n: np.ndarray
    trans: np.ndarray
    dz: np.ndarray

    @classmethod
    def from_grid(cls, grid: SubdomainGrid) -> "FaceStencil":
        faces = grid.interior_faces
        trans = tpfa_transmissibilities(grid)[faces]
        m, n = grid.face_cells[faces, 0], grid.face_cells[faces, 1]
        z = grid.cell_elevation
        return cls(faces=faces, m=m, n=n, trans=trans, dz=z[m] - z[n])

    @classmethod
    def two_cells(cls, trans: float = 1.0, dz: float = 0.0) -> "FaceStencil":
        """A single face between cells 0 (m) and 1 (n)."""
        return cls(
            faces=np.array([0]),
            m=np.array([0]),
            n=np.array([1]),
            trans=np.array([float(trans)]),
            dz=np.array([float(dz)]),
        )

    @property
    def num_faces(self) -> int:
        return self.faces.size


@dataclass(eq=False)
class CellFields:
    """Cell values entering the face fluxes; entries may be AD arrays."""

    p: object
    s0: object
    rho: Tuple[object, object]
    lam: Tuple[object, object]

    @property
    def s(self):
        return (self.s0, 1.0 - self.s0)


@dataclass(eq=False)
class FaceFluxes:
    """Mass fluxes over the interior faces, oriented from m to n.

    ``total`` drives the pressure equation and ``phase0`` the heavy-phase mass
    balance. ``choices`` holds the boolean upwind decisions (True = m side)
    that are compared between Newton iterates.
    """

    total: object
    phase0: object
    choices: Dict[str, np.ndarray]


def upwind(x_m, x_n, v):
    """Discrete upwind operator: ``x_m`` where ``v >= 0``, else ``x_n``."""
    return ad.where(ad.value(v) >= 0, x_m, x_n)


class FluxScheme:
    """Face-flux evaluator; subclasses implement :meth:`fluxes`."""

    name = "base"
    labels: Tuple[str, ...] = ()

    def fluxes(self, stencil: FaceStencil, cells: CellFields, gravity: float) -> FaceFluxes:
        raise NotImplementedError


def gather(x, idx: np.ndarray):
    """Values of a cell field at the given cells (AD-aware)."""
    if ad.is_ad(x):
        return x[idx]
    return np.asarray(x, dtype=float)[idx]
