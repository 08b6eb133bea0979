"""Phase-potential upstreaming (PPU).

Each phase is upwinded on its own: the driving value

    q~_l = T (dp + g rho_avg dz),   rho_avg = (rho_m + rho_n) / 2

selects the cell whose mobility and density are used, and the mass flux is
``Q_l = rho_up lambda_up q~_l``.
"""

from __future__ import annotations

from . import ad
from .flux import CellFields, FaceFluxes, FaceStencil, FluxScheme, gather, upwind


def ppu_phase_flux(stencil: FaceStencil, p, rho, lam, gravity: float):
    """Mass flux of one phase over all faces of ``stencil``.

    Args:
        p: Cell pressures.
        rho: Cell densities of the phase.
        lam: Cell mobilities of the phase.

    Returns:
        ``(Q, up)`` with ``up`` True where the m cell was chosen.
    """
    m, n = stencil.m, stencil.n
    dp = gather(p, m) - gather(p, n)
    rho_m, rho_n = gather(rho, m), gather(rho, n)
    drive = stencil.trans * (dp + gravity * 0.5 * (rho_m + rho_n) * stencil.dz)
    up = ad.value(drive) >= 0
    lam_up = upwind(gather(lam, m), gather(lam, n), drive)
    rho_up = upwind(rho_m, rho_n, drive)
    return rho_up * lam_up * drive, up


class PPUScheme(FluxScheme):
    name = "ppu"
    labels = ("q0", "q1")

    def fluxes(self, stencil: FaceStencil, cells: CellFields, gravity: float) -> FaceFluxes:
        q0, up0 = ppu_phase_flux(stencil, cells.p, cells.rho[0], cells.lam[0], gravity)
        q1, up1 = ppu_phase_flux(stencil, cells.p, cells.rho[1], cells.lam[1], gravity)
        return FaceFluxes(total=q0 + q1, phase0=q0, choices={"q0": up0, "q1": up1})


def ppu_residual_contrib(incidence, eps_a: float, fluxes: FaceFluxes):
    """Per-cell flux terms ``eps^a |c| D Q`` of the pressure and heavy-phase equations.

    ``incidence`` is the unscaled signed cell-face incidence of the interior faces.
    """
    return (
        eps_a * ad.project(incidence, fluxes.total),
        eps_a * ad.project(incidence, fluxes.phase0),
    )

