"""Interface coupling: mortar-flux law, interface upwinding and coupling terms.

``zeta`` is the volumetric interface flux divided by the mobility, integrated
over the mortar cell and positive from the higher to the lower side. The mass
flux carried by a mortar cell is ``rho^zeta lam^zeta zeta`` with both factors
taken from the upstream side.
"""

from __future__ import annotations

import numpy as np

from . import ad
from .topology import MortarInterface, TopologyError


def _require_projections(mortar: MortarInterface) -> None:
    if not mortar.has_projections:
        raise TopologyError(f"mortar {mortar.id}: projections have not been built")


def interface_upwind(mortar: MortarInterface, zeta, high_cells, low_cells):
    """Upstream value per mortar cell.

    Args:
        zeta: Mortar flux of the phase (only its sign is used).
        high_cells: Field on the cells of the higher-side subdomain.
        low_cells: Field on the cells of the lower-side subdomain.
    """
    _require_projections(mortar)
    high = ad.project(mortar.high_cell_avg, high_cells)
    low = ad.project(mortar.low_avg, low_cells)
    return ad.where(ad.value(zeta) >= 0, high, low)


def mortar_residual(mortar: MortarInterface, zeta, p_high, p_low, rho_zeta, gravity: float):
    """Residual of the discrete interface flux law, one entry per mortar cell.

    The normal pressure gradient is the jump between the adjacent higher-side
    cell centre and the lower-side cell over half the aperture.
    """
    _require_projections(mortar)
    jump = ad.project(mortar.high_cell_avg, p_high) - ad.project(mortar.low_avg, p_low)
    coef = mortar.codim_factor * mortar.normal_permeability * mortar.cell_measures
    drive = (2.0 / mortar.lower_aperture) * jump - rho_zeta * gravity * mortar.gravity_cosine
    return zeta - coef * drive


def mortar_mass_flux(mortar: MortarInterface, zeta, high_fields, low_fields):
    """``rho^zeta lam^zeta zeta`` for one phase.

    Args:
        high_fields, low_fields: ``(rho, lam)`` cell fields of the phase on each side.
    """
    rho = interface_upwind(mortar, zeta, high_fields[0], low_fields[0])
    lam = interface_upwind(mortar, zeta, high_fields[1], low_fields[1])
    return rho * lam * zeta


def higher_side_bc(mortar: MortarInterface, mass_flux):
    """Outward mass flux on every face of the higher-side grid.

    Faces not touched by the mortar get zero (no-flow).
    """
    _require_projections(mortar)
    return ad.project(sps_transpose(mortar.high_avg), mass_flux)


def higher_side_cell_outflow(mortar: MortarInterface, mass_flux):
    """Mass leaving each higher-side cell through the mortar."""
    return ad.project(sps_transpose(mortar.high_cell_avg), mass_flux)


def lower_side_inflow(mortar: MortarInterface, mass_flux):
    """Mass entering each lower-side cell through the mortar."""
    _require_projections(mortar)
    return ad.project(sps_transpose(mortar.low_avg), mass_flux)


def coupling_sources(num_cells: int, inflows, withdrawal=None):
    """Coupling terms ``psi`` of a lower-side subdomain.

    Args:
        num_cells: Cells of the subdomain.
        inflows: Iterable of ``(total, phase0)`` mass inflows per cell, one pair
            per mortar (see :func:`lower_side_inflow`).
        withdrawal: Optional ``(total, phase0)`` per-cell mass withdrawal rates ``f``.

    Returns:
        ``(psi_p, psi_s) = sum of inflows - f``; they enter the cell balance with
        a negative sign.
    """
    psi_p, psi_s = np.zeros(num_cells), np.zeros(num_cells)
    for total, phase0 in inflows:
        psi_p = psi_p + total
        psi_s = psi_s + phase0
    if withdrawal is not None:
        psi_p = psi_p - withdrawal[0]
        psi_s = psi_s - withdrawal[1]
    return psi_p, psi_s


def zero_d_balance(eps_a: float, acc, acc_prev, dt: float, psi):
    """Total and heavy-phase balances of a point subdomain (unit cell measure).

    Args:
        acc, acc_prev: ``(u0 + u1, u0)`` at the new and previous time.
        psi: ``(psi_p, psi_s)`` from :func:`coupling_sources`.
    """
    return tuple(eps_a * (a - b) / dt - s for a, b, s in zip(acc, acc_prev, psi))


def sps_transpose(matrix):
    return matrix.T.tocsr()
