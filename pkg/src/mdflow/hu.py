"""Hybrid upwinding (HU).

The heavy-phase flux is split into a viscous part ``V_0``, upwinded by the
total volumetric flux, and a buoyancy part ``G_0``, upwinded by the direction
in which gravity moves each phase relative to the other. The total mass flux
uses mobilities blended smoothly between the two cells::

    beta_l   = 1/2 + arctan(c_l dPhi_l) / pi
    lam_WA_l = beta_l lam_l,m + (1 - beta_l) lam_l,n
    q_WA_l   = lam_WA_l T dPhi_l,       Q_T = sum_l rho_l,face q_WA_l

Buoyancy upwinding. The counter-phase ``k`` of phase ``l`` is taken from the
cell it leaves when gravity alone acts, i.e. from m when
``(rho_k - rho_l) g dz >= 0`` (``dz = z_m - z_n``), and the signed driving value
is ``omega_l = lam_k^g (rho_l - rho_k) g dz``. On faces oriented upwards this is
the usual rule "take the light counter-phase from below".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ad
from .fluid import QUADRATIC, PowerLawRelPerm
from .flux import CellFields, FaceFluxes, FaceStencil, FluxScheme, gather, upwind

TOTAL_MOBILITY_FLOOR = 1e-300
ABSENT_PHASE = 1e-10


@dataclass(frozen=True)
class BlendParams:
    cap: float = 1e6
    relperm: PowerLawRelPerm = QUADRATIC

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError("cap must be positive")


def saturation_weighted_density(s_m, rho_m, s_n, rho_n):
    """Face density weighted by the phase saturations of the two cells.

    Falls back to the arithmetic mean where the phase is absent on both sides
    (total saturation below ``ABSENT_PHASE``, which also keeps ``1 / total``
    and its derivative finite). Written as a correction of ``rho_n`` so that
    equal cell densities are returned exactly.
    """
    total = s_m + s_n
    present = ad.value(total) > ABSENT_PHASE
    safe = ad.where(present, total, 1.0)
    return ad.where(present, rho_n + s_m * (rho_m - rho_n) / safe, 0.5 * (rho_m + rho_n))


def blend_weight(dphi, c):
    return 0.5 + ad.arctan(c * dphi) / math.pi


def blend_coefficient(rho_face, params: BlendParams = BlendParams()):
    rp = params.relperm
    return ad.minimum(rp.max_curvature / (rp.at_one * rho_face), params.cap)


def _face_densities(stencil: FaceStencil, cells: CellFields):
    m, n = stencil.m, stencil.n
    return tuple(
        saturation_weighted_density(gather(s, m), gather(rho, m), gather(s, n), gather(rho, n))
        for s, rho in zip(cells.s, cells.rho)
    )


def hu_total_flux(stencil: FaceStencil, cells: CellFields, gravity: float, params: BlendParams = BlendParams()):
    """Total mass flux with blended mobilities.

    Returns:
        ``(Q_T, (q0_WA, q1_WA), (rho0_face, rho1_face))``.
    """
    m, n = stencil.m, stencil.n
    dp = gather(cells.p, m) - gather(cells.p, n)
    rho_face = _face_densities(stencil, cells)
    q_wa = []
    for rho_f, lam in zip(rho_face, cells.lam):
        dphi = dp + rho_f * gravity * stencil.dz
        beta = blend_weight(dphi, blend_coefficient(rho_f, params))
        lam_wa = beta * gather(lam, m) + (1.0 - beta) * gather(lam, n)
        q_wa.append(lam_wa * stencil.trans * dphi)
    total = rho_face[0] * q_wa[0] + rho_face[1] * q_wa[1]
    return total, tuple(q_wa), rho_face


def hu_viscous_flux(stencil: FaceStencil, cells: CellFields, q_total):
    """``V_0 = rho_0^V lam_0^V / lam_T^V q_T``, everything upwinded by ``q_T``.

    Returns:
        ``(V_0, up)`` with ``up`` True where the m cell was chosen.
    """
    m, n = stencil.m, stencil.n
    lam_t = cells.lam[0] + cells.lam[1]
    rho_v = upwind(gather(cells.rho[0], m), gather(cells.rho[0], n), q_total)
    lam0_v = upwind(gather(cells.lam[0], m), gather(cells.lam[0], n), q_total)
    lam_t_v = upwind(gather(lam_t, m), gather(lam_t, n), q_total)
    frac = lam0_v / ad.maximum(lam_t_v, TOTAL_MOBILITY_FLOOR)
    return rho_v * frac * q_total, ad.value(q_total) >= 0


def _buoyancy(stencil: FaceStencil, rho_face, gravity: float):
    """``(rho_k - rho_l) g dz`` per phase ``l`` with counter-phase ``k`` (values only)."""
    rf = [ad.value(x) for x in rho_face]
    return tuple((rf[k] - rf[l]) * gravity * stencil.dz for l, k in ((0, 1), (1, 0)))


def gravity_drive(stencil: FaceStencil, cells: CellFields, rho_face, gravity: float):
    """Signed buoyancy driving values ``omega_0, omega_1`` (values only)."""
    m, n = stencil.m, stencil.n
    lam = [ad.value(x) for x in cells.lam]
    omega = []
    for (l, k), lift in zip(((0, 1), (1, 0)), _buoyancy(stencil, rho_face, gravity)):
        lam_k = np.where(lift >= 0, lam[k][m], lam[k][n])
        omega.append(-lam_k * lift)
    return tuple(omega)


def gravity_directions(stencil: FaceStencil, cells: CellFields, rho_face, gravity: float):
    """Upwind sides (True = m) of the buoyancy mobilities.

    The side follows the sign of ``omega``. Where ``omega`` vanishes because the
    counter-phase mobility is zero, the sign of the buoyancy term decides
    instead: ``q^G`` is zero for either side there, and this keeps the recorded
    direction from flipping as a cell saturates.
    """
    omega = gravity_drive(stencil, cells, rho_face, gravity)
    return tuple(
        (w > 0) | ((w == 0) & (-lift >= 0)) for w, lift in zip(omega, _buoyancy(stencil, rho_face, gravity))
    )


def hu_gravity_flux(stencil: FaceStencil, cells: CellFields, rho_face, gravity: float):
    """Buoyancy mass flux of the heavy phase.

    Returns:
        ``(G_0, (up_0, up_1))`` with the sides of :func:`gravity_directions`.
    """
    m, n = stencil.m, stencil.n
    up = gravity_directions(stencil, cells, rho_face, gravity)
    lam_g = [ad.where(u, gather(lam, m), gather(lam, n)) for lam, u in zip(cells.lam, up)]
    # both upwinded mobilities vanish when each phase is absent on its upwind side
    lam_sum = lam_g[0] + lam_g[1]
    lam_t = ad.where(ad.value(lam_sum) > 0, lam_sum, 1.0)
    q_g = stencil.trans * (lam_g[0] * lam_g[1] / lam_t) * (rho_face[0] - rho_face[1]) * gravity * stencil.dz
    rho_g = upwind(gather(cells.rho[0], m), gather(cells.rho[0], n), q_g)
    return rho_g * q_g, up


class HUScheme(FluxScheme):
    name = "hu"
    labels = ("qT", "w0")

    def __init__(self, params: BlendParams = BlendParams()):
        self.params = params

    def fluxes(self, stencil: FaceStencil, cells: CellFields, gravity: float) -> FaceFluxes:
        total, q_wa, rho_face = hu_total_flux(stencil, cells, gravity, self.params)
        viscous, up_t = hu_viscous_flux(stencil, cells, q_wa[0] + q_wa[1])
        buoyancy, (up_w0, _) = hu_gravity_flux(stencil, cells, rho_face, gravity)
        return FaceFluxes(
            total=total,
            phase0=viscous + buoyancy,
            # omega_1 has the opposite sign of omega_0 wherever both counter-phase
            # mobilities are nonzero, so its direction adds no information
            choices={"qT": up_t, "w0": up_w0},
        )
