"""Constitutive laws: densities, relative permeabilities, mobilities, accumulation.

Every function works on plain floats/arrays and on :class:`~mdflow.ad.AdArray`.
Phase 0 is the heavy phase, phase 1 the light one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ad


@dataclass(frozen=True)
class Phase:
    ref_density: float
    viscosity: float
    compressibility: float = 0.0
    ref_pressure: float = 0.0

    def __post_init__(self):
        if not self.ref_density > 0:
            raise ValueError("reference density must be positive")
        if not self.viscosity > 0:
            raise ValueError("viscosity must be positive")
        if self.compressibility < 0:
            raise ValueError("compressibility must be non-negative")


@dataclass(frozen=True)
class PowerLawRelPerm:
    """``k_r(S) = S**exponent``; the default exponent 2 is the quadratic law."""

    exponent: float = 2.0

    def __post_init__(self):
        if self.exponent < 2:
            # curvature of S**n is unbounded on [0, 1] for n < 2
            raise ValueError("exponent must be >= 2 for a bounded curvature")

    def __call__(self, s):
        return s**self.exponent

    @property
    def at_one(self) -> float:
        return 1.0

    @property
    def max_curvature(self) -> float:
        """``max_S |k_r''(S)|`` on [0, 1], attained at S = 1."""
        n = self.exponent
        return n * (n - 1.0)


QUADRATIC = PowerLawRelPerm(2.0)


@dataclass(frozen=True)
class FluidPair:
    heavy: Phase
    light: Phase
    relperm: PowerLawRelPerm = field(default=QUADRATIC)

    def __post_init__(self):
        if self.heavy.ref_density < self.light.ref_density:
            raise ValueError("phase 0 must be the heavy phase")

    @property
    def phases(self):
        return (self.heavy, self.light)


def density(phase: Phase, p):
    """``rho = rho_ref * exp(c * (p - p_ref))``."""
    if phase.compressibility == 0.0:
        if ad.is_ad(p):
            return p * 0.0 + phase.ref_density
        return np.full_like(np.asarray(p, dtype=float), phase.ref_density)
    return phase.ref_density * ad.exp(phase.compressibility * (p - phase.ref_pressure))


def mobility(s, viscosity: float, relperm: PowerLawRelPerm = QUADRATIC):
    """Phase mobility ``k_r(S) / mu``; ``S`` must lie in [0, 1]."""
    sv = ad.value(s)
    if np.any(sv < 0) or np.any(sv > 1):
        raise ValueError("saturation outside [0, 1]; clip before evaluating mobilities")
    return relperm(s) / viscosity


def phase_potential(p, rho, z, gravity: float):
    return p + rho * gravity * z


def accumulation(porosity, rho0, rho1, s0):
    """Mass per unit volume of both phases: ``(phi rho0 S0, phi rho1 (1 - S0))``."""
    return porosity * rho0 * s0, porosity * rho1 * (1.0 - s0)
