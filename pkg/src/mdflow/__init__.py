"""Two-phase gravity-driven flow in fractured porous media.

Mixed-dimensional finite volumes with mortar coupling, comparing
phase-potential upstreaming (PPU) with hybrid upwinding (HU).
"""

from .fluid import FluidPair, Phase, PowerLawRelPerm
from .hu import HUScheme
from .ppu import PPUScheme
from .solver import Assembler, DofLayout, TimeController, advance, newton_solve
from .topology import MixedDimDomain, MortarInterface, Subdomain, TopologyError, build_projections, validate

__version__ = "0.1.0"

SCHEMES = {"ppu": PPUScheme, "hu": HUScheme}


def make_scheme(name: str):
    try:
        return SCHEMES[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown scheme '{name}' (expected one of {sorted(SCHEMES)})") from None
