"""Case definitions: INI-style files, the bundled benchmark library and E_A.

A case file has the sections ``[case]``, ``[mesh]``, ``[matrix]``, ``[fluid]``,
``[initial]``, ``[time]`` and one ``[fracture <name>]`` section per fracture.
See ``src/mdflow/cases/*.ini`` for complete examples and the README for the
key reference.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from . import meshing
from .fluid import FluidPair, Phase
from .fractures import Fracture, build_fractured_domain
from .grid import GeometryError
from .solver import DofLayout
from .topology import MixedDimDomain, TopologyError, validate

logger = logging.getLogger(__name__)

BUILTIN_CASES = ("case1a", "case1b", "case1c", "case1c-hc", "case2-standin")


class CaseError(ValueError):
    """Raised for unreadable or inconsistent case definitions."""


@dataclass
class MeshSpec:
    kind: str = "structured"
    nx: int = 20
    ny: int = 20
    nx_upper: Optional[int] = None
    split: float = 0.5
    y_left: float = 0.5
    y_right: float = 0.5
    path: Optional[str] = None
    extent: Tuple[float, float] = (1.0, 1.0)


@dataclass
class InitialSpec:
    """Heavy phase above ``interface`` (light below), hydrostatic pressure.

    ``smooth_width > 0`` replaces the sharp front by a ``tanh`` profile of that
    width. ``tilt`` is the slope of the interface elevation in ``x``, measured
    from the middle of the domain.
    """

    interface: float = 0.5
    heavy_above: bool = True
    p_top: float = 0.0
    smooth_width: float = 0.0
    tilt: float = 0.0


@dataclass
class CaseConfig:
    name: str
    mesh: MeshSpec
    matrix_permeability: float
    matrix_porosity: float
    fluid: FluidPair
    gravity: float
    fractures: List[Fracture]
    initial: InitialSpec
    t_end: float
    dt_max: float
    tol: float = 1e-6
    max_iter: int = 15
    scheme: str = "hu"
    description: str = ""
    source: str = ""

    def __post_init__(self):
        positives = {
            "matrix permeability": self.matrix_permeability,
            "t_end": self.t_end,
            "dt_max": self.dt_max,
            "tol": self.tol,
        }
        for label, value in positives.items():
            if not value > 0:
                raise CaseError(f"{self.name}: {label} must be positive")
        if not 0 < self.matrix_porosity <= 1:
            raise CaseError(f"{self.name}: matrix porosity must lie in (0, 1]")
        if self.gravity < 0:
            raise CaseError(f"{self.name}: gravity must be non-negative")

    @property
    def height(self) -> float:
        return self.mesh.extent[1]


def compute_EA(config: CaseConfig) -> float:
    """Gravity-to-viscous ratio ``phi rho_ref^2 g L K / mu^2``.

    ``rho_ref`` is the density difference, ``L`` the vertical extent, and
    ``phi, K, mu`` the matrix porosity, matrix permeability and heavy-phase viscosity.
    """
    heavy, light = config.fluid.phases
    rho_ref = abs(heavy.ref_density - light.ref_density)
    return (
        config.matrix_porosity * rho_ref**2 * config.gravity * config.height
        * config.matrix_permeability / heavy.viscosity**2
    )


def _floats(text: str, count: int, where: str) -> List[float]:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise CaseError(f"{where}: cannot parse '{text}' as numbers") from None
    if len(values) != count:
        raise CaseError(f"{where}: expected {count} numbers, got {len(values)}")
    return values


def parse_case(text: str, source: str = "<string>") -> CaseConfig:
    """Parse the INI text of a case definition."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise CaseError(f"{source}: {exc}") from None

    def get(section, key, conv=float, default=None):
        if not cp.has_section(section) or not cp.has_option(section, key):
            if default is None:
                raise CaseError(f"{source}: missing [{section}] {key}")
            return default
        raw = cp.get(section, key)
        try:
            if conv is bool:
                return cp.getboolean(section, key)
            return conv(raw)
        except ValueError:
            raise CaseError(f"{source}: [{section}] {key} = '{raw}' is not a valid {conv.__name__}") from None

    mesh = MeshSpec(
        kind=get("mesh", "kind", str, "structured"),
        nx=get("mesh", "nx", int, 20),
        ny=get("mesh", "ny", int, 20),
        nx_upper=get("mesh", "nx_upper", int, 0) or None,
        split=get("mesh", "split", float, 0.5),
        y_left=get("mesh", "y_left", float, 0.5),
        y_right=get("mesh", "y_right", float, 0.5),
        path=get("mesh", "path", str, "") or None,
        extent=tuple(_floats(get("mesh", "extent", str, "1 1"), 2, f"{source}: [mesh] extent")),
    )
    if mesh.kind not in ("structured", "stacked", "mapped_triangles", "file"):
        raise CaseError(f"{source}: unknown mesh kind '{mesh.kind}'")

    fluid = FluidPair(
        Phase(get("fluid", "rho0"), get("fluid", "mu0"), get("fluid", "c0", float, 0.0), get("fluid", "p_ref", float, 0.0)),
        Phase(get("fluid", "rho1"), get("fluid", "mu1"), get("fluid", "c1", float, 0.0), get("fluid", "p_ref", float, 0.0)),
    )

    fractures = []
    for section in cp.sections():
        if not section.startswith("fracture"):
            continue
        where = f"{source}: [{section}]"
        try:
            fractures.append(
                Fracture(
                    start=_floats(get(section, "start", str), 2, where),
                    end=_floats(get(section, "end", str), 2, where),
                    permeability=get(section, "permeability"),
                    normal_permeability=get(section, "normal_permeability"),
                    aperture=get(section, "aperture"),
                    porosity=get(section, "porosity", float, 0.25),
                    num_cells=get(section, "num_cells", int, 0) or None,
                    name=section.split(None, 1)[1] if " " in section else section,
                )
            )
        except GeometryError as exc:
            raise CaseError(f"{where}: {exc}") from None

    initial = InitialSpec(
        interface=get("initial", "interface", float, 0.5),
        heavy_above=get("initial", "heavy_above", bool, True),
        p_top=get("initial", "p_top", float, 0.0),
        smooth_width=get("initial", "smooth_width", float, 0.0),
        tilt=get("initial", "tilt", float, 0.0),
    )
    return CaseConfig(
        name=get("case", "name", str, Path(source).stem),
        description=get("case", "description", str, ""),
        mesh=mesh,
        matrix_permeability=get("matrix", "permeability"),
        matrix_porosity=get("matrix", "porosity"),
        fluid=fluid,
        gravity=get("fluid", "gravity", float, 1.0),
        fractures=fractures,
        initial=initial,
        t_end=get("time", "t_end"),
        dt_max=get("time", "dt_max"),
        tol=get("time", "tol", float, 1e-6),
        max_iter=get("time", "max_iter", int, 15),
        scheme=get("case", "scheme", str, "hu"),
        source=source,
    )


def read_case(name_or_path) -> CaseConfig:
    """Read a bundled case by name or a case file by path."""
    if str(name_or_path) in BUILTIN_CASES:
        text = resources.files("mdflow").joinpath("cases", f"{name_or_path}.ini").read_text()
        return parse_case(text, f"{name_or_path}.ini")
    path = Path(name_or_path)
    if not path.is_file():
        raise CaseError(f"no bundled case or file named '{name_or_path}' (bundled: {', '.join(BUILTIN_CASES)})")
    return parse_case(path.read_text(), str(path))


def build_mesh(config: CaseConfig):
    m = config.mesh
    if m.kind == "structured":
        return meshing.structured_quad_mesh(m.nx, m.ny, m.extent)
    if m.kind == "stacked":
        return meshing.stacked_quad_mesh(m.nx, m.nx_upper or m.nx, m.ny, m.split, m.extent)
    if m.kind == "mapped_triangles":
        return meshing.mapped_triangle_mesh(m.nx, m.ny, m.y_left, m.y_right, m.nx_upper, m.extent)
    path = Path(m.path)
    if not path.is_absolute() and config.source:
        path = Path(config.source).parent / path
    return meshing.read_simplex_mesh(path)


def build_domain(config: CaseConfig) -> MixedDimDomain:
    nodes, cells = build_mesh(config)
    domain = build_fractured_domain(
        nodes, cells, config.fractures, config.matrix_permeability, config.matrix_porosity
    )
    problems = validate(domain)
    if problems:
        raise TopologyError(f"{config.name}: " + "; ".join(problems))
    return domain


def _log_cosh(u: np.ndarray) -> np.ndarray:
    a = np.abs(u)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


class HeavyFraction:
    """Initial heavy-phase saturation ``frac(x, z)`` and its vertical integral."""

    def __init__(self, config: CaseConfig):
        self.init = config.initial
        self.sign = 1.0 if self.init.heavy_above else -1.0
        self.x_mid = 0.5 * config.mesh.extent[0]

    def interface(self, x) -> np.ndarray:
        return self.init.interface + self.init.tilt * (np.asarray(x, dtype=float) - self.x_mid)

    def __call__(self, x, z) -> np.ndarray:
        u = self.sign * (np.asarray(z, dtype=float) - self.interface(x))
        w = self.init.smooth_width
        if w > 0:
            return 0.5 * (1.0 + np.tanh(u / w))
        return (u > 0).astype(float)

    def integral(self, x, z) -> np.ndarray:
        """``int_0^z frac(x, t) dt`` up to a constant independent of ``z``."""
        z = np.asarray(z, dtype=float)
        d = z - self.interface(x)
        w = self.init.smooth_width
        if w > 0:
            return 0.5 * (z + self.sign * w * _log_cosh(d / w))
        return np.maximum(d, 0.0) if self.sign > 0 else np.minimum(z, z - d)


def hydrostatic_pressure(x, z, config: CaseConfig, frac: Optional[HeavyFraction] = None) -> np.ndarray:
    """Pressure of the initial column above ``(x, z)`` with ``p = p_top`` at the top.

    Exact for incompressible phases; uses the reference densities otherwise.
    """
    frac = frac or HeavyFraction(config)
    heavy, light = config.fluid.phases
    top = config.height
    z = np.asarray(z, dtype=float)
    drho = heavy.ref_density - light.ref_density
    weight = light.ref_density * (top - z) + drho * (frac.integral(x, top) - frac.integral(x, z))
    return config.initial.p_top + config.gravity * weight


def heavy_fraction(config: CaseConfig) -> HeavyFraction:
    return HeavyFraction(config)


def initial_state(domain: MixedDimDomain, config: CaseConfig, layout: Optional[DofLayout] = None):
    """Unknown vector of the initial condition; mortar fluxes start at zero."""
    layout = layout or DofLayout.for_domain(domain)
    x = np.zeros(layout.size)
    frac = HeavyFraction(config)
    for sd in domain.subdomains:
        xc = sd.grid.cell_centers[:, 0]
        z = sd.grid.cell_elevation
        x[layout[("p", sd.id)]] = hydrostatic_pressure(xc, z, config, frac)
        x[layout[("s0", sd.id)]] = frac(xc, z)
    return x, layout


def load_case(name_or_path):
    """Return ``(domain, config, x0, layout)`` for a bundled case name or a file path."""
    config = read_case(name_or_path)
    try:
        domain = build_domain(config)
    except (GeometryError, TopologyError) as exc:
        raise CaseError(f"{config.source}: {exc}") from exc
    x0, layout = initial_state(domain, config)
    return domain, config, x0, layout
