"""Single-step spatial convergence study.

Every level takes one implicit Euler step from smooth initial data. The
cell-wise constant solution is compared in L2 with the finest-grid reference,
averaged onto the level's cells by exact overlap. Two mesh families are run:
``conforming`` (the matrix and fracture grids match across the fracture) and
``nonconforming`` (the two sides of the fracture and the fracture itself use
different resolutions, coupled through non-matching mortar projections).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sps
import shapely
from shapely import STRtree

from . import make_scheme
from .cases import CaseConfig, build_domain, initial_state, read_case
from .grid import SubdomainGrid
from .solver import Assembler, DofLayout, newton_solve
from .topology import MixedDimDomain

logger = logging.getLogger(__name__)

FAMILIES = ("conforming", "nonconforming")


class ConvergenceError(RuntimeError):
    """A level of the study did not converge in its single step."""


@dataclass
class LevelResult:
    family: str
    n: int
    h: float
    errors: Dict[str, float]
    orders: Dict[str, float] = field(default_factory=dict)


@dataclass
class Solution:
    domain: MixedDimDomain
    layout: DofLayout
    x: np.ndarray
    x0: np.ndarray
    gauge_free: bool = False

    def field(self, name: str, sid: int) -> np.ndarray:
        return self.x[self.layout[(name, sid)]]


def overlap_matrix(coarse: SubdomainGrid, fine: SubdomainGrid) -> sps.csr_matrix:
    """``A[i, j]`` = measure of coarse cell i intersected with fine cell j.

    Supports 2D polygon grids and 1D grids on a common straight line.
    """
    if coarse.dim != fine.dim:
        raise ValueError("grids of different dimension")
    rows, cols, vals = [], [], []
    if coarse.dim == 2:
        polys = lambda g: [shapely.Polygon(g.nodes[cn][:, :2]) for cn in g.cell_nodes]  # noqa: E731
        fine_polys = polys(fine)
        tree = STRtree(fine_polys)
        for i, pc in enumerate(polys(coarse)):
            for j in tree.query(pc, predicate="intersects"):
                a = pc.intersection(fine_polys[j]).area
                if a > 1e-14 * pc.area:
                    rows.append(i)
                    cols.append(j)
                    vals.append(a)
    elif coarse.dim == 1:
        origin = coarse.nodes[0]
        ends = coarse.nodes[-1] if len(coarse.nodes) > 1 else origin
        tangent = (ends - origin) / np.linalg.norm(ends - origin)

        def intervals(g):
            s = [np.sort((g.nodes[cn] - origin) @ tangent) for cn in g.cell_nodes]
            return np.array([(a[0], a[-1]) for a in s])

        ci, fi = intervals(coarse), intervals(fine)
        for i, (a, b) in enumerate(ci):
            length = np.minimum(b, fi[:, 1]) - np.maximum(a, fi[:, 0])
            for j in np.flatnonzero(length > 1e-14 * (b - a)):
                rows.append(i)
                cols.append(j)
                vals.append(length[j])
    else:
        raise ValueError(f"no overlap rule for dimension {coarse.dim}")
    return sps.csr_matrix((vals, (rows, cols)), shape=(coarse.num_cells, fine.num_cells))


def project_to(coarse: SubdomainGrid, fine: SubdomainGrid, values: np.ndarray) -> np.ndarray:
    """Average fine cell values over each coarse cell."""
    a = overlap_matrix(coarse, fine)
    return (a @ values) / coarse.cell_volumes


def l2_error(grid: SubdomainGrid, u: np.ndarray, ref: np.ndarray) -> float:
    return float(np.sqrt(np.sum(grid.cell_volumes * (u - ref) ** 2)))


def level_config(
    base: CaseConfig,
    n: int,
    family: str,
    smooth_width: float,
    tilt: float = 0.0,
    interface: Optional[float] = None,
) -> CaseConfig:
    """Copy of ``base`` on an ``n x n`` mesh of the requested family.

    The non-conforming family uses ``round(1.5 n)`` columns above the fracture
    and ``round(1.25 n)`` fracture cells, so none of the three grids match.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown mesh family '{family}'")
    cfg = copy.deepcopy(base)
    cfg.initial.smooth_width = smooth_width
    cfg.initial.tilt = tilt
    if interface is not None:
        cfg.initial.interface = interface
    mesh = cfg.mesh
    mesh.nx = mesh.ny = n
    nonconforming = family == "nonconforming"
    if mesh.kind in ("structured", "stacked"):
        horizontal = [f for f in cfg.fractures if abs(f.start[1] - f.end[1]) < 1e-12]
        if len(horizontal) != len(cfg.fractures) or len({f.start[1] for f in horizontal}) > 1:
            raise ValueError("quad-mesh convergence study needs fractures on one horizontal line")
        mesh.kind = "stacked"
        mesh.split = float(horizontal[0].start[1]) if horizontal else 0.5 * mesh.extent[1]
        mesh.nx_upper = int(round(1.5 * n)) if nonconforming else n
    elif mesh.kind == "mapped_triangles":
        mesh.nx_upper = int(round(1.5 * n)) if nonconforming else n
    else:
        raise ValueError(f"mesh kind '{mesh.kind}' cannot be refined")
    for f in cfg.fractures:
        f.num_cells = int(round(1.25 * n)) if nonconforming else None
    return cfg


def single_step(
    config: CaseConfig,
    scheme: str,
    dt: float,
    initial_from: Optional["Solution"] = None,
    tol: float = 1e-10,
    max_iter: int = 30,
) -> Solution:
    """One implicit Euler step of ``config``.

    With ``initial_from`` the initial saturation is that solution's initial
    saturation averaged over this grid's cells, so every level starts from the
    same data and the measured error is the error of the step alone.
    """
    domain = build_domain(config)
    x0, layout = initial_state(domain, config)
    if initial_from is not None:
        for sd in domain.subdomains:
            if sd.dim > 0:
                src = initial_from.domain.subdomain(sd.id)
                s0 = initial_from.x0[initial_from.layout[("s0", sd.id)]]
                x0[layout[("s0", sd.id)]] = project_to(sd.grid, src.grid, s0)
    asm = Assembler(domain, config.fluid, make_scheme(scheme), config.gravity, layout)
    result = newton_solve(asm, x0, x0, dt, tol, max_iter)
    if not result.converged:
        raise ConvergenceError(f"{config.name}: single step failed ({result.reason})")
    logger.info("n=%d: %d Newton iterations", config.mesh.nx, result.iterations)
    return Solution(domain, layout, result.x, x0, asm.anchor is not None)


def compare(sol: Solution, ref: Solution) -> Dict[str, float]:
    """L2 errors of ``p`` and ``s0``.

    ``p`` and ``s0`` are the norms over the whole mixed-dimensional domain, with
    lower-dimensional cells weighted by their physical volume (``eps^a |c|``).
    ``p_2d``, ``s0_1d`` ... are the plain per-dimension norms.
    When the pressure level is only fixed by an anchor (incompressible phases),
    pressure is compared after removing the mean difference over the matrix.
    """
    out: Dict[str, float] = {}
    diffs: Dict[tuple, np.ndarray] = {}
    for sd in sol.domain.subdomains:
        if sd.dim == 0:
            continue
        ref_sd = ref.domain.subdomain(sd.id)
        a = overlap_matrix(sd.grid, ref_sd.grid)
        for name in ("p", "s0"):
            proj = (a @ ref.field(name, sd.id)) / sd.grid.cell_volumes
            diffs[(name, sd.id)] = sol.field(name, sd.id) - proj
    if sol.gauge_free:
        top = sol.domain.subdomains[0]
        shift = np.average(diffs[("p", top.id)], weights=top.grid.cell_volumes)
        for key in diffs:
            if key[0] == "p":
                diffs[key] = diffs[key] - shift
    for (name, sid), d in diffs.items():
        sd = sol.domain.subdomain(sid)
        key = f"{name}_{sd.dim}d"
        out[key] = float(np.hypot(out.get(key, 0.0), np.sqrt(np.sum(sd.grid.cell_volumes * d**2))))
        weighted = np.sqrt(np.sum(sd.codim_extension * sd.grid.cell_volumes * d**2))
        out[name] = float(np.hypot(out.get(name, 0.0), weighted))
    return out


def observed_orders(results: Sequence[LevelResult]) -> None:
    """Fill ``orders`` from consecutive levels in place."""
    for prev, cur in zip(results[:-1], results[1:]):
        ratio = np.log(prev.h / cur.h)
        cur.orders = {
            k: float(np.log(prev.errors[k] / cur.errors[k]) / ratio)
            for k in cur.errors
            if prev.errors[k] > 0 and cur.errors[k] > 0
        }


def convergence_study(
    case="case1a",
    scheme: str = "hu",
    levels: Sequence[int] = (8, 16, 32),
    reference: int = 128,
    families: Sequence[str] = FAMILIES,
    dt: Optional[float] = None,
    smooth_width: float = 0.1,
    tilt: float = 0.25,
    interface: Optional[float] = 0.75,
) -> Dict[str, List[LevelResult]]:
    """Run the study.

    Args:
        case: Bundled case name, path, or a :class:`CaseConfig`.
        levels: Cells per side of the compared grids.
        reference: Cells per side of the conforming reference grid.
        dt: Step length; defaults to ``dt_max / 20`` of the case, short enough
            for Newton to converge on the reference grid.
        smooth_width: Width of the ``tanh`` initial saturation profile.
        tilt: Slope of the initial interface, so the solution varies in both directions.
        interface: Height of the initial interface. The default keeps the
            saturation front away from the fracture: the exchange flux uses
            cell-center values, and an O(h) flux error on a front lying on
            the fracture degrades the saturation error to O(sqrt(h)).
            ``None`` keeps the case's own interface.

    Returns:
        ``{family: [LevelResult, ...]}`` with observed orders filled in.
    """
    base = case if isinstance(case, CaseConfig) else read_case(case)
    dt = base.dt_max / 20 if dt is None else dt
    ref = single_step(level_config(base, reference, "conforming", smooth_width, tilt, interface), scheme, dt)
    table: Dict[str, List[LevelResult]] = {}
    for family in families:
        rows = []
        for n in levels:
            sol = single_step(level_config(base, n, family, smooth_width, tilt, interface), scheme, dt, initial_from=ref)
            rows.append(LevelResult(family, n, base.mesh.extent[0] / n, compare(sol, ref)))
        observed_orders(rows)
        table[family] = rows
    return table


def format_table(table: Dict[str, List[LevelResult]]) -> str:
    keys = sorted({k for rows in table.values() for r in rows for k in r.errors})
    lines = []
    for family, rows in table.items():
        lines.append(f"{family}")
        lines.append("  " + f"{'n':>5} {'h':>9}" + "".join(f" {k:>11} {'order':>6}" for k in keys))
        for r in rows:
            cells = "".join(
                f" {r.errors.get(k, float('nan')):11.3e} {r.orders.get(k, float('nan')):6.2f}" for k in keys
            )
            lines.append(f"  {r.n:5d} {r.h:9.4f}{cells}")
    return "\n".join(lines)
