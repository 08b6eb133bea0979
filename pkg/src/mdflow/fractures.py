"""Mixed-dimensional domains for 2D matrices cut by straight fractures.

The matrix mesh must resolve every fracture: the fracture segment has to be a
union of mesh edges. The matrix grid is cut along those edges, each fracture
gets a 1D grid (matching the mesh nodes on it, or a uniform grid of a chosen
size for non-matching coupling), fracture intersections become 0D subdomains,
and mortars are added on both sides of every fracture and between each
fracture and each of its intersections. The mortar grid on each side of a
fracture is the common refinement of the matrix faces and the fracture cells.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .grid import GeometryError, edge_key, line_grid, point_grid, polygon_grid
from .topology import (
    MixedDimDomain,
    MortarInterface,
    Subdomain,
    build_projections,
    connect,
    make_subdomain,
)

logger = logging.getLogger(__name__)


@dataclass
class Fracture:
    """A straight fracture segment and its rock data.

    Args:
        start, end: End points.
        permeability: Tangential permeability.
        normal_permeability: Permeability across the fracture (mortar law).
        aperture: Fracture aperture.
        num_cells: Cells of the fracture grid. ``None`` uses the matrix mesh
            nodes on the fracture (matching grids).
    """

    start: Sequence[float]
    end: Sequence[float]
    permeability: float = 1.0
    normal_permeability: float = 1.0
    aperture: float = 1e-2
    porosity: float = 0.25
    num_cells: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        self.end = np.asarray(self.end, dtype=float)
        if np.linalg.norm(self.end - self.start) <= 0:
            raise GeometryError("fracture end points coincide")
        for label in ("permeability", "normal_permeability", "aperture"):
            if not getattr(self, label) > 0:
                raise GeometryError(f"fracture {label} must be positive")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    @property
    def tangent(self) -> np.ndarray:
        return (self.end - self.start) / self.length

    @property
    def normal(self) -> np.ndarray:
        t = self.tangent
        return np.array([-t[1], t[0]])


def _segment_intersection(f: Fracture, g: Fracture, tol: float):
    """Arc-length parameters ``(s_f, s_g)`` of the crossing point, or None."""
    d1, d2 = f.end - f.start, g.end - g.start
    den = d1[0] * d2[1] - d1[1] * d2[0]
    rel = g.start - f.start
    if abs(den) <= 1e-14 * f.length * g.length:
        if abs(rel[0] * d1[1] - rel[1] * d1[0]) <= tol * f.length:
            # collinear: only touching end points are supported
            for a in (f.start, f.end):
                for b in (g.start, g.end):
                    if np.linalg.norm(a - b) <= tol:
                        return float(np.dot(a - f.start, f.tangent)), float(np.dot(b - g.start, g.tangent))
            s = np.dot(np.vstack([g.start, g.end]) - f.start, f.tangent)
            if max(s) > tol and min(s) < f.length - tol:
                raise GeometryError("overlapping collinear fractures are not supported")
        return None
    u = (rel[0] * d2[1] - rel[1] * d2[0]) / den
    v = (rel[0] * d1[1] - rel[1] * d1[0]) / den
    eu, ev = tol / f.length, tol / g.length
    if -eu <= u <= 1 + eu and -ev <= v <= 1 + ev:
        return float(np.clip(u, 0, 1) * f.length), float(np.clip(v, 0, 1) * g.length)
    return None


def build_fractured_domain(
    nodes: np.ndarray,
    cells: Sequence[Sequence[int]],
    fractures: Sequence[Fracture],
    matrix_permeability=1.0,
    matrix_porosity=0.25,
    tol: float = 1e-9,
) -> MixedDimDomain:
    """Assemble the mixed-dimensional domain of a fractured 2D mesh.

    Subdomain ids: 0 matrix, ``1..F`` fractures, then intersections.

    Raises:
        GeometryError: a fracture is not resolved by the mesh edges.
    """
    nodes = np.asarray(nodes, dtype=float)
    scale = float(np.ptp(nodes, axis=0).max())
    tol = tol * max(scale, 1.0)

    edges = set()
    for cn in cells:
        cn = [int(i) for i in cn]
        for a, b in zip(cn, cn[1:] + cn[:1]):
            edges.add(edge_key(a, b))

    frac_edges: List[list] = []
    for i, f in enumerate(fractures):
        rel = nodes - f.start
        s = rel @ f.tangent
        dist = np.abs(rel @ f.normal)
        on = (dist <= tol) & (s >= -tol) & (s <= f.length + tol)
        frac_edges.append([e for e in edges if on[e[0]] and on[e[1]]])

    split = set(e for fe in frac_edges for e in fe)
    matrix, split_faces = polygon_grid(nodes, cells, split, matrix_permeability, matrix_porosity)
    subdomains: List[Subdomain] = [make_subdomain(0, matrix, 1.0, "matrix")]

    # faces of the matrix on each side of each fracture
    side_faces = []
    for i, f in enumerate(fractures):
        faces = np.array(sorted(k for e in frac_edges[i] for k in split_faces.get(e, [])), dtype=int)
        nrm = np.zeros(3)
        nrm[:2] = f.normal
        sides = {}
        for sign in (1.0, -1.0):
            chosen = faces[matrix.face_normals[faces] @ (sign * nrm) > 0] if faces.size else faces
            covered = matrix.face_areas[chosen].sum()
            if abs(covered - f.length) > 1e-8 * f.length:
                raise GeometryError(
                    f"fracture {i}: mesh edges cover {covered:.6g} of length {f.length:.6g} "
                    f"on one side; the mesh does not resolve the fracture"
                )
            sides[sign] = chosen
        side_faces.append(sides)

    # intersections, merged when several fractures meet at one point
    points: List[np.ndarray] = []
    members: List[Dict[int, float]] = []
    for i in range(len(fractures)):
        for j in range(i + 1, len(fractures)):
            hit = _segment_intersection(fractures[i], fractures[j], tol)
            if hit is None:
                continue
            pt = fractures[i].start + hit[0] * fractures[i].tangent
            for q, other in enumerate(points):
                if np.linalg.norm(other - pt) <= tol:
                    break
            else:
                q = len(points)
                points.append(pt)
                members.append({})
            members[q][i] = hit[0]
            members[q][j] = hit[1]

    # fracture grids
    frac_grids, frac_node_of = [], []
    for i, f in enumerate(fractures):
        cuts = sorted({s for q in range(len(points)) for k, s in members[q].items() if k == i})
        if f.num_cells is None:
            ends = np.array([n for e in frac_edges[i] for n in e])
            params = np.sort((nodes[ends] - f.start) @ f.tangent)
            params = params[np.concatenate([[True], np.diff(params) > tol])]
            for c in cuts:
                if np.min(np.abs(params - c)) > 10 * tol:
                    raise GeometryError(f"fracture {i}: intersection at s={c:.6g} is not a mesh node")
        else:
            breaks = np.unique(np.concatenate([[0.0, f.length], cuts]))
            params = [breaks[:1]]
            for a, b in zip(breaks[:-1], breaks[1:]):
                count = max(1, int(round(f.num_cells * (b - a) / f.length)))
                params.append(np.linspace(a, b, count + 1)[1:])
            params = np.concatenate(params)
        params = np.asarray(params, dtype=float)
        node_of = {}
        for q in range(len(points)):
            if i in members[q]:
                node_of[q] = int(np.argmin(np.abs(params - members[q][i])))
                params[node_of[q]] = members[q][i]
        interior = [k for k in node_of.values() if 0 < k < len(params) - 1]
        pts = f.start + params[:, None] * f.tangent
        grid, node_faces = line_grid(pts, 2, interior, f.permeability, f.porosity)
        frac_grids.append((grid, node_faces, params))
        frac_node_of.append(node_of)
        subdomains.append(make_subdomain(i + 1, grid, f.aperture, f.name or f"fracture {i}"))

    first_point = len(fractures) + 1
    for q, pt in enumerate(points):
        involved = sorted(members[q])
        aperture = max(fractures[k].aperture for k in involved)
        porosity = float(np.mean([fractures[k].porosity for k in involved]))
        grid = point_grid(pt, 2, porosity)
        subdomains.append(make_subdomain(first_point + q, grid, aperture, f"intersection {q}"))

    sd_map = {sd.id: sd for sd in subdomains}
    mortars: List[MortarInterface] = []

    def add(mortar, high_grid, low_grid):
        mortar = build_projections(mortar, high_grid, low_grid)
        mortars.append(mortar)
        connect(sd_map, mortar)

    for i, f in enumerate(fractures):
        grid, _, params = frac_grids[i]
        tangent = np.zeros(3)
        tangent[:2] = f.tangent
        origin = np.zeros(3)
        origin[:2] = f.start
        for sign in (1.0, -1.0):
            # common refinement of the side faces and the fracture cells, so each
            # mortar cell touches exactly one cell on either side
            faces = side_faces[i][sign]
            ends = np.concatenate([matrix.face_nodes[k] for k in faces]) if faces.size else np.zeros(0, int)
            breaks = np.sort(np.concatenate([params, (matrix.nodes[ends, :2] - f.start) @ f.tangent]))
            breaks = breaks[np.concatenate([[True], np.diff(breaks) > tol])]
            breaks[0], breaks[-1] = params[0], params[-1]
            intervals = [(a, b) for a, b in zip(breaks[:-1], breaks[1:])]
            normal = np.zeros(3)
            normal[:2] = sign * f.normal
            mortar = MortarInterface(
                id=len(mortars),
                dim=1,
                higher=0,
                lower=i + 1,
                normal_permeability=f.normal_permeability,
                lower_aperture=f.aperture,
                ambient_dim=2,
                origin=origin,
                axes=tangent[None, :],
                cell_shapes=intervals,
                cell_normals=np.tile(normal, (len(intervals), 1)),
                high_faces=side_faces[i][sign],
                name=f"matrix-fracture {i} ({'+' if sign > 0 else '-'})",
            )
            add(mortar, matrix, grid)

    for q, pt in enumerate(points):
        involved = sorted(members[q])
        k_perp = 1.0 / sum(1.0 / fractures[k].normal_permeability for k in involved)
        low = sd_map[first_point + q]
        for k in involved:
            grid, node_faces, _ = frac_grids[k]
            faces = np.array(node_faces[frac_node_of[k][q]], dtype=int)
            mortar = MortarInterface(
                id=len(mortars),
                dim=0,
                higher=k + 1,
                lower=low.id,
                normal_permeability=k_perp,
                lower_aperture=low.aperture,
                ambient_dim=2,
                origin=low.grid.cell_centers[0],
                axes=np.zeros((0, 3)),
                cell_shapes=[low.grid.cell_centers[0].copy() for _ in faces],
                cell_normals=grid.face_normals[faces],
                high_faces=faces,
                name=f"fracture {k}-intersection {q}",
            )
            add(mortar, grid, low.grid)

    logger.info(
        "fractured domain: %d matrix cells, %d fractures, %d intersections, %d mortars",
        matrix.num_cells, len(fractures), len(points), len(mortars),
    )
    return MixedDimDomain(ambient_dim=2, subdomains=subdomains, mortars=mortars)
