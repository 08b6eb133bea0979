"""Mixed-dimensional domain: subdomains, mortar interfaces and projection maps.

Every mortar couples exactly one subdomain of dimension ``k + 1`` (the higher
side, through some of its boundary faces) to one subdomain of dimension ``k``
(the lower side, through its cells). Four sparse maps are stored per mortar, all
with one row per mortar cell:

``high_avg``  ``l_mp / |c_p|``   higher-side faces -> mortar, intensive (averaging)
``high_sum``  ``l_mp / |f_m|``   higher-side faces -> mortar, extensive (summing)
``low_avg``   ``l_kp / |c_p|``   lower-side cells  -> mortar, intensive
``low_sum``   ``l_kp / |c_k|``   lower-side cells  -> mortar, extensive

where ``l`` is the overlap measure. Transposes give the reverse directions:
``high_avg.T`` distributes an extensive mortar quantity onto faces conservatively
and ``high_sum.T`` averages it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sps

from .grid import SubdomainGrid, face_to_cell_trace, point_grid


class TopologyError(ValueError):
    """Raised for inconsistent mixed-dimensional geometry."""


ZERO_OVERLAP = 1e-10


@dataclass(eq=False)
class Subdomain:
    id: int
    dim: int
    grid: SubdomainGrid
    aperture: float = 1.0
    codim_extension: float = 1.0
    higher_mortars: set = field(default_factory=set)
    lower_mortars: set = field(default_factory=set)
    name: str = ""


@dataclass(eq=False)
class MortarInterface:
    """Interface grid between a subdomain and a codimension-one neighbour.

    Cell geometry is given in intrinsic coordinates of the flat interface:
    ``origin + sum_k s_k * axes[k]``. For ``dim == 1`` ``cell_shapes`` holds
    intervals ``(s0, s1)``; for ``dim == 2`` polygon vertex arrays; for
    ``dim == 0`` the points themselves (3 coordinates). ``cell_normals`` is the
    outward normal of the higher side at each cell; it disambiguates the two
    sides of a point interface.
    """

    id: int
    dim: int
    higher: int
    lower: int
    normal_permeability: float
    lower_aperture: float
    ambient_dim: int
    origin: np.ndarray
    axes: np.ndarray
    cell_shapes: list
    cell_normals: np.ndarray
    high_faces: np.ndarray
    name: str = ""
    high_avg: Optional[sps.csr_matrix] = None
    high_sum: Optional[sps.csr_matrix] = None
    low_avg: Optional[sps.csr_matrix] = None
    low_sum: Optional[sps.csr_matrix] = None
    high_cell_avg: Optional[sps.csr_matrix] = None
    gravity_cosine: Optional[np.ndarray] = None

    @property
    def num_cells(self) -> int:
        return len(self.cell_shapes)

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.dim

    @property
    def codim_factor(self) -> float:
        """``eps_l ** (b_j - 1)`` with ``b_j`` the codimension of the mortar."""
        return self.lower_aperture ** (self.codim - 1)

    @property
    def cell_measures(self) -> np.ndarray:
        if self.dim == 0:
            return np.ones(self.num_cells)
        if self.dim == 1:
            s = np.asarray(self.cell_shapes, dtype=float)
            return np.abs(s[:, 1] - s[:, 0])
        from shapely.geometry import Polygon

        return np.array([Polygon(c).area for c in self.cell_shapes])

    @property
    def cell_centers(self) -> np.ndarray:
        if self.dim == 0:
            return np.asarray(self.cell_shapes, dtype=float)
        if self.dim == 1:
            s = np.asarray(self.cell_shapes, dtype=float).mean(axis=1)
            return self.origin + s[:, None] * self.axes[0]
        c = np.array([np.mean(np.asarray(v), axis=0) for v in self.cell_shapes])
        return self.origin + c @ self.axes

    @property
    def has_projections(self) -> bool:
        return self.high_avg is not None and self.low_avg is not None


@dataclass(eq=False)
class MixedDimDomain:
    ambient_dim: int
    subdomains: List[Subdomain]
    mortars: List[MortarInterface]

    def __post_init__(self):
        self._sd = {sd.id: sd for sd in self.subdomains}
        self._mortar = {m.id: m for m in self.mortars}

    def subdomain(self, sid: int) -> Subdomain:
        return self._sd[sid]

    def mortar(self, mid: int) -> MortarInterface:
        return self._mortar[mid]

    def max_dim(self) -> int:
        return max(sd.dim for sd in self.subdomains)


def make_subdomain(sid: int, grid: SubdomainGrid, aperture: float = 1.0, name: str = "") -> Subdomain:
    return Subdomain(
        id=sid,
        dim=grid.dim,
        grid=grid,
        aperture=aperture,
        codim_extension=aperture ** (grid.ambient_dim - grid.dim),
        name=name,
    )


def connect(domain_subdomains: Dict[int, Subdomain], mortar: MortarInterface) -> None:
    domain_subdomains[mortar.higher].lower_mortars.add(mortar.id)
    domain_subdomains[mortar.lower].higher_mortars.add(mortar.id)


# geometry of faces/cells in the mortar's intrinsic frame
def _intrinsic(mortar: MortarInterface, points: np.ndarray) -> np.ndarray:
    return (np.atleast_2d(points) - mortar.origin) @ mortar.axes.T


def _overlaps(mortar: MortarInterface, shapes: list, normals: Optional[np.ndarray], tol: float) -> sps.lil_matrix:
    """Overlap measures ``l[p, e]`` between mortar cells and entities ``e``."""
    out = sps.lil_matrix((mortar.num_cells, len(shapes)))
    if mortar.dim == 0:
        pts = np.asarray(mortar.cell_shapes, dtype=float)
        for e, pt in enumerate(shapes):
            close = np.linalg.norm(pts - pt, axis=1) <= tol
            if normals is not None:
                close &= mortar.cell_normals @ normals[e] > 0
            for p in np.flatnonzero(close):
                out[p, e] = 1.0
        return out
    if mortar.dim == 1:
        cells = np.sort(np.asarray(mortar.cell_shapes, dtype=float), axis=1)
        for e, (a, b) in enumerate(shapes):
            length = np.minimum(cells[:, 1], b) - np.maximum(cells[:, 0], a)
            for p in np.flatnonzero(length > 0):
                out[p, e] = length[p]
        return out
    from shapely.geometry import Polygon

    polys = [Polygon(c) for c in mortar.cell_shapes]
    for e, shape in enumerate(shapes):
        other = Polygon(shape)
        for p, poly in enumerate(polys):
            area = poly.intersection(other).area
            if area > 0:
                out[p, e] = area
    return out


def _entity_shapes(mortar: MortarInterface, grid: SubdomainGrid, node_lists: Sequence[np.ndarray]):
    shapes = []
    for nodes in node_lists:
        loc = _intrinsic(mortar, grid.nodes[nodes])
        if mortar.dim == 0:
            shapes.append(grid.nodes[nodes].mean(axis=0))
        elif mortar.dim == 1:
            shapes.append((loc[:, 0].min(), loc[:, 0].max()))
        else:
            shapes.append(loc)
    return shapes


def _normalised(overlap: sps.csr_matrix, row_measure: np.ndarray, col_measure: np.ndarray, tol_row: np.ndarray):
    overlap = overlap.tocsr()
    overlap.data[overlap.data < ZERO_OVERLAP * np.repeat(tol_row, np.diff(overlap.indptr))] = 0.0
    overlap.eliminate_zeros()
    avg = sps.diags(1.0 / row_measure) @ overlap
    summed = overlap @ sps.diags(1.0 / col_measure)
    return sps.csr_matrix(avg), sps.csr_matrix(summed)


def build_projections(
    mortar: MortarInterface, high_grid: SubdomainGrid, low_grid: SubdomainGrid
) -> MortarInterface:
    """Return a copy of ``mortar`` with all projection maps populated.

    Overlaps are computed exactly (interval / polygon intersection, or point
    coincidence for point interfaces) in the mortar's intrinsic coordinates.

    Raises:
        TopologyError: a mortar cell is not covered, or only partly covered, by the
            higher-side faces or by the lower-side cells.
    """
    measures = mortar.cell_measures
    tol = ZERO_OVERLAP * max(1.0, float(np.max(measures)) if measures.size else 1.0)
    faces = np.asarray(mortar.high_faces, dtype=int)

    face_shapes = _entity_shapes(mortar, high_grid, [high_grid.face_nodes[f] for f in faces])
    l_high = _overlaps(mortar, face_shapes, high_grid.face_normals[faces], tol)
    low_shapes = _entity_shapes(mortar, low_grid, low_grid.cell_nodes)
    l_low = _overlaps(mortar, low_shapes, None, tol)

    face_measure = high_grid.face_areas[faces]
    h_avg, h_sum = _normalised(l_high, measures, face_measure, measures)
    l_avg, l_sum = _normalised(l_low, measures, low_grid.cell_volumes, measures)

    for name, avg in (("higher-side faces", h_avg), ("lower-side cells", l_avg)):
        cover = np.asarray(avg.sum(axis=1)).ravel()
        empty = np.flatnonzero(cover <= 0)
        if empty.size:
            raise TopologyError(
                f"mortar {mortar.id}: cells {empty.tolist()} have zero overlap with the {name}"
            )
        partial = np.flatnonzero(np.abs(cover - 1.0) > 1e-9)
        if partial.size:
            raise TopologyError(
                f"mortar {mortar.id}: cells {partial.tolist()} are only partly covered by the {name}"
            )

    # expand face-indexed maps to all faces of the higher grid
    expand = sps.csr_matrix(
        (np.ones(faces.size), (np.arange(faces.size), faces)), shape=(faces.size, high_grid.num_faces)
    )
    high_avg = sps.csr_matrix(h_avg @ expand)
    high_sum = sps.csr_matrix(h_sum @ expand)
    z = high_grid.ambient_dim - 1
    return dataclasses.replace(
        mortar,
        high_avg=high_avg,
        high_sum=high_sum,
        low_avg=l_avg,
        low_sum=l_sum,
        high_cell_avg=sps.csr_matrix(high_avg @ face_to_cell_trace(high_grid)),
        gravity_cosine=high_avg @ high_grid.face_normals[:, z],
    )


def validate(domain: MixedDimDomain) -> List[str]:
    """Check the type invariants; returns one message per violation."""
    problems: List[str] = []
    d = domain.ambient_dim
    ids = [sd.id for sd in domain.subdomains]
    if len(set(ids)) != len(ids):
        problems.append("duplicate subdomain ids (subdomains must not share cells)")
    sds = {sd.id: sd for sd in domain.subdomains}
    for sd in domain.subdomains:
        if not 0 <= sd.dim <= d:
            problems.append(f"subdomain {sd.id}: dimension {sd.dim} outside [0, {d}]")
        if not sd.aperture > 0:
            problems.append(f"subdomain {sd.id}: aperture must be positive")
        elif abs(sd.codim_extension - sd.aperture ** (d - sd.dim)) > 1e-12 * max(1.0, sd.codim_extension):
            problems.append(f"subdomain {sd.id}: codimension extension != aperture**{d - sd.dim}")
        both = sd.higher_mortars & sd.lower_mortars
        if both:
            problems.append(f"subdomain {sd.id}: mortars {sorted(both)} listed on both sides")
        if sd.grid.dim != sd.dim:
            problems.append(f"subdomain {sd.id}: grid dimension {sd.grid.dim} != {sd.dim}")

    for m in domain.mortars:
        hi, lo = sds.get(m.higher), sds.get(m.lower)
        if hi is None or lo is None:
            problems.append(f"mortar {m.id}: unknown neighbour subdomain")
            continue
        if not (hi.dim == lo.dim + 1 == m.dim + 1):
            problems.append(
                f"mortar {m.id}: codimension gap between subdomain {hi.id} (dim {hi.dim}) "
                f"and subdomain {lo.id} (dim {lo.dim})"
            )
        if m.id not in hi.lower_mortars or m.id not in lo.higher_mortars:
            problems.append(f"mortar {m.id}: adjacency sets of its neighbours are inconsistent")
        if not m.normal_permeability > 0:
            problems.append(f"mortar {m.id}: normal permeability must be positive")
        if not m.has_projections:
            problems.append(f"mortar {m.id}: projections missing")
            continue
        for name, avg in (("high_avg", m.high_avg), ("low_avg", m.low_avg)):
            rows = np.asarray(avg.sum(axis=1)).ravel()
            if np.any(np.abs(rows - 1.0) > 1e-12):
                problems.append(f"mortar {m.id}: {name} violates partition of unity")
        for name, summed in (("high_sum", m.high_sum), ("low_sum", m.low_sum)):
            data = summed.tocsr().data
            if np.any(data < 0) or np.any(data > 1 + 1e-12):
                problems.append(f"mortar {m.id}: {name} entries outside [0, 1]")
    return problems
