"""Cell-centred finite-volume grids for the individual subdomains.

A :class:`SubdomainGrid` is a flat description of one subdomain of dimension 0-3
embedded in an ambient space of dimension 2 or 3. Points are always stored with
three coordinates; the elevation ``z`` is the last ambient coordinate (``y`` in 2D).

Faces are oriented: ``face_cells[f] = (m, n)`` and ``face_normals[f]`` points from
``m`` to ``n``. Boundary faces have ``n == -1`` and an outward normal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps

logger = logging.getLogger(__name__)


class GeometryError(ValueError):
    """Raised for invalid grid geometry or grid parameters."""


# VTK legacy cell types
VTK_VERTEX, VTK_LINE, VTK_TRIANGLE, VTK_POLYGON, VTK_QUAD, VTK_HEXAHEDRON = 1, 3, 5, 7, 9, 12


@dataclass(eq=False)
class SubdomainGrid:
    """Geometry, connectivity and rock data of one subdomain grid."""

    dim: int
    ambient_dim: int
    nodes: np.ndarray
    cell_nodes: List[np.ndarray]
    face_nodes: List[np.ndarray]
    cell_centers: np.ndarray
    cell_volumes: np.ndarray
    face_centers: np.ndarray
    face_areas: np.ndarray
    face_normals: np.ndarray
    face_cells: np.ndarray
    permeability: np.ndarray = field(default=None)
    porosity: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.permeability is None:
            self.permeability = np.ones(self.num_cells)
        if self.porosity is None:
            self.porosity = np.ones(self.num_cells)
        self.permeability = np.broadcast_to(
            np.asarray(self.permeability, dtype=float), (self.num_cells,)
        ).copy()
        self.porosity = np.broadcast_to(
            np.asarray(self.porosity, dtype=float), (self.num_cells,)
        ).copy()

    @property
    def num_cells(self) -> int:
        return self.cell_volumes.size

    @property
    def num_faces(self) -> int:
        return self.face_areas.size

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    @property
    def cell_elevation(self) -> np.ndarray:
        return self.cell_centers[:, self.ambient_dim - 1]

    def check(self) -> None:
        """Raise :class:`GeometryError` if the grid violates its invariants."""
        if np.any(self.cell_volumes <= 0):
            raise GeometryError(f"non-positive cell measure in cells {np.flatnonzero(self.cell_volumes <= 0)}")
        if self.num_faces:
            if np.any(self.face_areas <= 0):
                raise GeometryError("non-positive face area")
            norms = np.linalg.norm(self.face_normals, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise GeometryError("face normals are not unit vectors")
            inner = self.interior_faces
            if np.any(self.face_cells[inner, 0] == self.face_cells[inner, 1]):
                raise GeometryError("interior face with identical neighbours")
        if np.any(self.porosity <= 0) or np.any(self.porosity > 1):
            raise GeometryError("porosity must lie in (0, 1]")

    def vtk_cell_types(self) -> np.ndarray:
        if self.dim == 0:
            return np.full(self.num_cells, VTK_VERTEX)
        if self.dim == 1:
            return np.full(self.num_cells, VTK_LINE)
        if self.dim == 2:
            sizes = np.array([len(c) for c in self.cell_nodes])
            return np.where(sizes == 3, VTK_TRIANGLE, np.where(sizes == 4, VTK_QUAD, VTK_POLYGON))
        return np.full(self.num_cells, VTK_HEXAHEDRON)


def _pad3(points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((points.shape[0], 3))
    out[:, : points.shape[1]] = points
    return out


def _polygon_area_centroid(xy: np.ndarray) -> Tuple[float, np.ndarray]:
    x, y = xy[:, 0], xy[:, 1]
    xs, ys = np.roll(x, -1), np.roll(y, -1)
    cross = x * ys - xs * y
    area = 0.5 * cross.sum()
    cx = ((x + xs) * cross).sum() / (6 * area)
    cy = ((y + ys) * cross).sum() / (6 * area)
    return area, np.array([cx, cy])


def edge_key(a: int, b: int) -> Tuple[int, int]:
    return (a, b) if a < b else (b, a)


def polygon_grid(
    nodes: np.ndarray,
    cells: Sequence[Sequence[int]],
    split_edges: Optional[set] = None,
    permeability=1.0,
    porosity=1.0,
) -> Tuple[SubdomainGrid, Dict[Tuple[int, int], List[int]]]:
    """Build a 2D grid from polygonal cells.

    Args:
        nodes: ``(nn, 2)`` node coordinates.
        cells: Node indices of each cell, counter-clockwise or clockwise.
        split_edges: Edge keys (sorted node pairs) along which the grid is cut,
            e.g. by a fracture. Each adjacent cell gets its own boundary face there.
        permeability, porosity: Cell-wise or scalar rock data.

    Returns:
        The grid and a map from each split edge to the faces created on it.
    """
    nodes = np.asarray(nodes, dtype=float)
    split_edges = split_edges or set()
    cell_nodes = []
    centers = np.zeros((len(cells), 3))
    volumes = np.zeros(len(cells))
    for c, cn in enumerate(cells):
        cn = np.asarray(cn, dtype=int)
        area, centroid = _polygon_area_centroid(nodes[cn])
        if area < 0:
            cn = cn[::-1]
            area = -area
        cell_nodes.append(cn)
        volumes[c] = area
        centers[c, :2] = centroid

    edge_cells: Dict[Tuple[int, int], List[int]] = {}
    for c, cn in enumerate(cell_nodes):
        for a, b in zip(cn, np.roll(cn, -1)):
            edge_cells.setdefault(edge_key(int(a), int(b)), []).append(c)

    face_nodes, face_cells = [], []
    split_faces: Dict[Tuple[int, int], List[int]] = {}
    for key in sorted(edge_cells):
        adj = edge_cells[key]
        if len(adj) > 2:
            raise GeometryError(f"edge {key} shared by more than two cells")
        if len(adj) == 2 and key not in split_edges:
            face_nodes.append(np.array(key))
            face_cells.append((adj[0], adj[1]))
        else:
            for c in adj:
                if key in split_edges:
                    split_faces.setdefault(key, []).append(len(face_nodes))
                face_nodes.append(np.array(key))
                face_cells.append((c, -1))
    face_cells = np.array(face_cells, dtype=int).reshape(-1, 2)

    p0 = nodes[[f[0] for f in face_nodes]]
    p1 = nodes[[f[1] for f in face_nodes]]
    tangent = p1 - p0
    areas = np.linalg.norm(tangent, axis=1)
    normals = np.zeros((len(face_nodes), 3))
    normals[:, 0] = tangent[:, 1] / areas
    normals[:, 1] = -tangent[:, 0] / areas
    fcenters = _pad3(0.5 * (p0 + p1))
    # orient from the first cell outwards / towards the second cell
    flip = np.einsum("ij,ij->i", fcenters - centers[face_cells[:, 0]], normals) < 0
    normals[flip] *= -1

    grid = SubdomainGrid(
        dim=2,
        ambient_dim=2,
        nodes=_pad3(nodes),
        cell_nodes=cell_nodes,
        face_nodes=face_nodes,
        cell_centers=centers,
        cell_volumes=volumes,
        face_centers=fcenters,
        face_areas=areas,
        face_normals=normals,
        face_cells=face_cells,
        permeability=permeability,
        porosity=porosity,
    )
    grid.check()
    return grid, split_faces


def line_grid(
    points: np.ndarray,
    ambient_dim: int = 2,
    split_nodes: Sequence[int] = (),
    permeability=1.0,
    porosity=1.0,
) -> Tuple[SubdomainGrid, Dict[int, List[int]]]:
    """1D grid through ordered, collinear points.

    Interior points listed in ``split_nodes`` are cut (two boundary faces, one per
    neighbouring cell) instead of becoming interior faces; this is how a fracture
    is split at an intersection.

    Returns:
        The grid and a map ``node index -> faces located at that node``.
    """
    pts = _pad3(points)
    n_cells = len(pts) - 1
    if n_cells < 1:
        raise GeometryError("a line grid needs at least two points")
    split_nodes = set(int(i) for i in split_nodes)
    seg = pts[1:] - pts[:-1]
    lengths = np.linalg.norm(seg, axis=1)
    if np.any(lengths <= 0):
        raise GeometryError("repeated points in line grid")
    tangent = seg / lengths[:, None]
    cell_nodes = [np.array([i, i + 1]) for i in range(n_cells)]
    centers = 0.5 * (pts[1:] + pts[:-1])

    face_nodes, face_cells, normals = [], [], []
    node_faces: Dict[int, List[int]] = {}

    def add(node, m, n, normal):
        node_faces.setdefault(node, []).append(len(face_nodes))
        face_nodes.append(np.array([node]))
        face_cells.append((m, n))
        normals.append(normal)

    add(0, 0, -1, -tangent[0])
    for i in range(1, n_cells):
        if i in split_nodes:
            add(i, i - 1, -1, tangent[i - 1])
            add(i, i, -1, -tangent[i])
        else:
            add(i, i - 1, i, tangent[i - 1])
    add(n_cells, n_cells - 1, -1, tangent[n_cells - 1])

    fidx = np.array([f[0] for f in face_nodes])
    grid = SubdomainGrid(
        dim=1,
        ambient_dim=ambient_dim,
        nodes=pts,
        cell_nodes=cell_nodes,
        face_nodes=face_nodes,
        cell_centers=centers,
        cell_volumes=lengths,
        face_centers=pts[fidx],
        face_areas=np.ones(len(face_nodes)),
        face_normals=np.array(normals),
        face_cells=np.array(face_cells, dtype=int),
        permeability=permeability,
        porosity=porosity,
    )
    grid.check()
    return grid, node_faces


def point_grid(point, ambient_dim: int = 2, porosity=1.0) -> SubdomainGrid:
    """Single-cell grid of a 0D subdomain; the cell has unit measure."""
    pts = _pad3(point)
    return SubdomainGrid(
        dim=0,
        ambient_dim=ambient_dim,
        nodes=pts,
        cell_nodes=[np.array([0])],
        face_nodes=[],
        cell_centers=pts.copy(),
        cell_volumes=np.ones(1),
        face_centers=np.zeros((0, 3)),
        face_areas=np.zeros(0),
        face_normals=np.zeros((0, 3)),
        face_cells=np.zeros((0, 2), dtype=int),
        permeability=1.0,
        porosity=porosity,
    )


def cartesian_grid(shape: Sequence[int], extent: Sequence[float], permeability=1.0, porosity=1.0) -> SubdomainGrid:
    """Axis-aligned Cartesian grid in 1, 2 or 3 dimensions."""
    shape = tuple(int(s) for s in shape)
    dim = len(shape)
    if dim == 1:
        pts = np.zeros((shape[0] + 1, 2))
        pts[:, 0] = np.linspace(0, extent[0], shape[0] + 1)
        return line_grid(pts, 2, permeability=permeability, porosity=porosity)[0]
    if dim == 2:
        from .meshing import structured_quad_mesh

        nodes, cells = structured_quad_mesh(shape[0], shape[1], extent)
        return polygon_grid(nodes, cells, permeability=permeability, porosity=porosity)[0]
    if dim == 3:
        return _hex_grid(shape, extent, permeability, porosity)
    raise GeometryError(f"unsupported dimension {dim}")


def _hex_grid(shape, extent, permeability, porosity) -> SubdomainGrid:
    nx, ny, nz = shape
    axes = [np.linspace(0, extent[d], shape[d] + 1) for d in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    def cid(i, j, k):
        return (i * ny + j) * nz + k

    h = [np.diff(a) for a in axes]
    cell_nodes, centers, volumes = [], [], []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                cell_nodes.append(np.array([
                    nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                    nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1),
                ]))
                centers.append([axes[0][i] + h[0][i] / 2, axes[1][j] + h[1][j] / 2, axes[2][k] + h[2][k] / 2])
                volumes.append(h[0][i] * h[1][j] * h[2][k])
    centers = np.array(centers)

    face_nodes, face_cells, normals, fcenters, areas = [], [], [], [], []
    for axis in range(3):
        n_planes = shape[axis] + 1
        others = [d for d in range(3) if d != axis]
        for plane in range(n_planes):
            for a in range(shape[others[0]]):
                for b in range(shape[others[1]]):
                    idx = [0, 0, 0]
                    idx[axis], idx[others[0]], idx[others[1]] = plane, a, b
                    corner = []
                    for da, db in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        q = list(idx)
                        q[others[0]] += da
                        q[others[1]] += db
                        corner.append(nid(*q))
                    lo = list(idx)
                    lo[axis] -= 1
                    hi = list(idx)
                    normal = np.zeros(3)
                    normal[axis] = 1.0
                    if plane == 0:
                        cells_ = (cid(*hi), -1)
                        normal = -normal
                    elif plane == n_planes - 1:
                        cells_ = (cid(*lo), -1)
                    else:
                        cells_ = (cid(*lo), cid(*hi))
                    face_nodes.append(np.array(corner))
                    face_cells.append(cells_)
                    normals.append(normal)
                    fcenters.append(nodes[corner].mean(axis=0))
                    areas.append(h[others[0]][a] * h[others[1]][b])
    grid = SubdomainGrid(
        dim=3,
        ambient_dim=3,
        nodes=nodes,
        cell_nodes=cell_nodes,
        face_nodes=face_nodes,
        cell_centers=centers,
        cell_volumes=np.array(volumes),
        face_centers=np.array(fcenters),
        face_areas=np.array(areas),
        face_normals=np.array(normals),
        face_cells=np.array(face_cells, dtype=int),
        permeability=permeability,
        porosity=porosity,
    )
    grid.check()
    return grid


def tpfa_transmissibilities(grid: SubdomainGrid) -> np.ndarray:
    """Two-point flux transmissibilities, one per face.

    ``T = |f| / (d_m / K_m + d_n / K_n)`` with ``d`` the normal distance from the
    cell centre to the face. Boundary faces get zero (no-flow).
    """
    K = grid.permeability
    if np.any(~(K > 0)):
        raise GeometryError("permeability must be strictly positive")
    trans = np.zeros(grid.num_faces)
    faces = grid.interior_faces
    if faces.size == 0:
        return trans
    m, n = grid.face_cells[faces, 0], grid.face_cells[faces, 1]
    fc, nrm = grid.face_centers[faces], grid.face_normals[faces]
    dm = np.abs(np.einsum("ij,ij->i", fc - grid.cell_centers[m], nrm))
    dn = np.abs(np.einsum("ij,ij->i", fc - grid.cell_centers[n], nrm))
    bad = (dm <= 0) | (dn <= 0)
    if np.any(bad):
        raise GeometryError(f"zero centre-to-face distance on faces {faces[bad]}")
    trans[faces] = grid.face_areas[faces] / (dm / K[m] + dn / K[n])
    return trans


@dataclass(eq=False)
class DiscreteDivergence:
    """Signed cell-face incidence scaled by inverse cell measures.

    ``matrix[m, f] = +1/|c_m|`` if the normal of ``f`` points out of ``m`` and
    ``-1/|c_m|`` if it points into ``m``, so ``D @ q`` is the net outflow density.
    """

    matrix: sps.csr_matrix

    @classmethod
    def from_grid(cls, grid: SubdomainGrid, faces: Optional[np.ndarray] = None) -> "DiscreteDivergence":
        return cls(sps.diags(1.0 / grid.cell_volumes) @ incidence(grid, faces))


def incidence(grid: SubdomainGrid, faces: Optional[np.ndarray] = None) -> sps.csr_matrix:
    """Unscaled signed incidence (cells x faces), restricted to ``faces`` if given."""
    if faces is None:
        faces = np.arange(grid.num_faces)
    fc = grid.face_cells[faces]
    cols = np.arange(faces.size)
    inner = fc[:, 1] >= 0
    rows = np.concatenate([fc[:, 0], fc[inner, 1]])
    cols = np.concatenate([cols, cols[inner]])
    vals = np.concatenate([np.ones(faces.size), -np.ones(inner.sum())])
    return sps.csr_matrix((vals, (rows, cols)), shape=(grid.num_cells, faces.size))


def divergence_apply(div: DiscreteDivergence, face_flux: np.ndarray) -> np.ndarray:
    return div.matrix @ np.asarray(face_flux, dtype=float)


def face_to_cell_trace(grid: SubdomainGrid) -> sps.csr_matrix:
    """Map (faces x cells) that gives every face the value of its first cell."""
    nf = grid.num_faces
    return sps.csr_matrix(
        (np.ones(nf), (np.arange(nf), grid.face_cells[:, 0])), shape=(nf, grid.num_cells)
    )
