"""Planar mesh generators and a plain-text simplex mesh reader.

All generators return ``(nodes, cells)`` with ``nodes`` of shape ``(nn, 2)`` and
``cells`` a list of node-index arrays. Fracture lines must coincide with mesh
edges; the generators below place nodes accordingly.

Simplex mesh text format (``#`` starts a comment)::

    vertices <nv>
    x y            # nv lines
    cells <nc>
    i j k          # nc lines, 0-based vertex indices
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .grid import GeometryError

Mesh = Tuple[np.ndarray, List[np.ndarray]]


def structured_quad_mesh(nx: int, ny: int, extent=(1.0, 1.0), origin=(0.0, 0.0)) -> Mesh:
    x = np.linspace(origin[0], origin[0] + extent[0], nx + 1)
    y = np.linspace(origin[1], origin[1] + extent[1], ny + 1)
    return tensor_quad_mesh(x, y)


def tensor_quad_mesh(x: np.ndarray, y: np.ndarray) -> Mesh:
    X, Y = np.meshgrid(x, y, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nx = len(x) - 1
    cells = []
    for j in range(len(y) - 1):
        for i in range(nx):
            a = j * (nx + 1) + i
            cells.append(np.array([a, a + 1, a + nx + 2, a + nx + 1]))
    return nodes, cells


def stacked_quad_mesh(nx_lower: int, nx_upper: int, ny: int, split: float, extent=(1.0, 1.0)) -> Mesh:
    """Two quad blocks on top of each other, glued along ``y = split``.

    The blocks do not share nodes, so with ``nx_lower != nx_upper`` the grids on
    the two sides of a horizontal fracture at ``split`` are non-matching.
    ``ny`` counts rows per unit height and is split proportionally.
    """
    ny_lo = max(1, int(round(ny * split / extent[1])))
    ny_up = max(1, ny - ny_lo)
    lo_nodes, lo_cells = tensor_quad_mesh(
        np.linspace(0, extent[0], nx_lower + 1), np.linspace(0, split, ny_lo + 1)
    )
    up_nodes, up_cells = tensor_quad_mesh(
        np.linspace(0, extent[0], nx_upper + 1), np.linspace(split, extent[1], ny_up + 1)
    )
    offset = len(lo_nodes)
    return np.vstack([lo_nodes, up_nodes]), lo_cells + [c + offset for c in up_cells]


def mapped_triangle_mesh(
    nx: int, ny: int, y_left: float, y_right: float, nx_upper: int = None, extent=(1.0, 1.0)
) -> Mesh:
    """Triangles on the unit square fitted to the line from ``(0, y_left)`` to ``(1, y_right)``.

    The lower and upper parts are structured in ``(x, eta)`` and mapped so that the
    row of nodes between them lies exactly on the line; each mapped quad is cut
    into two triangles. ``nx_upper`` (default ``nx``) sets the columns above the
    line; the two parts share no nodes, so a differing value gives a
    non-matching interface along the line.
    """
    nx_upper = nx if nx_upper is None else nx_upper
    lx, ly = extent
    if not (0 < y_left < ly and 0 < y_right < ly):
        raise GeometryError("the fitted line must stay inside the domain")
    ny_lo = max(1, ny // 2)
    ny_up = max(1, ny - ny_lo)

    def block(ncols, nrows, lower):
        xs = np.linspace(0, lx, ncols + 1)
        eta = np.linspace(0, 1, nrows + 1)
        line = y_left + (y_right - y_left) * xs / lx
        nodes = []
        for e in eta:
            ys = e * line if lower else line + e * (ly - line)
            nodes.append(np.column_stack([xs, ys]))
        nodes = np.vstack(nodes)
        cells = []
        for j in range(nrows):
            for i in range(ncols):
                a = j * (ncols + 1) + i
                b, c, d = a + 1, a + ncols + 2, a + ncols + 1
                # alternate diagonals to avoid a preferred direction
                if (i + j) % 2 == 0:
                    cells += [np.array([a, b, c]), np.array([a, c, d])]
                else:
                    cells += [np.array([a, b, d]), np.array([b, c, d])]
        return nodes, cells

    lo_nodes, lo_cells = block(nx, ny_lo, True)
    up_nodes, up_cells = block(nx_upper, ny_up, False)
    if nx_upper == nx:
        # conforming: reuse the lower block's top row for the upper block's bottom row
        n_row = nx + 1
        top_row = np.arange(len(lo_nodes) - n_row, len(lo_nodes))
        remap = np.concatenate([top_row, len(lo_nodes) + np.arange(len(up_nodes) - n_row)])
        nodes = np.vstack([lo_nodes, up_nodes[n_row:]])
        return nodes, lo_cells + [remap[c] for c in up_cells]
    offset = len(lo_nodes)
    return np.vstack([lo_nodes, up_nodes]), lo_cells + [c + offset for c in up_cells]


def read_simplex_mesh(path) -> Mesh:
    """Read the plain-text simplex format described in the module docstring."""
    path = Path(path)
    lines = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            lines.append((lineno, text))
    it = iter(lines)

    def header(name):
        try:
            lineno, text = next(it)
        except StopIteration:
            raise GeometryError(f"{path}: missing '{name}' section") from None
        parts = text.split()
        if len(parts) != 2 or parts[0] != name:
            raise GeometryError(f"{path}:{lineno}: expected '{name} <count>', got '{text}'")
        return int(parts[1])

    def rows(count, width, kind, dtype):
        out = []
        for _ in range(count):
            try:
                lineno, text = next(it)
            except StopIteration:
                raise GeometryError(f"{path}: unexpected end of file in {kind}") from None
            parts = text.split()
            if len(parts) != width:
                raise GeometryError(f"{path}:{lineno}: expected {width} values, got {len(parts)}")
            try:
                out.append([dtype(p) for p in parts])
            except ValueError:
                raise GeometryError(f"{path}:{lineno}: cannot parse '{text}'") from None
        return out

    nv = header("vertices")
    nodes = np.array(rows(nv, 2, "vertices", float), dtype=float).reshape(-1, 2)
    nc = header("cells")
    cells = np.array(rows(nc, 3, "cells", int), dtype=int).reshape(-1, 3)
    if cells.size and (cells.min() < 0 or cells.max() >= nv):
        raise GeometryError(f"{path}: cell refers to a missing vertex")
    return nodes, [c for c in cells]


def write_simplex_mesh(path, nodes: np.ndarray, cells: Sequence[Sequence[int]]) -> None:
    out = [f"vertices {len(nodes)}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in nodes]
    out.append(f"cells {len(cells)}")
    out += [" ".join(str(int(i)) for i in c) for c in cells]
    Path(path).write_text("\n".join(out) + "\n")
