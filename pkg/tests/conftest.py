import functools

import numpy as np
import pytest
from hypothesis import settings

from mdflow.fluid import FluidPair, Phase
from mdflow.fractures import Fracture, build_fractured_domain
from mdflow.grid import line_grid, polygon_grid
from mdflow.meshing import structured_quad_mesh, tensor_quad_mesh
from mdflow.runner import run_case
from mdflow.topology import MortarInterface, build_projections

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def fractured_square(n=4, fractures=None, k_matrix=1.0):
    """Unit square of n x n quads cut by the given fractures (default: y = 0.5)."""
    nodes, cells = structured_quad_mesh(n, n)
    if fractures is None:
        fractures = [Fracture((0.0, 0.5), (1.0, 0.5), permeability=1.0, normal_permeability=0.1, aperture=0.01)]
    return build_fractured_domain(nodes, cells, fractures, k_matrix, 0.25)


@pytest.fixture
def toy_domain():
    """2D matrix + one horizontal 1D fracture + two mortars."""
    return fractured_square(4)


@pytest.fixture
def cross_domain():
    """Two crossing fractures: 2D + two 1D + one 0D intersection."""
    fracs = [
        Fracture((0.0, 0.5), (1.0, 0.5), permeability=1.0, normal_permeability=0.1, aperture=0.01),
        Fracture((0.5, 0.0), (0.5, 1.0), permeability=5.0, normal_permeability=0.2, aperture=0.02),
    ]
    return fractured_square(4, fracs)


@pytest.fixture
def incompressible_fluid():
    return FluidPair(Phase(1.0, 1.0), Phase(0.5, 1.0))


@pytest.fixture
def compressible_fluid():
    return FluidPair(Phase(1.0, 1.0, 0.1), Phase(0.5, 2.0, 0.05))


def random_state(rng, domain, layout, s_range=(0.05, 0.95), p_scale=1.0, z_scale=0.1):
    x = np.zeros(layout.size)
    for sd in domain.subdomains:
        x[layout[("p", sd.id)]] = p_scale * rng.uniform(-1, 1, sd.grid.num_cells)
        x[layout[("s0", sd.id)]] = rng.uniform(*s_range, sd.grid.num_cells)
    for m in domain.mortars:
        for k in ("z0", "z1"):
            x[layout[(k, m.id)]] = z_scale * rng.uniform(-1, 1, m.num_cells)
    return x


def split_square(x_nodes):
    """Two rows of quads with columns at ``x_nodes``, cut along y = 0.5.

    Returns the grid and the cut faces of the lower row (normal +y).
    """
    nodes, cells = tensor_quad_mesh(np.asarray(x_nodes, float), np.array([0.0, 0.5, 1.0]))
    on = np.flatnonzero(np.isclose(nodes[:, 1], 0.5))
    split = {(int(a), int(b)) for a, b in zip(on[:-1], on[1:])}
    grid, faces = polygon_grid(nodes, cells, split)
    below = sorted(f for fs in faces.values() for f in fs if grid.face_normals[f, 1] > 0)
    return grid, np.array(below)


def line_mortar(intervals, faces, k_perp=1.0, aperture=0.01):
    """Unprojected mortar on y = 0.5 seen from below."""
    return MortarInterface(
        id=0,
        dim=1,
        higher=0,
        lower=1,
        normal_permeability=k_perp,
        lower_aperture=aperture,
        ambient_dim=2,
        origin=np.array([0.0, 0.5, 0.0]),
        axes=np.array([[1.0, 0.0, 0.0]]),
        cell_shapes=list(intervals),
        cell_normals=np.tile([0.0, 1.0, 0.0], (len(intervals), 1)),
        high_faces=faces,
    )


def fracture_grid(breaks):
    pts = np.column_stack([breaks, np.full(len(breaks), 0.5)])
    return line_grid(pts)[0]


def projected_mortar(x_nodes, intervals, breaks, **kw):
    grid, faces = split_square(x_nodes)
    return build_projections(line_mortar(intervals, faces, **kw), grid, fracture_grid(breaks)), grid, faces


@functools.lru_cache(maxsize=None)
def cached_run(case, scheme, **overrides):
    """Full run of a bundled case, shared by every test in the session."""
    return run_case(case, scheme, **overrides)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Remember one pass/fail line for the end-of-session summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
