import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdflow import ad
from mdflow.mortar import (
    coupling_sources,
    higher_side_bc,
    higher_side_cell_outflow,
    interface_upwind,
    lower_side_inflow,
    mortar_mass_flux,
    mortar_residual,
    zero_d_balance,
)
from mdflow.topology import TopologyError

from conftest import line_mortar, projected_mortar, split_square


def single_cell_mortar(**kw):
    return projected_mortar([0.0, 1.0], [(0.0, 1.0)], [0.0, 1.0], **kw)[0]


def test_equal_pressures_no_gravity_forces_zero_flux():
    m = single_cell_mortar(k_perp=0.1)
    r = mortar_residual(m, np.array([0.0]), np.array([1.0, 1.0]), np.array([1.0]), 1.0, 0.0)
    assert r == pytest.approx([0.0])


def test_pressure_jump_flux_hand_value():
    m = single_cell_mortar(k_perp=0.1, aperture=0.01)
    # residual is zeta minus the law, so the root is the law value
    r = mortar_residual(m, np.array([0.0]), np.array([1.0, 5.0]), np.array([0.0]), 1.0, 0.0)
    assert -r[0] == pytest.approx(20.0)


def test_gravity_flux_across_horizontal_fracture():
    m = single_cell_mortar(k_perp=0.1)
    # higher side below the fracture: outward normal points up
    assert m.gravity_cosine == pytest.approx([1.0])
    r = mortar_residual(m, np.array([0.0]), np.zeros(2), np.zeros(1), 1.0, 1.0)
    assert -r[0] == pytest.approx(-0.1)


def test_residual_jacobian_in_zeta_is_identity():
    m = single_cell_mortar()
    z = ad.AdArray.variables(np.array([3.0]), 0, 1)
    r = mortar_residual(m, z, np.zeros(2), np.zeros(1), 1.0, 1.0)
    assert r.jac.toarray() == pytest.approx(np.eye(1))


@pytest.mark.parametrize("zeta, expected", [(0.0, 7.0), (2.0, 7.0), (-1.0, 9.0)])
def test_interface_upwind_sides(zeta, expected):
    m = single_cell_mortar()
    assert interface_upwind(m, np.array([zeta]), np.array([7.0, 0.0]), np.array([9.0]))[0] == expected


def test_interface_upwind_nonconforming_average():
    m, _, _ = projected_mortar([0.0, 0.5, 1.0], [(0.0, 1.0)], [0.0, 1.0])
    assert interface_upwind(m, np.array([1.0]), np.array([2.0, 4.0, 0.0, 0.0]), np.array([0.0]))[0] == pytest.approx(3.0)


def test_coupling_sources_examples():
    psi_p, psi_s = coupling_sources(2, [], (np.array([1.0, 2.0]), np.array([0.5, 0.0])))
    assert psi_p == pytest.approx([-1.0, -2.0]) and psi_s == pytest.approx([-0.5, 0.0])
    m = single_cell_mortar()
    flux = mortar_mass_flux(m, np.array([20.0]), (np.ones(2), np.full(2, 0.25)), (np.ones(1), np.zeros(1)))
    inflow = lower_side_inflow(m, flux)
    assert coupling_sources(1, [(inflow, inflow)])[1] == pytest.approx([5.0])


def test_higher_side_bc_examples(toy_domain):
    m = single_cell_mortar()
    grid = split_square([0.0, 1.0])[0]
    flux = np.array([2.5])
    bc = higher_side_bc(m, flux)
    assert bc.shape == (grid.num_faces,)
    assert bc[m.high_faces] == pytest.approx([2.5]) and bc.sum() == pytest.approx(2.5)
    m, grid, faces = projected_mortar([0.0, 0.4, 1.0], [(0.0, 1.0)], [0.0, 1.0])
    assert higher_side_bc(m, np.array([1.0]))[faces] == pytest.approx([0.4, 0.6])


def test_conforming_bc_equals_mortar_flux(toy_domain):
    m = toy_domain.mortars[0]
    rng = np.random.default_rng(1)
    zeta = rng.normal(size=m.num_cells)
    g = toy_domain.subdomain(0).grid
    flux = mortar_mass_flux(m, zeta, (np.ones(g.num_cells), np.full(g.num_cells, 0.5)), (np.ones(4), np.full(4, 0.5)))
    bc = higher_side_bc(m, flux)
    assert np.sort(bc[m.high_faces]) == pytest.approx(np.sort(flux))


def test_missing_projection_raises():
    grid, faces = split_square([0.0, 1.0])
    bare = line_mortar([(0.0, 1.0)], faces)
    with pytest.raises(TopologyError):
        mortar_residual(bare, np.zeros(1), np.zeros(2), np.zeros(1), 1.0, 0.0)


def test_zero_d_balance_examples():
    acc = (np.array([0.3]), np.array([0.1]))
    psi = coupling_sources(1, [(np.array([0.2]), np.array([0.1])), (np.array([-0.2]), np.array([-0.1]))])
    assert zero_d_balance(0.01, acc, acc, 0.1, psi) == pytest.approx((np.zeros(1), np.zeros(1)))
    assert zero_d_balance(0.01, acc, acc, 0.1, coupling_sources(1, [])) == pytest.approx((np.zeros(1), np.zeros(1)))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_coupling_conserves_mass(n_faces, n_mortar, seed):
    rng = np.random.default_rng(seed)
    x_nodes = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, n_faces - 1)), [1.0]]) if n_faces > 1 else [0.0, 1.0]
    x_nodes = np.unique(np.round(x_nodes, 6))
    breaks = np.linspace(0, 1, n_mortar + 1)
    m, grid, _ = projected_mortar(x_nodes, list(zip(breaks[:-1], breaks[1:])), breaks)
    flux = rng.normal(size=m.num_cells)
    # whatever leaves the higher side arrives on the lower side
    assert higher_side_bc(m, flux).sum() == pytest.approx(flux.sum())
    assert higher_side_cell_outflow(m, flux).sum() == pytest.approx(flux.sum())
    assert lower_side_inflow(m, flux).sum() == pytest.approx(flux.sum())


def test_intersection_mortar_uses_harmonic_normal_permeability(cross_domain):
    m = next(m for m in cross_domain.mortars if m.dim == 0)
    assert m.codim_factor == pytest.approx(cross_domain.subdomain(m.lower).aperture)
    hi = cross_domain.subdomain(m.higher).grid
    r = mortar_residual(m, np.zeros(m.num_cells), np.ones(hi.num_cells), np.zeros(1), 1.0, 0.0)
    expected = m.codim_factor * m.normal_permeability * (2.0 / m.lower_aperture)
    assert -r == pytest.approx(np.full(m.num_cells, expected))
