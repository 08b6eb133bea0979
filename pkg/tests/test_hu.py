import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdflow import ad
from mdflow.flux import CellFields, FaceStencil
from mdflow.grid import incidence
from mdflow.hu import (
    BlendParams,
    HUScheme,
    blend_coefficient,
    blend_weight,
    gravity_directions,
    gravity_drive,
    hu_gravity_flux,
    hu_total_flux,
    hu_viscous_flux,
    saturation_weighted_density,
)

from conftest import fractured_square


def cells(p, s0, rho=(1.0, 0.5), mu=(1.0, 1.0)):
    p, s0 = np.asarray(p, float), np.asarray(s0, float)
    rho = tuple(np.broadcast_to(np.asarray(r, float), p.shape).copy() for r in rho)
    return CellFields(p=p, s0=s0, rho=rho, lam=(s0**2 / mu[0], (1 - s0) ** 2 / mu[1]))


def test_saturation_weighted_density_examples():
    assert saturation_weighted_density(0.3, 1.0, 0.3, 0.5) == pytest.approx(0.75)
    assert saturation_weighted_density(0.4, 1.0, 0.0, 0.5) == pytest.approx(1.0)
    assert saturation_weighted_density(0.25, 1.0, 0.75, 0.5) == pytest.approx(0.625)


def test_saturation_weighted_density_absent_phase():
    assert saturation_weighted_density(np.array([0.0]), 1.0, np.array([0.0]), 0.5)[0] == pytest.approx(0.75)
    # a vanishing but nonzero total keeps value and derivative finite
    s = ad.AdArray.variables(np.array([1e-310, 1e-310]), 0, 2)
    rho = saturation_weighted_density(s[:1], 1.0, s[1:], 0.5)
    assert np.all(np.isfinite(rho.val)) and np.all(np.isfinite(rho.jac.toarray()))


def test_blend_weight_examples():
    assert blend_weight(0.0, 3.0) == 0.5
    assert blend_weight(1e12, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert blend_weight(1.0, 2.0) == pytest.approx(0.5 + math.atan(2.0) / math.pi)
    assert blend_weight(1.0, 2.0) == pytest.approx(0.85242, abs=5e-6)


@pytest.mark.parametrize("rho, expected", [(1.0, 2.0), (0.5, 4.0), (1e-9, 1e6)])
def test_blend_coefficient(rho, expected):
    assert blend_coefficient(np.array([rho]))[0] == pytest.approx(expected)


def test_blend_params_validate():
    with pytest.raises(ValueError):
        BlendParams(cap=0.0)


def test_total_flux_zero_on_uniform_state():
    total, _, _ = hu_total_flux(FaceStencil.two_cells(), cells([1.0, 1.0], [0.4, 0.4]), 0.0)
    assert total[0] == 0.0


def test_total_flux_antisymmetric_under_swap():
    a = hu_total_flux(FaceStencil.two_cells(1.0, 0.3), cells([1.0, 0.2], [0.3, 0.9]), 1.0)[0]
    b = hu_total_flux(FaceStencil.two_cells(1.0, -0.3), cells([0.2, 1.0], [0.9, 0.3]), 1.0)[0]
    assert a[0] == pytest.approx(-b[0])


def test_viscous_flux_examples():
    c = cells([0.0, 0.0], [0.5, 0.2])
    assert hu_viscous_flux(FaceStencil.two_cells(), c, np.array([0.0]))[0][0] == 0.0
    v0, up = hu_viscous_flux(FaceStencil.two_cells(), c, np.array([2.0]))
    assert up[0] and v0[0] == pytest.approx(1.0)
    c = cells([0.0, 0.0], [0.0, 0.7])
    assert hu_viscous_flux(FaceStencil.two_cells(), c, np.array([2.0]))[0][0] == 0.0


def test_gravity_flux_hand_value():
    # heavy above light: m one unit above n, half-saturated cells
    c = cells([0.0, 0.0], [0.5, 0.5])
    st_ = FaceStencil.two_cells(1.0, 1.0)
    rho_face = hu_total_flux(st_, c, 1.0)[2]
    g0, _ = hu_gravity_flux(st_, c, rho_face, 1.0)
    assert g0[0] == pytest.approx(0.0625)


def test_gravity_flux_when_both_mobilities_vanish():
    # each phase sits only on the side it would leave
    c = cells([0.0, 0.0], [0.0, 1.0])
    st_ = FaceStencil.two_cells(1.0, 1.0)
    s = ad.AdArray.variables(np.array([0.0, 1.0]), 0, 2)
    c_ad = CellFields(p=c.p, s0=s, rho=c.rho, lam=(s**2, (1.0 - s) ** 2))
    g0, _ = hu_gravity_flux(st_, c_ad, hu_total_flux(st_, c_ad, 1.0)[2], 1.0)
    assert np.all(np.isfinite(g0.val)) and np.all(np.isfinite(g0.jac.toarray()))


@given(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 3), st.floats(-1, 1)
)
def test_gravity_flux_vanishes_without_buoyancy(pm, pn, sm, sn, rho, dz):
    c = cells([pm, pn], [sm, sn], rho=(rho, rho))
    st_ = FaceStencil.two_cells(1.0, dz)
    assert hu_gravity_flux(st_, c, hu_total_flux(st_, c, 1.0)[2], 1.0)[0][0] == 0.0
    c = cells([pm, pn], [sm, sn])
    flat = FaceStencil.two_cells(1.0, 0.0)
    assert hu_gravity_flux(flat, c, hu_total_flux(flat, c, 1.0)[2], 1.0)[0][0] == 0.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 2.0))
def test_buoyancy_moves_heavy_phase_down(sm, sn, dz):
    c = cells([0.0, 0.0], [sm, sn])
    st_ = FaceStencil.two_cells(1.0, dz)
    g0, _ = hu_gravity_flux(st_, c, hu_total_flux(st_, c, 1.0)[2], 1.0)
    assert g0[0] >= 0.0


def test_gravity_drive_signs():
    c = cells([0.0, 0.0], [0.5, 0.5])
    st_ = FaceStencil.two_cells(1.0, 1.0)
    w0, w1 = gravity_drive(st_, c, hu_total_flux(st_, c, 1.0)[2], 1.0)
    assert w0[0] > 0 and w1[0] < 0


@given(st.floats(-1e3, 1e3), st.floats(1e-3, 1e6))
def test_blend_weight_symmetry_and_range(x, c):
    b = blend_weight(x, c)
    assert 0.0 <= b <= 1.0
    assert b + blend_weight(-x, c) == pytest.approx(1.0, abs=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_local_conservation(seed):
    rng = np.random.default_rng(seed)
    g = fractured_square(4).subdomain(0).grid
    stc = FaceStencil.from_grid(g)
    flux = HUScheme().fluxes(stc, cells(rng.normal(size=g.num_cells), rng.uniform(0, 1, g.num_cells)), 1.0)
    inc = incidence(g, g.interior_faces)
    for q in (flux.total, flux.phase0):
        assert abs((inc @ q).sum()) <= 1e-12 * max(1.0, np.abs(q).sum())


def test_flux_labels():
    flux = HUScheme().fluxes(FaceStencil.two_cells(1.0, 1.0), cells([1.0, 0.0], [0.3, 0.6]), 1.0)
    assert set(flux.choices) == {"qT", "w0"}


def test_gravity_direction_ignores_zero_mobility_ties():
    # m below n; the cell below holds only heavy phase, so omega_0 = 0
    st_ = FaceStencil.two_cells(1.0, -1.0)
    full = cells([0.0, 0.0], [1.0, 0.4])
    part = cells([0.0, 0.0], [0.9, 0.4])
    for c in (full, part):
        up0, _ = gravity_directions(st_, c, hu_total_flux(st_, c, 1.0)[2], 1.0)
        # heavy phase is taken from the upper cell n either way
        assert not up0[0]
    w0, _ = gravity_drive(st_, full, hu_total_flux(st_, full, 1.0)[2], 1.0)
    assert w0[0] == 0.0


@given(st.sampled_from([0.0, 1.0]), st.floats(0, 1), st.sampled_from([-1.0, 1.0]))
def test_tie_rule_does_not_change_gravity_flux(sm, sn, dz):
    # the plain rule "omega >= 0 takes m" gives the same flux and derivative
    st_ = FaceStencil.two_cells(1.0, dz)
    s = ad.AdArray.variables(np.array([sm, sn]), 0, 2)
    c = CellFields(p=np.zeros(2), s0=s, rho=(np.ones(2), np.full(2, 0.5)), lam=(s**2, (1.0 - s) ** 2))
    rho_face = hu_total_flux(st_, c, 1.0)[2]
    g0, _ = hu_gravity_flux(st_, c, rho_face, 1.0)
    omega = gravity_drive(st_, c, rho_face, 1.0)
    lam_g = [ad.where(w >= 0, lam[:1], lam[1:]) for lam, w in zip(c.lam, omega)]
    total = lam_g[0] + lam_g[1]
    safe = ad.where(ad.value(total) > 0, total, 1.0)
    plain = lam_g[0] * lam_g[1] / safe * 0.5 * dz
    assert g0.val == pytest.approx(plain.val, abs=1e-15)
    assert g0.jac.toarray() == pytest.approx(plain.jac.toarray(), abs=1e-15)
