import numpy as np
import pytest
import scipy.sparse as sps
from hypothesis import given
from hypothesis import strategies as st

from mdflow import ad
from mdflow.ad import AdArray


def fd_jacobian(f, x, h=1e-6):
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((ad.value(f(x + e)) - ad.value(f(x - e))) / (2 * h))
    return np.column_stack(cols)


def check(f, x, rtol=1e-6):
    out = f(AdArray.variables(x, 0, x.size))
    assert out.val == pytest.approx(ad.value(f(x)))
    assert np.allclose(out.jac.toarray(), fd_jacobian(f, x), rtol=rtol, atol=1e-8)


EXPRESSIONS = [
    lambda x: x * x + 3.0 * x - 1.0,
    lambda x: x[:2] / (2.0 + x[1:]),
    lambda x: 1.0 / (3.0 + x) - (2.0 - x) ** 2,
    lambda x: ad.exp(0.3 * x) * ad.arctan(x),
    lambda x: -x**3 + x[::-1],
]


@pytest.mark.parametrize("k", range(len(EXPRESSIONS)))
@given(st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3))
def test_derivatives_match_central_differences(k, values):
    check(EXPRESSIONS[k], np.array(values))


def test_variables_offset():
    x = AdArray.variables(np.array([1.0, 2.0]), 3, 6)
    assert x.jac.shape == (2, 6)
    assert x.jac.toarray()[:, 3:5] == pytest.approx(np.eye(2))


def test_constant_has_zero_jacobian():
    c = AdArray.constant([1.0, 2.0], 4)
    assert c.jac.nnz == 0 and c.num_unknowns == 4


def test_where_follows_selected_branch():
    x = AdArray.variables(np.array([-1.0, 2.0]), 0, 2)
    y = ad.where(x.val > 0, 2.0 * x, 5.0)
    assert y.val == pytest.approx([5.0, 4.0])
    assert y.jac.toarray() == pytest.approx(np.array([[0.0, 0.0], [0.0, 2.0]]))


def test_minimum_maximum():
    x = AdArray.variables(np.array([0.5, 3.0]), 0, 2)
    assert ad.minimum(x, 1.0).jac.toarray() == pytest.approx(np.diag([1.0, 0.0]))
    assert ad.maximum(x, 1.0).val == pytest.approx([1.0, 3.0])
    assert ad.minimum(np.array([0.5, 3.0]), 1.0) == pytest.approx([0.5, 1.0])


def test_project_and_concatenate():
    x = AdArray.variables(np.array([1.0, 2.0, 3.0]), 0, 3)
    a = sps.csr_matrix(np.array([[0.5, 0.5, 0.0]]))
    y = ad.project(a, x)
    assert y.val == pytest.approx([1.5])
    z = ad.concatenate([y, x[2:]])
    assert z.val == pytest.approx([1.5, 3.0])
    assert z.jac.toarray() == pytest.approx(np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]))


def test_plain_arrays_pass_through():
    assert ad.value([1, 2]) == pytest.approx([1.0, 2.0])
    assert not ad.is_ad(np.ones(2))
    assert ad.exp(0.0) == 1.0 and ad.arctan(0.0) == 0.0


def test_numpy_operands_defer_to_ad():
    x = AdArray.variables(np.array([1.0, 2.0]), 0, 2)
    y = np.array([2.0, 3.0]) * x
    assert isinstance(y, AdArray) and y.jac.toarray() == pytest.approx(np.diag([2.0, 3.0]))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        AdArray(np.ones(2), sps.csr_matrix((3, 4)))
