"""Forward-mode automatic differentiation on vectors with sparse Jacobians.

An :class:`AdArray` carries a value vector together with the (sparse) Jacobian of
that vector with respect to the global unknown vector. Every elementary operation
propagates the derivative exactly, so the assembled residual Jacobian is exact up
to round-off and its sparsity is the stencil of the expression that built it.

The free functions (:func:`exp`, :func:`arctan`, :func:`where`, ...) accept plain
floats/arrays as well, so constitutive and flux code can be written once and
evaluated either with or without derivatives.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np
import scipy.sparse as sps

Number = Union[float, int, np.ndarray]


def _scale_rows(v, jac: sps.csr_matrix) -> sps.csr_matrix:
    """``diag(v) @ jac`` without building the diagonal matrix."""
    v = np.asarray(v, dtype=float)
    data = jac.data * np.repeat(v, np.diff(jac.indptr))
    return sps.csr_matrix((data, jac.indices, jac.indptr), shape=jac.shape)


class AdArray:
    """Value vector with exact sparse Jacobian.

    Args:
        val: Values, shape ``(n,)``.
        jac: Jacobian, shape ``(n, num_unknowns)``.
    """

    # numpy must defer binary operators to us
    __array_ufunc__ = None

    def __init__(self, val, jac):
        self.val = np.atleast_1d(np.asarray(val, dtype=float))
        self.jac = jac if sps.isspmatrix_csr(jac) else sps.csr_matrix(jac)
        if self.jac.shape[0] != self.val.size:
            raise ValueError(
                f"Jacobian has {self.jac.shape[0]} rows for {self.val.size} values"
            )

    # construction helpers
    @classmethod
    def variables(cls, values: np.ndarray, offset: int, num_unknowns: int) -> "AdArray":
        """Independent variables occupying ``[offset, offset + len(values))``."""
        n = len(values)
        jac = sps.csr_matrix(
            (np.ones(n), (np.arange(n), offset + np.arange(n))), shape=(n, num_unknowns)
        )
        return cls(values, jac)

    @classmethod
    def constant(cls, values, num_unknowns: int) -> "AdArray":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(values, sps.csr_matrix((values.size, num_unknowns)))

    @property
    def num_unknowns(self) -> int:
        return self.jac.shape[1]

    def __len__(self) -> int:
        return self.val.size

    def __repr__(self) -> str:
        return f"AdArray(n={self.val.size}, nnz={self.jac.nnz})"

    def _lift(self, other) -> "AdArray":
        if isinstance(other, AdArray):
            return other
        other = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        return AdArray.constant(other, self.num_unknowns)

    # arithmetic
    def __neg__(self) -> "AdArray":
        return AdArray(-self.val, -self.jac)

    def __add__(self, other) -> "AdArray":
        if isinstance(other, AdArray):
            return AdArray(self.val + other.val, self.jac + other.jac)
        return AdArray(self.val + other, self.jac)

    __radd__ = __add__

    def __sub__(self, other) -> "AdArray":
        if isinstance(other, AdArray):
            return AdArray(self.val - other.val, self.jac - other.jac)
        return AdArray(self.val - other, self.jac)

    def __rsub__(self, other) -> "AdArray":
        return AdArray(other - self.val, -self.jac)

    def __mul__(self, other) -> "AdArray":
        if isinstance(other, AdArray):
            jac = _scale_rows(other.val, self.jac) + _scale_rows(self.val, other.jac)
            return AdArray(self.val * other.val, jac)
        other = np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        return AdArray(self.val * other, _scale_rows(other, self.jac))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "AdArray":
        if isinstance(other, AdArray):
            inv = 1.0 / other.val
            ratio = self.val * inv
            # (ratio * inv) instead of val / den**2: no underflow for tiny den
            jac = _scale_rows(inv, self.jac) - _scale_rows(ratio * inv, other.jac)
            return AdArray(ratio, jac)
        inv = 1.0 / np.broadcast_to(np.asarray(other, dtype=float), self.val.shape)
        return AdArray(self.val * inv, _scale_rows(inv, self.jac))

    def __rtruediv__(self, other) -> "AdArray":
        return self._lift(other) / self

    def __pow__(self, exponent: float) -> "AdArray":
        if isinstance(exponent, AdArray):
            raise NotImplementedError("AD exponents are not supported")
        val = self.val**exponent
        der = exponent * self.val ** (exponent - 1) if exponent != 0 else np.zeros_like(val)
        return AdArray(val, _scale_rows(der, self.jac))

    def __getitem__(self, idx) -> "AdArray":
        idx = np.atleast_1d(np.arange(self.val.size)[idx])
        return AdArray(self.val[idx], self.jac[idx])

    # elementary functions
    def exp(self) -> "AdArray":
        val = np.exp(self.val)
        return AdArray(val, _scale_rows(val, self.jac))

    def arctan(self) -> "AdArray":
        return AdArray(np.arctan(self.val), _scale_rows(1.0 / (1.0 + self.val**2), self.jac))


def is_ad(x) -> bool:
    return isinstance(x, AdArray)


def value(x) -> np.ndarray:
    """Numerical value of ``x`` whether or not it carries derivatives."""
    return x.val if isinstance(x, AdArray) else np.asarray(x, dtype=float)


def exp(x):
    return x.exp() if isinstance(x, AdArray) else np.exp(x)


def arctan(x):
    return x.arctan() if isinstance(x, AdArray) else np.arctan(x)


def where(mask, a, b):
    """Elementwise select; derivatives follow the selected branch only."""
    mask = np.asarray(mask, dtype=bool)
    a_ad, b_ad = isinstance(a, AdArray), isinstance(b, AdArray)
    if not (a_ad or b_ad):
        return np.where(mask, a, b)
    shape = (a if a_ad else b).val.shape
    m = np.broadcast_to(mask, shape).astype(float)
    va = a.val if a_ad else np.broadcast_to(np.asarray(a, dtype=float), shape)
    vb = b.val if b_ad else np.broadcast_to(np.asarray(b, dtype=float), shape)
    if a_ad and b_ad:
        jac = _scale_rows(m, a.jac) + _scale_rows(1.0 - m, b.jac)
    elif a_ad:
        jac = _scale_rows(m, a.jac)
    else:
        jac = _scale_rows(1.0 - m, b.jac)
    return AdArray(np.where(m > 0, va, vb), jac)


def minimum(x, bound: float):
    """``min(x, bound)`` with the derivative of the active branch."""
    if not isinstance(x, AdArray):
        return np.minimum(x, bound)
    return where(x.val <= bound, x, bound)


def maximum(x, bound: float):
    if not isinstance(x, AdArray):
        return np.maximum(x, bound)
    return where(x.val >= bound, x, bound)


def project(matrix: sps.spmatrix, x):
    """Apply a linear map (e.g. a mortar projection) to ``x``."""
    if isinstance(x, AdArray):
        return AdArray(matrix @ x.val, sps.csr_matrix(matrix @ x.jac))
    return matrix @ np.asarray(x, dtype=float)


def concatenate(parts: Sequence[AdArray]) -> AdArray:
    """Stack AD arrays into one vector (rows in the given order)."""
    parts = [p for p in parts if len(p) > 0]
    val = np.concatenate([p.val for p in parts])
    jac = sps.vstack([p.jac for p in parts], format="csr")
    return AdArray(val, jac)
