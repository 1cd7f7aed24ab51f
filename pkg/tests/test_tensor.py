import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdeinv.errors import ContractError
from spdeinv.tensor import TensorField, from_sym, sym_dim, sym_pairs, sym_position, to_sym


def test_sym_layout():
    assert sym_dim(4) == 10
    assert sym_pairs(3).tolist() == [[0, 0], [0, 1], [0, 2], [1, 1], [1, 2], [2, 2]]
    assert sym_position(3, 2, 1) == sym_position(3, 1, 2) == 4


@given(st.integers(1, 7).flatmap(lambda n: arrays(float, (n, n), elements=st.floats(-1e3, 1e3))))
@settings(max_examples=60, deadline=None)
def test_sym_coordinates_are_an_isometry(A):
    S = A + A.T
    v = to_sym(S)
    assert np.allclose(from_sym(v, S.shape[0]), S, rtol=1e-15, atol=1e-12)
    assert np.dot(v, v) == pytest.approx(np.sum(S * S), rel=1e-12, abs=1e-12)


def test_tensor_field_contract_and_norms():
    with pytest.raises(ContractError):
        TensorField(np.array([[1.0, 2.0], [0.0, 1.0]]))
    F = TensorField.outer(np.array([1.0, 2.0]))
    assert F.u_norm() == pytest.approx(5.0)
    a = np.array([1.0, 4.0])
    assert F.u_gamma_norm(a, 1.0) == pytest.approx(np.sqrt(1 + 2 * 4 * 4 + 16 * 16))
    assert F.fractional_norm(a, 1.0) == pytest.approx(np.sqrt(2 * 1 + 2 * 5 * 4 + 8 * 16))
    assert ((F + F) * 0.5 - F).u_norm() == 0.0
