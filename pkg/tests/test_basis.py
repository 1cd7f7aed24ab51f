import itertools

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdeinv.basis import (
    NORM,
    BasisSpec,
    composite_gauss_legendre,
    lp_norm_const,
    sine_abs_power_integral,
    triple_product_1d,
)
from spdeinv.errors import DomainError, ParameterError

# Frozen after the first verified build; any change to the triple tensor
# (assembly, ordering or rounding) shows up here.
PINNED_K8_SHA256 = "2e0c0cd5341329b3ad1e3325e8d7cd54e8394b78f3df28bb64dc8dcdb0289c9f"


@pytest.fixture(scope="module")
def gl():
    return composite_gauss_legendre()


def test_gauss_legendre_oracle_integrates_polynomials_and_sines(gl):
    x, w = gl
    assert x.size == 256
    assert w.sum() == pytest.approx(np.pi, abs=1e-14)
    assert np.sum(w * np.sin(x)) == pytest.approx(2.0, abs=1e-14)
    assert np.sum(w * x**5) == pytest.approx(np.pi**6 / 6, rel=1e-14)


def test_eigenvalues_1d_and_2d():
    assert BasisSpec(1, 4).alphas.tolist() == [1, 4, 9, 16]
    b = BasisSpec(2, 2)
    assert b.alphas.tolist() == [2, 5, 5, 8]
    assert b.eigenvalue((2, 1)) == 5


def test_flat_index_rules():
    b = BasisSpec(2, 3)
    assert b.flat_index((1, 1)) == 0
    assert b.flat_index((2, 3)) == 5
    with pytest.raises(IndexError):
        b.flat_index((4, 1))
    with pytest.raises(IndexError):
        BasisSpec(1, 3).flat_index(0)


def test_invalid_basis_parameters():
    with pytest.raises(ParameterError):
        BasisSpec(3, 4)
    with pytest.raises(ParameterError):
        BasisSpec(1, 0)


def test_eval_basis_domain():
    b = BasisSpec(1, 4)
    assert b.eval_basis(1, np.pi / 2) == pytest.approx(NORM)
    with pytest.raises(DomainError):
        b.eval_basis(1, -0.1)
    with pytest.raises(DomainError):
        BasisSpec(2, 2).eval_basis(1, np.array([0.5, 4.0]))


def test_orthonormality_by_quadrature(gl):
    x, w = gl
    b = BasisSpec(1, 16)
    E = np.stack([b.eval_basis(k, x) for k in range(1, 17)])
    assert np.abs((E * w) @ E.T - np.eye(16)).max() <= 1e-12


def test_triple_products_match_quadrature(gl):
    x, w = gl
    b = BasisSpec(1, 16)
    E = np.stack([b.eval_basis(k, x) for k in range(1, 17)])
    quad = np.einsum("kx,mx,ix,x->kmi", E, E, E, w)
    assert np.abs(b.triple_tensor - quad).max() <= 1e-12


def test_triple_products_2d_match_tensor_quadrature(gl):
    x, w = gl
    b = BasisSpec(2, 2)
    X, Y = np.meshgrid(x, x, indexing="ij")
    P = np.stack([X, Y], axis=-1)
    W = np.outer(w, w)
    E = np.stack([b.eval_basis(k, P) for k in range(1, b.n_modes + 1)])
    quad = np.einsum("kxy,mxy,ixy,xy->kmi", E, E, E, W)
    assert np.abs(b.triple_tensor - quad).max() <= 1e-12


def test_triple_symmetry_and_parity_exhaustive():
    T = BasisSpec(1, 16).triple_tensor
    for perm in itertools.permutations(range(3)):
        assert np.array_equal(T, T.transpose(perm))
    k = np.arange(1, 17)
    even = (k[:, None, None] + k[None, :, None] + k[None, None, :]) % 2 == 0
    assert np.all(T[even] == 0.0)
    assert np.all(T[~even] != 0.0)


def test_triple_tensor_is_read_only():
    T = BasisSpec(1, 3).triple_tensor
    with pytest.raises(ValueError):
        T[0, 0, 0] = 1.0


@given(st.integers(1, 60), st.integers(1, 60), st.integers(1, 60))
@settings(max_examples=200, deadline=None)
def test_triple_product_permutation_invariant(k, m, i):
    v = triple_product_1d(k, m, i)
    for a, b, c in itertools.permutations((k, m, i)):
        assert triple_product_1d(a, b, c) == v


def test_checksum_is_stable_and_pinned():
    assert BasisSpec(1, 8).triple_checksum() == BasisSpec(1, 8).triple_checksum()
    assert BasisSpec(1, 8).triple_checksum() == PINNED_K8_SHA256


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0, 7.5])
def test_lp_norm_against_quadrature(p):
    # |sin|^p has kinks at the zeros, so integrate hump by hump with tanh-sinh
    mp.mp.dps = 30
    for k in (1, 3, 6):
        hump = mp.quad(lambda x: (mp.sqrt(2 / mp.pi) * mp.sin(k * x)) ** p, [0, mp.pi / k])
        direct = float((k * hump) ** (1 / mp.mpf(p)))
        assert lp_norm_const(1, p) == pytest.approx(direct, rel=1e-13)
    assert lp_norm_const(2, p) == pytest.approx(lp_norm_const(1, p) ** 2, rel=1e-15)


def test_lp_norm_special_values():
    assert lp_norm_const(1, 2.0) == pytest.approx(1.0, rel=1e-15)
    assert lp_norm_const(1, np.inf) == NORM
    assert sine_abs_power_integral(1.0) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ParameterError):
        lp_norm_const(1, 1.0)


def test_indicator_coefficients_against_quadrature(gl):
    x, w = gl
    b = BasisSpec(1, 9)
    expected = [np.sum(w * b.eval_basis(k, x)) for k in range(1, 10)]
    assert np.allclose(b.indicator_coeffs, expected, atol=1e-14, rtol=0)
    assert np.all(b.indicator_coeffs[1::2] == 0.0)
