"""Deterministic evolution of the two-point correlation ``E[u (x) u]``.

For the Galerkin system ``du_i = -alpha_i u_i dt + sum_k lambda_k (B_k u)_i
d beta_k`` with ``B_k[i, m] = T[k, m, i]``, Ito's formula gives the closed
linear equation

    d theta / dt = -(alpha theta + theta alpha) + sum_k lambda_k^2 B_k theta B_k,

which is assembled here as a symmetric matrix acting on the orthonormal
symmetric tensor basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import BasisSpec
from .errors import ParameterError
from .noise import QSpec, lambda_gamma
from .spectral import SpectralDecomposition, decompose, semigroup_apply
from .tensor import SQRT2, TensorField, from_sym, sym_pairs, sym_position


@dataclass
class GeneratorMatrix:
    """Truncated generator ``L = A0 + HQ`` on the symmetric tensor basis."""

    basis: BasisSpec
    q: QSpec
    A0_diag: np.ndarray
    HQ: np.ndarray
    L: np.ndarray = field(init=False)

    def __post_init__(self):
        L = self.HQ + np.diag(self.A0_diag)
        self.L = 0.5 * (L + L.T)

    @property
    def n(self) -> int:
        return self.basis.n_modes

    @property
    def N(self) -> int:
        return self.L.shape[0]

    @property
    def A0(self) -> np.ndarray:
        return np.diag(self.A0_diag)

    @cached_property
    def decomposition(self) -> SpectralDecomposition:
        return decompose(self.L)


def a0_diagonal(basis: BasisSpec) -> np.ndarray:
    """``-(alpha_i + alpha_j)`` over the symmetric pairs."""
    a = basis.alphas
    p = sym_pairs(basis.n_modes)
    return -(a[p[:, 0]] + a[p[:, 1]])


def noise_operator_full(T: np.ndarray, lam_sq: np.ndarray) -> np.ndarray:
    """``H4[i, j, m, n] = sum_k lam_sq[k] T[k, m, i] T[k, n, j]``."""
    return np.einsum("k,kmi,knj->ijmn", lam_sq, T, T, optimize=True)


def project_to_sym(H4: np.ndarray) -> np.ndarray:
    """Matrix of the tensor operator ``H4`` in the orthonormal symmetric basis.

    With ``s_b = w1 E_{I1} + w2 E_{I2}`` the entry is
    ``sum_{p,q} w_p(a) w_q(b) H4[I_p(a), I_q(b)]``.
    """
    n = H4.shape[0]
    H2 = H4.reshape(n * n, n * n)
    p = sym_pairs(n)
    diag = p[:, 0] == p[:, 1]
    idx = (p[:, 0] * n + p[:, 1], p[:, 1] * n + p[:, 0])
    w = (np.where(diag, 1.0, 1.0 / SQRT2), np.where(diag, 0.0, 1.0 / SQRT2))
    out = np.zeros((len(p), len(p)))
    for a in range(2):
        for b in range(2):
            out += w[a][:, None] * w[b][None, :] * H2[np.ix_(idx[a], idx[b])]
    return 0.5 * (out + out.T)


def noise_design(basis: BasisSpec) -> np.ndarray:
    """Per-mode ``HQ`` blocks: ``D[k]`` is ``HQ`` for unit intensity on mode
    ``k`` alone, so ``HQ = sum_k lambda_k^2 D[k]``."""
    T = basis.triple_tensor
    n = basis.n_modes
    out = np.empty((n, len(sym_pairs(n)), len(sym_pairs(n))))
    for k in range(n):
        H4 = np.einsum("mi,nj->ijmn", T[k], T[k])
        out[k] = project_to_sym(H4)
    return out


def assemble_generator(basis: BasisSpec, q: QSpec, T: np.ndarray | None = None) -> GeneratorMatrix:
    """Assemble ``A0 + HQ``; ``T`` overrides the triple tensor (fault injection)."""
    if T is None:
        T = basis.triple_tensor
    lam = q.lambdas_for(basis.n_modes)
    H4 = noise_operator_full(T, lam**2)
    return GeneratorMatrix(basis, q, a0_diagonal(basis), project_to_sym(H4))


def sym_gamma_weights(basis: BasisSpec, gamma: float) -> np.ndarray:
    """``(alpha_i alpha_j)^(gamma/2)`` over the symmetric pairs."""
    a = basis.alphas
    p = sym_pairs(basis.n_modes)
    return (a[p[:, 0]] * a[p[:, 1]]) ** (0.5 * gamma)


@dataclass
class NormCheck:
    operator_norm: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.operator_norm <= self.bound * (1 + 1e-12) + 1e-15


def hq_norm_check(basis: BasisSpec, q: QSpec, gamma1: float, gamma2: float, gen=None) -> NormCheck:
    """Truncated ``||HQ||`` from ``U^gamma1`` to ``U^-gamma2`` against the
    regularity bound at ``(gamma1 + gamma2) / 4``."""
    d = basis.dim
    for g in (gamma1, gamma2):
        if not 0.0 <= g < d:
            raise ParameterError(f"gamma values must lie in [0, {d}), got {g}")
    if (gamma1 + gamma2) / 4.0 >= d / 4.0:
        raise ParameterError("gamma1 + gamma2 must stay below d for a finite bound")
    gen = gen or assemble_generator(basis, q)
    W1 = sym_gamma_weights(basis, -gamma1)
    W2 = sym_gamma_weights(basis, -gamma2)
    scaled = W2[:, None] * gen.HQ * W1[None, :]
    norm = float(np.linalg.norm(scaled, 2)) if scaled.size else 0.0
    bound = lambda_gamma(q, basis, (gamma1 + gamma2) / 4.0)
    return NormCheck(norm, bound)


def evolve_theta(L, theta0: TensorField, t: float) -> TensorField:
    """``exp(L t) theta0`` through the symmetric eigendecomposition of ``L``."""
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if t == 0:
        return theta0
    dec = L.decomposition if isinstance(L, GeneratorMatrix) else decompose(L)
    return semigroup_apply(dec, t, theta0)


def pair_initial_tensor(n: int, i: int, j: int) -> TensorField:
    """``theta^{i,j}(0) = 2 (e_i (x) e_j + e_j (x) e_i)`` for 1-based ``i, j``."""
    F = np.zeros((n, n))
    F[i - 1, j - 1] += 2.0
    F[j - 1, i - 1] += 2.0
    return TensorField(F)


def pair_scale(i: int, j: int) -> float:
    """Sym coordinate of ``theta^{i,j}(0)`` on its own basis vector."""
    return 4.0 if i == j else 2.0 * SQRT2


def theta_ij_exact(L: GeneratorMatrix, i: int, j: int, t0: float) -> TensorField:
    n = L.n
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"pair ({i}, {j}) outside 1..{n}")
    return evolve_theta(L, pair_initial_tensor(n, i, j), t0)


def theta_exact(L: GeneratorMatrix, u0, t: float) -> TensorField:
    """``exp(L t) (u0 (x) u0)``."""
    return evolve_theta(L, TensorField.outer(np.asarray(u0, dtype=float)), t)


def exact_dataset_matrices(L: GeneratorMatrix, t0: float, pairs=None) -> dict:
    """``{(i, j): theta^{i,j}(t0)}`` over all (or the given) 1-based pairs."""
    n = L.n
    if pairs is None:
        pairs = [(i + 1, j + 1) for i, j in sym_pairs(n)]
    M = semigroup_apply(L.decomposition, t0, np.eye(L.N))
    out = {}
    for i, j in pairs:
        col = M[:, sym_position(n, i - 1, j - 1)] * pair_scale(i, j)
        out[(i, j)] = TensorField(from_sym(col, n))
    return out
