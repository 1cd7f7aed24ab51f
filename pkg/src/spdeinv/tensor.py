"""Symmetric tensor fields on ``D x D`` and the orthonormal symmetric basis.

The symmetric basis is ``{s_ij : i <= j}`` with ``s_ii = e_i (x) e_i`` and
``s_ij = (e_i (x) e_j + e_j (x) e_i) / sqrt(2)``, ordered row-major over
``i <= j``. Coordinates in this basis ("sym vectors") have Euclidean norm
equal to the U-norm of the field.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def sym_pairs(n: int) -> np.ndarray:
    """``(N, 2)`` array of 0-based pairs ``i <= j``, ``N = n(n+1)/2``."""
    i, j = np.triu_indices(n)
    out = np.stack([i, j], axis=1)
    out.setflags(write=False)
    return out


def sym_dim(n: int) -> int:
    return n * (n + 1) // 2


def sym_position(n: int, i: int, j: int) -> int:
    """Slot of the 0-based pair ``(i, j)`` in the symmetric basis."""
    if i > j:
        i, j = j, i
    return i * n - i * (i - 1) // 2 + (j - i)


def sym_weights(n: int) -> np.ndarray:
    """Scale factors mapping ``F[i, j]`` to sym coordinates."""
    p = sym_pairs(n)
    return np.where(p[:, 0] == p[:, 1], 1.0, SQRT2)


def to_sym(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    n = F.shape[-1]
    p = sym_pairs(n)
    return F[..., p[:, 0], p[:, 1]] * sym_weights(n)


def from_sym(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    p = sym_pairs(n)
    vals = v / sym_weights(n)
    F = np.zeros(v.shape[:-1] + (n, n))
    F[..., p[:, 0], p[:, 1]] = vals
    F[..., p[:, 1], p[:, 0]] = vals
    return F


@dataclass(frozen=True)
class TensorField:
    """Symmetric coefficient matrix ``f_ij`` of ``f = sum f_ij e_i (x) e_j``."""

    coeffs: np.ndarray

    def __post_init__(self):
        F = np.array(self.coeffs, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ContractError(f"tensor field needs a square matrix, got shape {F.shape}")
        if not np.array_equal(F, F.T):
            raise ContractError("tensor field coefficients must be exactly symmetric")
        F.setflags(write=False)
        object.__setattr__(self, "coeffs", F)

    @classmethod
    def from_sym(cls, v, n):
        return cls(from_sym(v, n))

    @classmethod
    def outer(cls, u, v=None):
        """``u (x) u``, or the symmetrised ``(u (x) v + v (x) u) / 2``."""
        u = np.asarray(u, dtype=float)
        if v is None:
            F = np.outer(u, u)
        else:
            F = np.outer(u, v)
        return cls(0.5 * (F + F.T))

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def sym(self) -> np.ndarray:
        return to_sym(self.coeffs)

    def u_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def u_gamma_norm(self, alphas, gamma) -> float:
        """``(sum alpha_i^g alpha_j^g f_ij^2)^(1/2)``."""
        w = np.asarray(alphas, dtype=float) ** gamma
        return float(np.sqrt(np.sum(np.outer(w, w) * self.coeffs**2)))

    def fractional_norm(self, alphas, gamma) -> float:
        """Graph norm of ``(-A0)^(gamma/2)``: ``(sum (alpha_i + alpha_j)^g f_ij^2)^(1/2)``."""
        a = np.asarray(alphas, dtype=float)
        return float(np.sqrt(np.sum((a[:, None] + a[None, :]) ** gamma * self.coeffs**2)))

    def __add__(self, other):
        return TensorField(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return TensorField(self.coeffs - other.coeffs)

    def __mul__(self, a):
        return TensorField(a * self.coeffs)

    __rmul__ = __mul__
