"""Spectral calculus for the self-adjoint truncated generator.

Everything here works on symmetric ``N x N`` matrices in the orthonormal
symmetric tensor basis (see :mod:`spdeinv.tensor`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ContractError, NumericalError, ParameterError, SpectralPositivityError
from .tensor import TensorField, from_sym

CLUSTER_RTOL = 1e-8
SYMMETRY_RTOL = 1e-12
DEFAULT_LOG_FLOOR_RTOL = 1e-12


def _as_matrix(L):
    return np.asarray(getattr(L, "L", L), dtype=float)


def check_symmetric(M, name="matrix", rtol=SYMMETRY_RTOL):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractError(f"{name} must be square, got shape {M.shape}")
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    asym = np.abs(M - M.T).max(initial=0.0)
    if asym > rtol * scale:
        raise ContractError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return M


def cluster_eigenvalues(sigmas, rtol=CLUSTER_RTOL):
    """Group sorted eigenvalues whose consecutive gaps are within tolerance."""
    sigmas = np.asarray(sigmas)
    if sigmas.size == 0:
        return []
    tol = rtol * max(np.abs(sigmas).max(), np.finfo(float).tiny)
    groups, current = [], [0]
    for k in range(1, sigmas.size):
        if abs(sigmas[k] - sigmas[k - 1]) <= tol:
            current.append(k)
        else:
            groups.append(np.array(current))
            current = [k]
    groups.append(np.array(current))
    return groups


@dataclass
class SpectralDecomposition:
    """Eigenpairs of a symmetric generator, eigenvalues sorted descending.

    ``groups`` partitions the eigenvalue indices into numerically coincident
    clusters; each cluster defines one spectral projector ``E_k``.
    """

    sigmas: np.ndarray
    eigvecs: np.ndarray
    groups: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.sigmas.size

    def projector(self, g: int) -> np.ndarray:
        V = self.eigvecs[:, self.groups[g]]
        return V @ V.T

    def projectors(self):
        return [self.projector(g) for g in range(len(self.groups))]

    def group_values(self) -> np.ndarray:
        return np.array([self.sigmas[idx].mean() for idx in self.groups])

    def group_labels(self) -> np.ndarray:
        labels = np.empty(self.N, dtype=int)
        for g, idx in enumerate(self.groups):
            labels[idx] = g
        return labels

    def reconstruct(self) -> np.ndarray:
        """``sum_k sigma_k E_k`` with projectors built group by group."""
        out = np.zeros((self.N, self.N))
        for s, P in zip(self.group_values(), self.projectors()):
            out += s * P
        return out

    def function(self, f) -> np.ndarray:
        """``V diag(f(sigma)) V^T``."""
        return (self.eigvecs * f(self.sigmas)) @ self.eigvecs.T

    def orthonormality_error(self) -> float:
        V = self.eigvecs
        return float(np.abs(V.T @ V - np.eye(self.N)).max(initial=0.0))


def decompose(L, cluster_rtol=CLUSTER_RTOL) -> SpectralDecomposition:
    """Full symmetric eigendecomposition with multiplicity clustering.

    Accepts a :class:`~spdeinv.covariance.GeneratorMatrix` or a plain matrix.
    """
    M = check_symmetric(_as_matrix(L), "generator")
    try:
        w, V = scipy.linalg.eigh(M)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(M) if np.all(np.isfinite(M)) else np.inf
        raise NumericalError(f"symmetric eigensolver failed (cond={cond:.3e}): {exc}") from exc
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    return SpectralDecomposition(w, V, cluster_eigenvalues(w, cluster_rtol))


def semigroup_matrix(dec: SpectralDecomposition, t: float) -> np.ndarray:
    if t < 0:
        raise ParameterError("backward evolution (t < 0) is not supported")
    return dec.function(lambda s: np.exp(s * t))


def semigroup_apply(dec: SpectralDecomposition, t: float, x):
    """``sum_k exp(sigma_k t) E_k x``.

    ``x`` may be a sym vector (or a stack of them along the last axis) or a
    :class:`TensorField`; the return type follows the input.
    """
    if t < 0:
        raise ParameterError("backward evolution (t < 0) is not supported")
    if isinstance(x, TensorField):
        v = x.sym()
        out = semigroup_apply(dec, t, v)
        return TensorField(from_sym(out, x.n))
    v = np.asarray(x, dtype=float)
    growth = np.exp(dec.sigmas * t)
    coef = dec.eigvecs.T @ v
    coef *= growth if v.ndim == 1 else growth[:, None]
    return dec.eigvecs @ coef


@dataclass
class SpectralLog:
    L_rec: np.ndarray
    recovered_rank: int
    floor: float
    mus: np.ndarray
    retained: np.ndarray
    eigvecs: np.ndarray

    @property
    def null_vectors(self) -> np.ndarray:
        return self.eigvecs[:, ~self.retained]

    @property
    def unrecoverable(self) -> np.ndarray:
        return np.flatnonzero(~self.retained)


def spectral_log(M, t0: float, floor: float | None = None) -> SpectralLog:
    """Recover a symmetric generator from its semigroup at time ``t0``.

    Eigenvalues ``mu >= floor`` become ``log(mu) / t0``; the rest span a null
    subspace reported as unrecoverable. ``floor=None`` uses
    ``1e-12 * max(mu)``. Eigenvalues in ``(-floor, floor)`` are rounding-level
    and join the null subspace; anything more negative raises
    :class:`SpectralPositivityError`, so noisy data are never clipped silently.
    """
    if t0 <= 0:
        raise ParameterError("t0 must be positive")
    M = check_symmetric(M, "semigroup matrix", rtol=1e-10)
    M = 0.5 * (M + M.T)
    mu, V = scipy.linalg.eigh(M)
    order = np.argsort(mu)[::-1]
    mu, V = mu[order], V[:, order]
    if floor is None:
        floor = DEFAULT_LOG_FLOOR_RTOL * max(mu.max(initial=0.0), 0.0)
    if floor < 0:
        raise ParameterError("logarithm floor must be nonnegative")
    if np.any(mu < -floor):
        raise SpectralPositivityError(
            f"semigroup data has {int(np.sum(mu < -floor))} negative eigenvalue(s) beyond the floor, "
            f"min {mu.min():.3e}; data too noisy for the logarithm"
        )
    retained = mu >= floor
    if np.any(mu[retained] <= 0):
        raise SpectralPositivityError("retained eigenvalue is not strictly positive")
    Vr = V[:, retained]
    sig = np.log(mu[retained]) / t0
    L_rec = (Vr * sig) @ Vr.T
    L_rec = 0.5 * (L_rec + L_rec.T)
    return SpectralLog(L_rec, int(retained.sum()), float(floor), mu, retained, V)


def trotter_check(basis, q, t: float, n_list):
    """Lie-Trotter errors ``||(e^{HQ t/n} e^{A0 t/n})^n - e^{L t}||_F``.

    Returns a list of ``(n, error)`` rows in the order given.
    """
    from .covariance import assemble_generator

    gen = assemble_generator(basis, q)
    exact = semigroup_matrix(gen.decomposition, t)
    hq = decompose(gen.HQ)
    rows = []
    for n in n_list:
        n = int(n)
        if n < 1:
            raise ParameterError("Trotter step counts must be >= 1")
        step = semigroup_matrix(hq, t / n) * np.exp(gen.A0_diag * t / n)[None, :]
        approx = np.linalg.matrix_power(step, n)
        rows.append((n, float(np.linalg.norm(approx - exact))))
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
