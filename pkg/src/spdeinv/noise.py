"""Noise covariance ``Q`` diagonal in the Laplacian eigenbasis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, lp_norm_const
from .errors import ParameterError

GAMMA_GRID_SIZE = 32


@dataclass(frozen=True)
class QSpec:
    """Eigenvalues ``lambda_k`` of the noise covariance.

    Either an explicit finite list (``lambdas``) or a power family
    ``lambda_k = c * k**(-s)`` truncated at ``K``. Modes beyond the stored
    list carry zero intensity.
    """

    lambdas: tuple = ()
    family: str | None = None
    c: float = 1.0
    s: float = 0.0
    K: int | None = None

    def __post_init__(self):
        if self.family is None:
            vals = tuple(float(v) for v in self.lambdas)
            if any(v < 0 or not np.isfinite(v) for v in vals):
                raise ParameterError("noise eigenvalues must be finite and nonnegative")
            object.__setattr__(self, "lambdas", vals)
            return
        if self.family != "power":
            raise ParameterError(f"unknown noise family {self.family!r}")
        if self.c <= 0 or self.s < 0:
            raise ParameterError("power family needs c > 0 and s >= 0")
        if self.K is None or self.K < 1:
            raise ParameterError("power family needs a truncation K >= 1")
        ks = np.arange(1, self.K + 1, dtype=float)
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.c * ks ** (-self.s)))

    @classmethod
    def power(cls, c, s, K):
        return cls(family="power", c=c, s=s, K=K)

    @classmethod
    def zeros(cls, K):
        return cls(lambdas=(0.0,) * K)

    def scaled(self, factor):
        """Multiply every eigenvalue by ``factor`` (kept as an explicit list)."""
        return QSpec(lambdas=tuple(factor * v for v in self.lambdas))

    def lambdas_for(self, n) -> np.ndarray:
        """Eigenvalues for the first ``n`` modes, zero-padded or truncated."""
        out = np.zeros(n)
        vals = np.asarray(self.lambdas[:n])
        out[: len(vals)] = vals
        return out

    def to_dict(self) -> dict:
        if self.family == "power":
            return {"family": "power", "c": self.c, "s": self.s, "K": self.K}
        return {"lambdas": list(self.lambdas)}

    @classmethod
    def from_dict(cls, d):
        if d.get("family") is not None:
            return cls.power(d["c"], d["s"], d["K"])
        return cls(lambdas=tuple(d.get("lambdas", ())))


def _max_gamma(dim):
    return dim / 4.0


def lambda_gamma(q: QSpec, basis: BasisSpec, gamma: float, with_tail: bool = False):
    """Regularity functional ``sum_k lambda_k^2 ||e_k||^2_{L^{d/(2 gamma)}}``.

    ``gamma = 0`` reads the norm as the sup norm. The sum runs over the modes
    retained by ``basis``. With ``with_tail=True`` returns ``(partial, tail)``
    where ``tail`` bounds the omitted modes for a power family (``inf`` when
    ``s <= 1/2``) and is ``None`` when no tail estimate applies.
    """
    if not 0.0 <= gamma < _max_gamma(basis.dim):
        raise ParameterError(f"gamma must lie in [0, {basis.dim}/4), got {gamma}")
    p = np.inf if gamma == 0 else basis.dim / (2.0 * gamma)
    norm2 = lp_norm_const(basis.dim, p) ** 2
    lam = q.lambdas_for(basis.n_modes)
    partial = float(norm2 * np.sum(lam**2))
    if not with_tail:
        return partial
    return partial, _tail_bound(q, min(len(q.lambdas), basis.n_modes), norm2)


def _tail_bound(q: QSpec, n: int, norm2: float):
    if q.family != "power":
        return None
    # integral comparison: sum_{k>n} k^{-2s} <= int_n^inf x^{-2s} dx
    if q.s <= 0.5:
        return np.inf
    return float(norm2 * q.c**2 * n ** (1.0 - 2.0 * q.s) / (2.0 * q.s - 1.0))


@dataclass
class WellposedReport:
    admissible: bool
    witness_gamma: float | None
    note: str
    lambda_value: float | None = None


def check_wellposed(q: QSpec, basis: BasisSpec) -> WellposedReport:
    """Search a fixed gamma grid in ``[0, 1/2 ^ d/4)`` for a finite functional."""
    gmax = min(0.5, basis.dim / 4.0)
    grid = np.linspace(0.0, gmax, GAMMA_GRID_SIZE, endpoint=False)
    if q.family is None:
        val = lambda_gamma(q, basis, 0.0)
        return WellposedReport(True, 0.0, "finite truncation", val)
    for g in grid:
        partial, tail = lambda_gamma(q, basis, float(g), with_tail=True)
        total = partial + (tail or 0.0)
        if np.isfinite(total):
            return WellposedReport(True, float(g), "power family with analytic tail bound", total)
    return WellposedReport(False, None, f"power family with s={q.s} <= 1/2 has divergent tail")
