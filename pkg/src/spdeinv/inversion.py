"""Recover the noise eigenvalues from final-time correlation data.

Pipeline: ``{theta^{i,j}(t0)}`` -> ``exp(L t0)`` (one column per pair) ->
spectral logarithm -> ``HQ = L - A0`` -> ``lambda_k^2`` by either the
indicator pairing or nonnegative least squares on the per-mode design.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize

from .basis import NORM, BasisSpec
from .covariance import a0_diagonal, assemble_generator, exact_dataset_matrices, noise_design, pair_scale
from .errors import ContractError, CoverageError, NumericalError, SpdeInvError
from .forward import mc_theta_pairs
from .spectral import SpectralLog, semigroup_matrix, spectral_log
from .tensor import sym_pairs, sym_position, sym_weights, to_sym

EXACT_ASYMMETRY_TOL = 1e-10


@dataclass
class ThetaDataset:
    """Family ``{theta^{i,j}(t0)}`` keyed by 1-based pairs ``i <= j``.

    ``provenance`` is ``{"kind": "exact"}`` or
    ``{"kind": "monte_carlo", "M": ..., "master_seed": ...}``; Monte Carlo
    data also carry ``stderr`` matrices keyed like ``entries``.
    """

    t0: float
    n: int
    entries: dict
    provenance: dict = field(default_factory=lambda: {"kind": "exact"})
    stderr: dict | None = None
    lambda_spec: dict | None = None

    def __post_init__(self):
        if not self.t0 > 0:
            raise ContractError("observation time t0 must be positive")
        clean = {}
        for (i, j), F in self.entries.items():
            i, j = int(i), int(j)
            key = (min(i, j), max(i, j))
            F = np.asarray(F, dtype=float)
            if F.shape != (self.n, self.n):
                raise ContractError(f"pair {key}: expected {self.n}x{self.n}, got {F.shape}")
            if not np.array_equal(F, F.T):
                raise ContractError(f"pair {key}: matrix is not symmetric")
            clean[key] = F
        self.entries = clean
        if self.stderr is not None:
            self.stderr = {(min(int(i), int(j)), max(int(i), int(j))): np.asarray(S, float)
                           for (i, j), S in self.stderr.items()}

    @property
    def is_exact(self) -> bool:
        return self.provenance.get("kind") == "exact"

    def required_pairs(self, k_obs=None):
        k_obs = self.n if k_obs is None else k_obs
        return [(i + 1, j + 1) for i, j in sym_pairs(k_obs)]

    def missing_pairs(self, k_obs=None):
        return [p for p in self.required_pairs(k_obs) if p not in self.entries]


@dataclass
class SemigroupReconstruction:
    M_rec: np.ndarray
    asymmetry: float
    stderr: np.ndarray | None = None


def _raw_to_sym_columns(n, mats):
    """Stack sym coordinates of each pair matrix, scaled by the pair factor."""
    N = len(sym_pairs(n))
    out = np.zeros((N, N))
    for (i, j), F in mats.items():
        b = sym_position(n, i - 1, j - 1)
        out[:, b] = to_sym(F) / pair_scale(i, j)
    return out


def reconstruct_semigroup(data: ThetaDataset) -> SemigroupReconstruction:
    """Columns of ``exp(L t0)`` from the pair data, symmetrised.

    ``theta^{i,j}(0)`` has sym coordinates ``2 sqrt(2)`` (``i < j``) or ``4``
    (``i = j``) on its own basis vector, so each data matrix divided by that
    factor is one column of the semigroup.
    """
    missing = data.missing_pairs()
    if missing:
        raise CoverageError(missing)
    n = data.n
    M = _raw_to_sym_columns(n, {p: data.entries[p] for p in data.required_pairs()})
    scale = np.linalg.norm(M)
    asym = float(np.linalg.norm(M - M.T) / scale) if scale > 0 else 0.0
    if data.is_exact and asym > EXACT_ASYMMETRY_TOL:
        raise ContractError(f"exact data give a non-symmetric semigroup (relative asymmetry {asym:.3e})")
    se = None
    if data.stderr is not None:
        se = np.abs(_raw_to_sym_columns(n, {p: data.stderr[p] for p in data.required_pairs()}))
    return SemigroupReconstruction(0.5 * (M + M.T), asym, se)


@dataclass
class GeneratorRecovery:
    L_rec: np.ndarray
    HQ_rec: np.ndarray
    log: SpectralLog

    @property
    def recovered_rank(self) -> int:
        return self.log.recovered_rank

    def null_subspace_report(self) -> dict:
        return {
            "unrecoverable_modes": [int(k) for k in self.log.unrecoverable],
            "unrecoverable_mus": [float(m) for m in self.log.mus[~self.log.retained]],
            "dimension": int((~self.log.retained).sum()),
        }


def recover_generator(M_rec, t0: float, basis: BasisSpec, floor: float | None = None) -> GeneratorRecovery:
    """``L_rec = log(M_rec) / t0`` and ``HQ_rec = L_rec - A0`` with ``A0`` known."""
    lg = spectral_log(M_rec, t0, floor)
    HQ = lg.L_rec - np.diag(a0_diagonal(basis))
    return GeneratorRecovery(lg.L_rec, 0.5 * (HQ + HQ.T), lg)


def indicator_sym(basis: BasisSpec) -> np.ndarray:
    """Sym coordinates of the truncated indicator of ``D x D``."""
    c = basis.indicator_coeffs
    return to_sym(np.outer(c, c))


def indicator_residual(basis: BasisSpec) -> tuple[float, float]:
    """``(||1 - P_K 1||_H, ||chi - P_K chi||_U)`` for the constant function."""
    s = float(np.sum(basis.indicator_coeffs**2))
    vol = basis.domain_measure
    res_h = np.sqrt(max(vol - s, 0.0))
    res_u = np.sqrt(max(vol**2 - s**2, 0.0))
    return float(res_h), float(res_u)


@dataclass
class PairingResult:
    lambda_sq: np.ndarray
    chi_residual: float
    chi_residual_h: float
    error_bound: np.ndarray


def extract_lambdas_pairing(HQ_rec, basis: BasisSpec, lambda_sq_ref=None) -> PairingResult:
    """``<HQ chi, e_k (x) e_k>_U`` with the indicator expanded in the basis.

    ``error_bound[k]`` bounds ``|estimate_k - lambda_k^2|`` through
    ``|<1 - P_K 1, e_l e_k>| <= eta = ||1 - P_K 1|| ||e||_inf``:
    ``lambda_k^2 (2 eta + eta^2) + eta^2 sum_{l != k} lambda_l^2``. The
    intensities in the bound come from ``lambda_sq_ref`` (for instance the
    least-squares estimate) or, if absent, from the pairing estimate itself.
    """
    HQ_rec = np.asarray(HQ_rec, dtype=float)
    n = basis.n_modes
    chi = indicator_sym(basis)
    pairing = HQ_rec @ chi
    diag_slots = [sym_position(n, k, k) for k in range(n)]
    est = pairing[diag_slots]
    res_h, res_u = indicator_residual(basis)
    eta = res_h * NORM**basis.dim
    ref = np.clip(est if lambda_sq_ref is None else np.asarray(lambda_sq_ref, float), 0.0, None)
    bound = ref * (2 * eta + eta**2) + eta**2 * (ref.sum() - ref)
    return PairingResult(est, res_u, res_h, bound)


@dataclass
class LsqResult:
    lambda_sq: np.ndarray
    residual: float
    active: np.ndarray
    design_rank: int


def lsq_design(basis: BasisSpec, design=None) -> np.ndarray:
    D = noise_design(basis) if design is None else design
    return D.reshape(D.shape[0], -1).T


def extract_lambdas_lsq(HQ_rec, basis: BasisSpec, design=None) -> LsqResult:
    """Nonnegative least squares of ``HQ_rec`` on the per-mode blocks."""
    A = lsq_design(basis, design)
    b = np.asarray(HQ_rec, dtype=float).ravel()
    rank = int(np.linalg.matrix_rank(A))
    if rank < A.shape[1]:
        raise NumericalError(f"noise design is rank deficient ({rank} < {A.shape[1]})")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return LsqResult(np.zeros(A.shape[1]), 0.0, np.zeros(A.shape[1], bool), rank)
    x, rnorm = scipy.optimize.nnls(A, b, maxiter=50 * A.shape[1])
    return LsqResult(x, float(rnorm / bnorm), x > 0, rank)


def lsq_linear_map(A, active=None) -> np.ndarray:
    """Rows mapping ``vec(HQ)`` to ``lambda^2``; ``active=None`` uses every column."""
    if active is None:
        return np.linalg.pinv(A)
    P = np.zeros((A.shape[1], A.shape[0]))
    if np.any(active):
        P[active] = np.linalg.pinv(A[:, active])
    return P


def lambda_jacobian(recovery: GeneratorRecovery, basis: BasisSpec, t0: float,
                    design=None) -> np.ndarray:
    """``J[k, a, b]``: derivative of ``lambda_k^2`` with respect to the raw
    data entry ``a`` (upper-triangle slot) of pair ``b``.

    Linearises the matrix logarithm with the divided-difference formula
    ``dlog(M)[E] = V (F o (V^T E V)) V^T`` on the retained spectrum. The
    extractor is linearised without its nonnegativity constraint, so a
    component pinned at zero still gets a finite error bar.
    """
    n = basis.n_modes
    N = len(sym_pairs(n))
    A = lsq_design(basis, design)
    P = lsq_linear_map(A).reshape(-1, N, N)
    P = 0.5 * (P + P.transpose(0, 2, 1))
    lg = recovery.log
    mu, V, keep = lg.mus, lg.eigvecs, lg.retained
    safe = np.where(keep, mu, 1.0)
    logmu = np.log(safe)
    dmu = mu[:, None] - mu[None, :]
    close = np.abs(dmu) <= 1e-12 * np.maximum(safe[:, None], safe[None, :])
    F = np.where(close, 1.0 / safe[:, None], (logmu[:, None] - logmu[None, :]) / np.where(close, 1.0, dmu))
    F[~keep, :] = 0.0
    F[:, ~keep] = 0.0
    Q = np.einsum("ca,kcd,db->kab", V, P, V) * F[None]
    G = np.einsum("ac,kcd,bd->kab", V, Q, V)
    G = 0.5 * (G + G.transpose(0, 2, 1))
    scales = np.array([pair_scale(i + 1, j + 1) for i, j in sym_pairs(n)])
    return G * (sym_weights(n)[:, None] / scales[None, :])[None] / t0


def raw_pair_stack(n, mats) -> np.ndarray:
    """``R[a, b]``: upper-triangle entry ``a`` of the pair in slot ``b``."""
    p = sym_pairs(n)
    R = np.zeros((len(p), len(p)))
    for (i, j), F in mats.items():
        R[:, sym_position(n, i - 1, j - 1)] = np.asarray(F)[p[:, 0], p[:, 1]]
    return R


def propagate_diagonal(J, data: ThetaDataset) -> np.ndarray:
    """Standard errors of ``lambda^2`` treating data entries as independent."""
    SE = raw_pair_stack(data.n, data.stderr)
    return np.sqrt(np.einsum("kab,ab->k", J**2, SE**2))


def propagate_paths(J, mc_pairs, pairs, batch=4096) -> np.ndarray:
    """Delta-method standard errors from per-path samples (keeps correlations)."""
    M, _, n = mc_pairs.states.shape
    slots = [sym_position(n, i - 1, j - 1) for i, j in pairs]
    Jp = J[:, :, slots]
    infl = np.empty((M, J.shape[0]))
    for lo in range(0, M, batch):
        hi = min(lo + batch, M)
        S = np.stack([mc_pairs.pair_samples(r)[lo:hi] for r in range(len(pairs))], axis=-1)
        infl[lo:hi] = np.einsum("kab,pab->pk", Jp, S)
    return infl.std(axis=0, ddof=1) / np.sqrt(M)


@dataclass
class InversionReport:
    config: dict
    t0: float
    source: str
    lambda_sq_pairing: list
    pairing_error_bound: list
    chi_residual: float
    lambda_sq_lsq: list
    lsq_residual: float
    recovered_rank: int
    floor: float
    asymmetry_diag: float
    null_subspace: dict
    timings: dict
    lambda_sq_true: list | None = None
    lambda_sq_lsq_stderr: list | None = None
    uncertainty_method: str | None = None
    semigroup_error: float | None = None
    semigroup_stderr_norm: float | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


class _Stages:
    def __init__(self):
        self.timings = {}

    def run(self, name, fn, *args, **kwargs):
        t = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except SpdeInvError as exc:
            exc.stage = name
            raise
        finally:
            self.timings[name] = time.perf_counter() - t


def generate_dataset(config, source: str = "ode", pairs=None, keep_states: bool = False):
    """Build the ``theta^{i,j}(t0)`` family for ``config``.

    Returns ``(dataset, mc_pairs)`` where ``mc_pairs`` is the raw Monte Carlo
    result (``None`` for exact data).
    """
    basis, q, t0 = config.basis_spec(), config.q_spec(), config.times.t0
    k_obs = config.inversion.K_obs or basis.n_modes
    if k_obs > basis.n_modes:
        raise ContractError(f"K_obs={k_obs} exceeds the mode count {basis.n_modes}")
    if pairs is None:
        pairs = [(i + 1, j + 1) for i, j in sym_pairs(k_obs)]
    pairs = [(min(i, j), max(i, j)) for i, j in pairs]
    if source == "ode":
        gen = assemble_generator(basis, q)
        mats = exact_dataset_matrices(gen, t0, pairs)
        data = ThetaDataset(t0, basis.n_modes, {p: F.coeffs for p, F in mats.items()},
                            {"kind": "exact"}, None, q.to_dict())
        return data, None
    if source != "mc":
        raise ContractError(f"unknown data source {source!r}")
    ens = config.ensemble()
    res = mc_theta_pairs(pairs, t0, basis, q, ens, keep_states=keep_states)
    prov = {"kind": "monte_carlo", "M": ens.M, "master_seed": int(ens.master_seed),
            "scheme": ens.scheme.kind, "dt": ens.scheme.dt}
    data = ThetaDataset(t0, basis.n_modes, res.theta, prov, res.stderr, q.to_dict())
    return data, res


def invert_dataset(data: ThetaDataset, basis: BasisSpec, floor=None, config_echo=None,
                   mc_pairs=None, truth=None, stages=None, source="dataset") -> InversionReport:
    """Run reconstruction, recovery and both extractors on ``data``."""
    stages = stages or _Stages()
    rec = stages.run("reconstruct", reconstruct_semigroup, data)
    recovery = stages.run("recover", recover_generator, rec.M_rec, data.t0, basis, floor)
    design = noise_design(basis)
    lsq = stages.run("extract_lsq", extract_lambdas_lsq, recovery.HQ_rec, basis, design)
    pairing = stages.run("extract_pairing", extract_lambdas_pairing, recovery.HQ_rec, basis, lsq.lambda_sq)

    se, method = None, None
    if not data.is_exact:
        J = stages.run("uncertainty", lambda_jacobian, recovery, basis, data.t0, design)
        if mc_pairs is not None and mc_pairs.states is not None:
            pairs = [tuple(p) for p in mc_pairs.manifest["pairs"]]
            se = stages.run("uncertainty", propagate_paths, J, mc_pairs, pairs)
            method = "delta_method_per_path"
        elif data.stderr is not None:
            se = propagate_diagonal(J, data)
            method = "delta_method_independent_entries"

    sg_err = sg_se = None
    if truth is not None:
        gen = assemble_generator(basis, truth)
        sg_err = float(np.linalg.norm(rec.M_rec - semigroup_matrix(gen.decomposition, data.t0)))
        if rec.stderr is not None:
            sg_se = float(np.linalg.norm(rec.stderr))

    return InversionReport(
        config=config_echo or {},
        t0=data.t0,
        source=source,
        lambda_sq_pairing=pairing.lambda_sq.tolist(),
        pairing_error_bound=pairing.error_bound.tolist(),
        chi_residual=pairing.chi_residual,
        lambda_sq_lsq=lsq.lambda_sq.tolist(),
        lsq_residual=lsq.residual,
        recovered_rank=recovery.recovered_rank,
        floor=recovery.log.floor,
        asymmetry_diag=rec.asymmetry,
        null_subspace=recovery.null_subspace_report(),
        timings=stages.timings,
        lambda_sq_true=None if truth is None else (truth.lambdas_for(basis.n_modes) ** 2).tolist(),
        lambda_sq_lsq_stderr=None if se is None else se.tolist(),
        uncertainty_method=method,
        semigroup_error=sg_err,
        semigroup_stderr_norm=sg_se,
        provenance=data.provenance,
    )


def end_to_end(config, source: str = "ode") -> InversionReport:
    """Generate data for ``config`` (exact or Monte Carlo) and invert it."""
    stages = _Stages()
    data, mc = stages.run("generate", generate_dataset, config, source, None, source == "mc")
    return invert_dataset(data, config.basis_spec(), config.inversion.floor, config.echo(),
                          mc, config.q_spec(), stages, source)
