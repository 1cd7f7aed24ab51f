"""Property suites of every module, run against one configuration.

Each check returns a :class:`PropertyResult` carrying the measured value and
its threshold, so the summary is machine readable. ``fault="asymmetric_T"``
corrupts one triple-product entry before anything else runs; it is a
negative control showing that the symmetry property can fail.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .basis import BasisSpec, composite_gauss_legendre
from .covariance import (
    a0_diagonal,
    assemble_generator,
    evolve_theta,
    exact_dataset_matrices,
    hq_norm_check,
)
from .forward import Field, MCEnsemble, SdeScheme, mc_theta, simulate_path
from .inversion import (
    ThetaDataset,
    extract_lambdas_lsq,
    recover_generator,
    reconstruct_semigroup,
)
from .noise import QSpec, lambda_gamma
from .spectral import decompose, loglog_slope, semigroup_matrix, spectral_log, trotter_check
from .tensor import TensorField

FAULTS = ("asymmetric_T",)


@dataclass
class PropertyResult:
    name: str
    module: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""
    monitored: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _leq(name, module, value, threshold, detail="", monitored=False):
    value = float(value)
    return PropertyResult(name, module, bool(value <= threshold), value, float(threshold), detail, monitored)


def _rel(a, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


def corrupted_tensor(basis: BasisSpec) -> np.ndarray:
    T = np.array(basis.triple_tensor)
    T[0, 0, min(2, T.shape[2] - 1)] += 1e-3
    return T


# --- spectral basis -------------------------------------------------------


def basis_properties(basis: BasisSpec, T=None):
    K1 = BasisSpec(1, min(basis.K, 16))
    x, w = composite_gauss_legendre()
    E = np.stack([K1.eval_basis(k, x) for k in range(1, K1.K + 1)])
    gram = (E * w) @ E.T
    out = [_leq("orthonormality", "basis", np.abs(gram - np.eye(K1.K)).max(), 1e-12,
                f"256-node Gauss-Legendre, K={K1.K}")]

    T = basis.triple_tensor if T is None else T
    asym = max(np.abs(T - T.transpose(p)).max() for p in itertools.permutations(range(3)))
    out.append(_leq("triple_symmetry", "basis", asym, 0.0, "max over index permutations"))

    ks = basis.multi_indices
    parity_even = np.zeros(T.shape, bool)
    for c in range(basis.dim):
        kc = ks[:, c]
        parity_even |= ((kc[:, None, None] + kc[None, :, None] + kc[None, None, :]) % 2) == 0
    out.append(_leq("triple_parity", "basis", np.abs(T[parity_even]).max(initial=0.0), 0.0,
                    "entries with an even index sum in some coordinate"))

    quad = np.einsum("kx,mx,ix,x->kmi", E, E, E, w)
    T1 = K1.triple_tensor_1d
    out.append(_leq("triple_vs_quadrature", "basis", np.abs(T1 - quad).max(), 1e-12,
                    f"1-D tensor, K={K1.K}"))
    return out


# --- noise model ----------------------------------------------------------


def noise_properties(basis: BasisSpec, q: QSpec):
    gmax = basis.dim / 4.0
    g = np.linspace(0.0, gmax, 9, endpoint=False)
    out = []
    base = lambda_gamma(q, basis, 0.1 * gmax)
    doubled = lambda_gamma(q.scaled(2.0), basis, 0.1 * gmax)
    out.append(_leq("lambda_gamma_additivity", "noise", abs(doubled - 4.0 * base), 0.0,
                    "Lambda(2 lambda) - 4 Lambda(lambda)"))
    worst = -np.inf
    vol = basis.domain_measure
    for g1, g2 in itertools.combinations(g[::-1], 2):
        # g1 > g2 here; Holder on a finite-measure domain bounds the smaller exponent's norm
        p1 = np.inf if g1 == 0 else basis.dim / (2 * g1)
        p2 = np.inf if g2 == 0 else basis.dim / (2 * g2)
        C = vol ** (2 * ((0 if p1 == np.inf else 1 / p1) - (0 if p2 == np.inf else 1 / p2)))
        lo = lambda_gamma(q, basis, g2)
        worst = max(worst, lambda_gamma(q, basis, g1) / (C * lo) if lo else 0.0)
    out.append(_leq("lambda_gamma_monotone", "noise", worst, 1.0 + 1e-12,
                    "max Lambda_g1 / (C Lambda_g2) over g1 > g2"))
    return out


# --- forward SPDE ---------------------------------------------------------


def forward_properties(basis: BasisSpec, q: QSpec, t0: float, master_seed: int, monitor_weak=True):
    out = []
    n = basis.n_modes
    u0 = Field(np.r_[1.0, 1.0, np.zeros(n - 2)] if n >= 2 else np.ones(1))
    zero = QSpec.zeros(n)
    exact = np.exp(-basis.alphas * t0) * u0.coeffs
    err = 0.0
    for dt in (1e-2, 1e-3):
        res = simulate_path(u0, t0, basis, zero, SdeScheme("exponential_euler", dt), master_seed)
        err = max(err, np.abs(res.final.coeffs - exact).max() / np.abs(exact).max())
    out.append(_leq("zero_noise_exactness", "forward", err, 1e-14, "dt in {1e-2, 1e-3}"))

    ens = MCEnsemble(256, master_seed, SdeScheme("exponential_euler", 1e-3))
    a = mc_theta(u0, t0, basis, q, ens)
    b = mc_theta(u0, t0, basis, q, ens)
    same = np.array_equal(a.theta_hat, b.theta_hat) and np.array_equal(a.stderr, b.stderr)
    out.append(_leq("seed_determinism", "forward", 0.0 if same else 1.0, 0.0, "bitwise rerun, M=256"))
    asym = np.abs(a.theta_hat - a.theta_hat.T).max()
    neg = max(0.0, -np.diag(a.theta_hat).min())
    out.append(_leq("theta_hat_symmetry", "forward", asym, 0.0))
    out.append(_leq("theta_hat_diag_nonnegative", "forward", neg, 0.0))

    if monitor_weak:
        gen = assemble_generator(basis, q)
        ref = evolve_theta(gen, TensorField.outer(u0.coeffs), t0).coeffs
        errs = []
        dts = (2e-2, 1e-2, 5e-3)
        for dt in dts:
            r = mc_theta(u0, t0, basis, q, MCEnsemble(4000, master_seed, SdeScheme("euler_maruyama", dt)))
            errs.append(np.abs(r.theta_hat - ref).max())
        out.append(PropertyResult("weak_error_decay", "forward", True, float(errs[-1]), float("nan"),
                                  "euler_maruyama max error at dt=" + ", ".join(f"{d:g}:{e:.3e}" for d, e in zip(dts, errs)),
                                  monitored=True))
    return out


# --- covariance ODE -------------------------------------------------------


def covariance_properties(basis: BasisSpec, q: QSpec, t0: float, seed: int, T=None):
    out = []
    n = basis.n_modes
    gen = assemble_generator(basis, q, T)
    rng = np.random.default_rng(seed)

    def rand_sym():
        A = rng.standard_normal((n, n))
        return TensorField(A + A.T)

    X, Y = rand_sym(), rand_sym()
    a, b = 0.7, -1.3
    lhs = evolve_theta(gen, X * a + Y * b, t0).coeffs
    rhs = a * evolve_theta(gen, X, t0).coeffs + b * evolve_theta(gen, Y, t0).coeffs
    out.append(_leq("linearity", "covariance", np.abs(lhs - rhs).max() / np.abs(rhs).max(), 1e-12))

    worst = 0.0
    for s, t in itertools.product((0.05, 0.1), repeat=2):
        two = evolve_theta(gen, evolve_theta(gen, X, s), t).coeffs
        one = evolve_theta(gen, X, s + t).coeffs
        worst = max(worst, np.abs(two - one).max() / np.abs(one).max())
    out.append(_leq("semigroup_law", "covariance", worst, 1e-10, "s, t in {0.05, 0.1}"))

    G = rng.standard_normal((n, n))
    psd = TensorField(G @ G.T)
    low = min(np.linalg.eigvalsh(evolve_theta(gen, psd, t).coeffs).min() for t in (0.01, t0, 1.0))
    scale = np.linalg.eigvalsh(psd.coeffs).max()
    out.append(_leq("psd_preservation", "covariance", max(0.0, -low / scale), 1e-10,
                    "relative negative eigenvalue at t in {0.01, t0, 1}"))

    heat = assemble_generator(basis, QSpec.zeros(n))
    ts = np.linspace(0.0, 1.0, 41)
    norms = [evolve_theta(heat, X, t).u_norm() for t in ts]
    out.append(_leq("zero_noise_dissipation", "covariance", max(0.0, np.diff(norms).max()), 0.0,
                    "largest increase of the U-norm along t"))

    out.append(smoothing_property(basis, heat, rng))

    for g1, g2 in ((0.0, 0.0), (0.2, 0.2)):
        if (g1 + g2) / 4 < basis.dim / 4:
            nc = hq_norm_check(basis, q, g1, g2, gen)
            out.append(PropertyResult(f"hq_norm_bound[{g1},{g2}]", "covariance", nc.holds,
                                      nc.operator_norm, nc.bound))
    return out


def smoothing_property(basis, heat, rng, n_draws=8):
    """``t^(1/2) ||e^{A0 t} x||_{U^1} / ||x||_U`` on a coarse and a refined
    time grid over ``[1e-3, 1]``; the fitted constant must not grow."""
    alphas = basis.alphas
    n = basis.n_modes
    draws = []
    for _ in range(n_draws):
        A = rng.standard_normal((n, n))
        draws.append(TensorField(A + A.T))

    def fitted(ts):
        return max(np.sqrt(t) * evolve_theta(heat, x, t).fractional_norm(alphas, 1.0) / x.u_norm()
                   for t in ts for x in draws)

    coarse = fitted(np.geomspace(1e-3, 1.0, 7))
    fine = fitted(np.geomspace(1e-3, 1.0, 49))
    ceiling = (2 * np.e) ** -0.5
    return PropertyResult("smoothing_estimate", "covariance", bool(fine <= 1.1 * coarse and fine <= ceiling),
                          fine / coarse, 1.1, f"C coarse={coarse:.6g}, C fine={fine:.6g}, sup bound={ceiling:.6g}")


# --- spectral calculus ----------------------------------------------------


def spectral_properties(basis: BasisSpec, q: QSpec, t0: float, T=None):
    out = []
    gen = assemble_generator(basis, q, T)
    L = gen.L
    dec = decompose(gen)
    out.append(_leq("reconstruction", "spectral", _rel(dec.reconstruct(), L), 1e-10, "relative Frobenius"))

    m = 6
    half = semigroup_matrix(dec, t0 / 2**m)
    for _ in range(m):
        half = half @ half
    out.append(_leq("repeated_squaring", "spectral", _rel(half, semigroup_matrix(dec, t0)), 1e-9,
                    f"2^{m} squarings"))

    window = np.exp(dec.sigmas.min() * t0) > 1e-300
    if window:
        lg = spectral_log(semigroup_matrix(dec, t0), t0, floor=0.0)
        out.append(_leq("log_round_trip", "spectral", _rel(lg.L_rec, L), 1e-8, "floor = 0"))

    HQn = np.linalg.norm(gen.HQ, 2)
    s0 = np.sort(a0_diagonal(basis))[::-1]
    worst = 0.0
    prev = None
    for s in (1.0, 0.99):
        sig = decompose(assemble_generator(basis, q.scaled(s), T)).sigmas
        worst = max(worst, np.abs(sig - s0).max() / (s * s * HQn) if HQn else 0.0)
        if prev is not None and HQn:
            worst = max(worst, np.abs(sig - prev).max() / ((1 - s * s) * HQn))
        prev = sig
    out.append(_leq("eigenvalue_continuity", "spectral", worst, 1.0 + 1e-9,
                    "Weyl ratio for scalings 1 and 0.99"))

    rows = trotter_check(basis, q, 0.1, [8, 16, 32, 64, 128])
    errs = [e for _, e in rows]
    dec_ok = all(b < a for a, b in zip(errs, errs[1:]))
    slope = loglog_slope([n for n, _ in rows], errs) if min(errs) > 0 else float("nan")
    out.append(PropertyResult("trotter_order", "spectral", bool(dec_ok and abs(slope + 1) <= 0.15),
                              slope, 0.15, "slope of log error vs log n, target -1"))
    return out


# --- inversion ------------------------------------------------------------


def _invert(basis, q, t0, T=None, order=None):
    gen = assemble_generator(basis, q, T)
    mats = exact_dataset_matrices(gen, t0)
    keys = list(mats) if order is None else order(list(mats))
    data = ThetaDataset(t0, basis.n_modes, {k: mats[k].coeffs for k in keys})
    rec = reconstruct_semigroup(data)
    recovery = recover_generator(rec.M_rec, t0, basis)
    return rec, recovery, extract_lambdas_lsq(recovery.HQ_rec, basis)


def inversion_properties(basis: BasisSpec, q: QSpec, t0: float, T=None):
    out = []
    truth = q.lambdas_for(basis.n_modes) ** 2
    rec, recovery, lsq = _invert(basis, q, t0, T)
    scale = max(np.abs(truth).max(), 1e-300)
    out.append(_leq("round_trip", "inversion", np.abs(lsq.lambda_sq - truth).max() / scale, 1e-6,
                    "max |lambda^2 error| / max lambda^2"))

    c = 0.5
    _, _, lsq_c = _invert(basis, q.scaled(c), t0, T)
    denom = np.abs(lsq.lambda_sq).max()
    val = np.abs(lsq_c.lambda_sq - c**2 * lsq.lambda_sq).max() / denom if denom else 0.0
    out.append(_leq("scale_equivariance", "inversion", val, 1e-8, f"c = {c}"))

    rec_r, _, _ = _invert(basis, q, t0, T, order=lambda keys: keys[::-1])
    out.append(_leq("order_invariance", "inversion", np.abs(rec_r.M_rec - rec.M_rec).max(), 0.0,
                    "reversed insertion order"))

    ranks, exact_counts = [], []
    for t in (0.05, 0.1, 0.2, 0.4, 0.8, 1.6):
        M = semigroup_matrix(decompose(assemble_generator(basis, q, T)), t)
        r = recover_generator(M, t, basis)
        ranks.append(r.recovered_rank)
        exact_counts.append(int(np.sum(r.log.mus >= r.log.floor)))
    monotone = all(b <= a for a, b in zip(ranks, ranks[1:]))
    agree = ranks == exact_counts
    out.append(PropertyResult("rank_non_increasing", "inversion", bool(monotone and agree), float(ranks[-1]),
                              float(ranks[0]), "recovered_rank over t0 in {0.05..1.6}: " + ",".join(map(str, ranks))))
    return out


def run_suite(config, fault: str | None = None, monitor_weak: bool = True):
    """All property suites for ``config``; returns a list of results."""
    basis, q, t0 = config.basis_spec(), config.q_spec(), config.times.t0
    seed = config.mc.master_seed
    T = None
    if fault is not None:
        if fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
        T = corrupted_tensor(basis)
    results = []
    results += basis_properties(basis, T)
    results += noise_properties(basis, q)
    results += forward_properties(basis, q, t0, seed, monitor_weak)
    results += covariance_properties(basis, q, t0, seed, T)
    results += spectral_properties(basis, q, t0, T)
    results += inversion_properties(basis, q, t0, T)
    return results


def summary(results) -> dict:
    failed = [r.name for r in results if not r.passed]
    return {"passed": not failed, "failed": failed, "results": [r.to_dict() for r in results]}
