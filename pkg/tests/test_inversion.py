import numpy as np
import pytest

from spdeinv.basis import BasisSpec
from spdeinv.config import load_config
from spdeinv.covariance import assemble_generator, exact_dataset_matrices
from spdeinv.errors import ContractError, CoverageError, NumericalError, SpectralPositivityError
from spdeinv.forward import MCEnsemble, SdeScheme, mc_theta_pairs
from spdeinv.inversion import (
    ThetaDataset,
    end_to_end,
    extract_lambdas_lsq,
    extract_lambdas_pairing,
    generate_dataset,
    indicator_residual,
    invert_dataset,
    lambda_jacobian,
    propagate_diagonal,
    propagate_paths,
    reconstruct_semigroup,
    recover_generator,
)
from spdeinv.noise import QSpec
from spdeinv.spectral import semigroup_matrix
from spdeinv.tensor import sym_pairs


def exact_data(K, q, t0):
    gen = assemble_generator(BasisSpec(1, K), q)
    mats = exact_dataset_matrices(gen, t0)
    return ThetaDataset(t0, K, {p: F.coeffs for p, F in mats.items()})


def test_exact_round_trip_k6():
    q = QSpec.power(0.5, 2.0, 6)
    data = exact_data(6, q, 0.1)
    rep = invert_dataset(data, BasisSpec(1, 6), truth=q)
    truth = q.lambdas_for(6) ** 2
    assert np.all(np.abs(np.array(rep.lambda_sq_lsq) - truth) <= 1e-6 * truth)
    assert rep.recovered_rank == 21
    assert rep.semigroup_error <= 1e-12


def test_zero_noise_recovers_zero():
    data = exact_data(4, QSpec.zeros(4), 0.1)
    rep = invert_dataset(data, BasisSpec(1, 4))
    assert max(rep.lambda_sq_lsq) <= 1e-9


def test_reconstruction_matches_semigroup():
    q = QSpec.power(0.5, 2.0, 4)
    gen = assemble_generator(BasisSpec(1, 4), q)
    rec = reconstruct_semigroup(exact_data(4, q, 0.1))
    ref = semigroup_matrix(gen.decomposition, 0.1)
    assert np.linalg.norm(rec.M_rec - ref) <= 1e-14 * np.linalg.norm(ref)


def test_coverage_error_names_missing_pair():
    data = exact_data(3, QSpec.power(0.5, 2.0, 3), 0.1)
    del data.entries[(1, 3)]
    with pytest.raises(CoverageError, match="1:3"):
        reconstruct_semigroup(data)


def test_pairs_are_normalised_and_order_free():
    q = QSpec.power(0.5, 2.0, 3)
    data = exact_data(3, q, 0.1)
    swapped = ThetaDataset(0.1, 3, {(j, i): F for (i, j), F in reversed(list(data.entries.items()))})
    assert set(swapped.entries) == set(data.entries)
    assert np.array_equal(reconstruct_semigroup(swapped).M_rec, reconstruct_semigroup(data).M_rec)


def test_contract_checks():
    with pytest.raises(ContractError):
        ThetaDataset(0.0, 2, {})
    with pytest.raises(ContractError):
        ThetaDataset(0.1, 2, {(1, 1): np.array([[1.0, 2.0], [0.0, 1.0]])})
    data = exact_data(2, QSpec.zeros(2), 0.1)
    data.entries[(1, 2)] = data.entries[(1, 2)] + 1e-3 * np.eye(2)
    with pytest.raises(ContractError):
        reconstruct_semigroup(data)


def test_scale_equivariance():
    q = QSpec.power(0.5, 2.0, 5)
    b = BasisSpec(1, 5)
    a = invert_dataset(exact_data(5, q, 0.1), b)
    c = invert_dataset(exact_data(5, q.scaled(3.0), 0.1), b)
    assert np.allclose(c.lambda_sq_lsq, 9 * np.array(a.lambda_sq_lsq), rtol=1e-8, atol=0)


def test_rank_tracks_floor_as_t0_grows():
    b = BasisSpec(1, 6)
    q = QSpec.power(0.5, 2.0, 6)
    ranks = []
    for t0 in (0.05, 0.2, 0.5, 1.0, 2.0):
        rep = invert_dataset(exact_data(6, q, t0), b)
        ranks.append(rep.recovered_rank)
        assert rep.null_subspace["dimension"] == 21 - rep.recovered_rank
    assert all(y <= x for x, y in zip(ranks, ranks[1:]))
    assert ranks[-1] < ranks[0]


def test_pairing_single_mode_and_bound():
    for K in (4, 8):
        b = BasisSpec(1, K)
        gen = assemble_generator(b, QSpec(lambdas=(1.0,)))
        res = extract_lambdas_pairing(gen.HQ, b)
        err = abs(res.lambda_sq[0] - 1.0)
        assert err <= res.error_bound[0]
        assert err <= res.chi_residual
    res_h, res_u = indicator_residual(BasisSpec(1, 2000))
    assert res_h < 0.05 and res_u < 0.2


def test_lsq_rank_and_residual():
    b = BasisSpec(1, 4)
    gen = assemble_generator(b, QSpec.power(0.5, 2.0, 4))
    r = extract_lambdas_lsq(gen.HQ, b)
    assert r.design_rank == 4 and r.residual <= 1e-14
    with pytest.raises(NumericalError):
        extract_lambdas_lsq(gen.HQ, b, design=np.zeros((4, 10, 10)))


def test_jacobian_matches_finite_differences():
    K, t0 = 3, 0.1
    b = BasisSpec(1, K)
    q = QSpec.power(0.5, 1.0, K)
    data = exact_data(K, q, t0)
    rec = reconstruct_semigroup(data)
    recovery = recover_generator(rec.M_rec, t0, b)
    lsq = extract_lambdas_lsq(recovery.HQ_rec, b)
    J = lambda_jacobian(recovery, b, t0)
    pairs = sym_pairs(K)
    h = 1e-6
    for bslot, (pi, pj) in enumerate(pairs):
        for aslot, (i, j) in enumerate(pairs):
            vals = []
            for sgn in (1, -1):
                F = data.entries[(pi + 1, pj + 1)].copy()
                F[i, j] += sgn * h
                if i != j:
                    F[j, i] += sgn * h
                d2 = ThetaDataset(t0, K, dict(data.entries), {"kind": "monte_carlo"})
                d2.entries[(pi + 1, pj + 1)] = F
                r2 = recover_generator(reconstruct_semigroup(d2).M_rec, t0, b)
                vals.append(extract_lambdas_lsq(r2.HQ_rec, b).lambda_sq)
            fd = (vals[0] - vals[1]) / (2 * h)
            assert np.allclose(J[:, aslot, bslot], fd, atol=1e-6, rtol=1e-5)


def test_mc_uncertainty_paths_vs_diagonal():
    K, t0 = 3, 0.1
    b = BasisSpec(1, K)
    q = QSpec.power(0.5, 2.0, K)
    ens = MCEnsemble(3000, 12, SdeScheme("exponential_euler", 1e-3))
    pairs = [(i + 1, j + 1) for i, j in sym_pairs(K)]
    res = mc_theta_pairs(pairs, t0, b, q, ens, keep_states=True)
    data = ThetaDataset(t0, K, res.theta, {"kind": "monte_carlo"}, res.stderr)
    recovery = recover_generator(reconstruct_semigroup(data).M_rec, t0, b)
    lsq = extract_lambdas_lsq(recovery.HQ_rec, b)
    J = lambda_jacobian(recovery, b, t0)
    per_path = propagate_paths(J, res, pairs)
    diag = propagate_diagonal(J, data)
    assert np.all(per_path > 0) and np.all(diag > 0)
    assert np.all(np.abs(np.array(lsq.lambda_sq) - q.lambdas_for(K) ** 2) <= 5 * per_path)


def test_negative_spectrum_from_noisy_data_raises_with_stage():
    cfg = load_config(overrides={"basis.K": 4, "mc.M": 200, "times.t0": 2.0, "scheme.dt": 0.01})
    with pytest.raises(SpectralPositivityError) as info:
        end_to_end(cfg, "mc")
    assert info.value.stage == "recover"


def test_end_to_end_reports_timings():
    cfg = load_config(overrides={"basis.K": 4})
    rep = end_to_end(cfg, "ode")
    assert set(rep.timings) >= {"generate", "reconstruct", "recover", "extract_lsq", "extract_pairing"}
    assert rep.config["basis"]["K"] == 4
    assert rep.to_dict()["provenance"] == {"kind": "exact"}


def test_generate_dataset_rejects_large_k_obs():
    cfg = load_config(overrides={"basis.K": 3, "inversion.K_obs": 4})
    with pytest.raises(ContractError):
        generate_dataset(cfg, "ode")
