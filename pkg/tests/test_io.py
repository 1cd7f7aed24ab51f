import json

import numpy as np
import pytest

from spdeinv import io as sio
from spdeinv.covariance import assemble_generator, exact_dataset_matrices
from spdeinv.basis import BasisSpec
from spdeinv.errors import CoverageError, DataError
from spdeinv.inversion import ThetaDataset
from spdeinv.noise import QSpec
from spdeinv.tensor import TensorField


def dataset(K=3, stderr=False):
    q = QSpec.power(0.5, 2.0, K)
    mats = exact_dataset_matrices(assemble_generator(BasisSpec(1, K), q), 0.1)
    entries = {p: F.coeffs for p, F in mats.items()}
    se = {p: np.abs(F) * 1e-3 for p, F in entries.items()} if stderr else None
    prov = {"kind": "monte_carlo", "M": 10, "master_seed": 3} if stderr else {"kind": "exact"}
    return ThetaDataset(0.1, K, entries, prov, se, q.to_dict())


def test_matrix_csv_is_lossless(tmp_path):
    A = np.random.default_rng(0).standard_normal((4, 4)) * 10.0 ** np.arange(-8, 8, 4)
    sio.write_matrix_csv(tmp_path / "a.csv", A)
    assert np.array_equal(sio.read_matrix_csv(tmp_path / "a.csv"), A)


def test_tensor_field_sidecar(tmp_path):
    F = TensorField.outer(np.array([1.0, 1.0 / 3.0]))
    sio.write_tensor_field(tmp_path / "f.csv", F, 0.1, {"lambdas": [1.0]})
    G, meta = sio.read_tensor_field(tmp_path / "f.csv")
    assert np.array_equal(G.coeffs, F.coeffs)
    assert meta["K"] == 2 and meta["t"] == 0.1 and meta["schema_version"] == sio.SCHEMA_VERSION


@pytest.mark.parametrize("stderr", [False, True])
def test_dataset_round_trip(tmp_path, stderr):
    data = dataset(stderr=stderr)
    sio.write_dataset(tmp_path / "d", data, {"basis": {"K": 3}})
    back = sio.read_dataset(tmp_path / "d")
    assert back.t0 == data.t0 and back.provenance == data.provenance
    for p in data.entries:
        assert np.array_equal(back.entries[p], data.entries[p])
        if stderr:
            assert np.array_equal(back.stderr[p], data.stderr[p])
    index = json.loads((tmp_path / "d" / "index.json").read_text())
    assert index["schema_version"] == sio.SCHEMA_VERSION
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["package_version"] and manifest["config"] == {"basis": {"K": 3}}


def test_missing_file_is_a_coverage_error_naming_file(tmp_path):
    sio.write_dataset(tmp_path, dataset())
    (tmp_path / "theta_2_3.csv").unlink()
    with pytest.raises(CoverageError, match="theta_2_3.csv") as info:
        sio.read_dataset(tmp_path)
    assert info.value.missing == [(2, 3)]


def test_format_errors_name_file(tmp_path):
    sio.write_dataset(tmp_path, dataset())
    (tmp_path / "theta_1_2.csv").write_text("1,2\n3\n")
    with pytest.raises(DataError, match="theta_1_2.csv"):
        sio.read_dataset(tmp_path)
    idx = json.loads((tmp_path / "index.json").read_text())
    idx["schema_version"] = 99
    (tmp_path / "index.json").write_text(json.dumps(idx))
    with pytest.raises(DataError, match="schema_version"):
        sio.read_dataset(tmp_path)
    with pytest.raises(DataError, match="index"):
        sio.read_dataset(tmp_path / "nowhere")


def test_spectrum_csv(tmp_path):
    dec = assemble_generator(BasisSpec(1, 2), QSpec.zeros(2)).decomposition
    sio.write_spectrum_csv(tmp_path / "s.csv", dec)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "index,sigma,multiplicity_group"
    assert lines[1:] == ["1,-2,1", "2,-5,2", "3,-8,3"]
