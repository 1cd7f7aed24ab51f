import json

import numpy as np
import pytest

from spdeinv.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_basis_command(tmp_path, capsys):
    assert run("basis", "--out", tmp_path, "--set", "basis.K=4") == 0
    lines = (tmp_path / "eigenvalues.csv").read_text().splitlines()
    assert lines == ["k,alpha_k", "1,1", "2,4", "3,9", "4,16"]
    chk = json.loads((tmp_path / "checksum.json").read_text())
    assert chk["triple_sha256"] in capsys.readouterr().out
    assert (tmp_path / "manifest.json").exists() and (tmp_path / "config.json").exists()


def test_basis_two_dimensional_table(tmp_path):
    assert run("basis", "--out", tmp_path, "--set", "basis.dim=2", "--set", "basis.K=2") == 0
    lines = (tmp_path / "eigenvalues.csv").read_text().splitlines()
    assert lines[0] == "k,k1,k2,alpha_k" and lines[2] == "2,1,2,5"


def test_theta_zero_noise_entry(tmp_path):
    assert run("theta", "--out", tmp_path, "--set", "basis.K=3", "--set", "q.lambdas=[0,0,0]") == 0
    F = np.loadtxt(tmp_path / "theta_1_1.csv", delimiter=",")
    assert F[0, 0] == pytest.approx(4 * np.exp(-0.2), rel=1e-14)


def test_theta_invert_round_trip(tmp_path, capsys):
    d = tmp_path / "d"
    assert run("theta", "--out", d, "--set", "basis.K=4") == 0
    assert run("invert", "--dataset", d, "--out", tmp_path / "r", "--set", "basis.K=4") == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    truth = np.array(rep["lambda_sq_true"])
    assert np.all(np.abs(np.array(rep["lambda_sq_lsq"]) - truth) <= 1e-6 * truth)
    assert rep["schema_version"] == 1


def test_invert_zero_noise_dataset(tmp_path):
    d = tmp_path / "d"
    assert run("theta", "--out", d, "--set", "basis.K=3", "--set", "q.lambdas=[0,0,0]") == 0
    assert run("invert", "--dataset", d, "--out", tmp_path / "r", "--set", "basis.K=3") == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert max(rep["lambda_sq_lsq"]) <= 1e-9


def test_invert_missing_pair_exit_code(tmp_path, capsys):
    d = tmp_path / "d"
    run("theta", "--out", d, "--set", "basis.K=3")
    (d / "theta_1_2.csv").unlink()
    assert run("invert", "--dataset", d, "--out", tmp_path / "r", "--set", "basis.K=3") == 2
    assert "1:2" in capsys.readouterr().err


def test_mc_theta_rerun_is_bit_identical(tmp_path):
    args = ["--source", "mc", "--set", "basis.K=3", "--set", "mc.M=300", "--seed", 5]
    assert run("theta", "--out", tmp_path / "a", *args) == 0
    assert run("theta", "--out", tmp_path / "b", *args) == 0
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert len(files) == 12
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seeds"] == {"master_seed": 5}


def test_numerical_failure_exit_code(tmp_path, capsys):
    code = run("invert", "--source", "mc", "--out", tmp_path, "--set", "basis.K=4", "--set", "mc.M=200",
               "--set", "times.t0=2.0", "--set", "scheme.dt=0.01")
    assert code == 3
    assert "recover" in capsys.readouterr().err


def test_usage_errors(tmp_path):
    assert run("basis", "--out", tmp_path, "--set", "basis.bogus=1") == 2
    assert run("theta", "--out", tmp_path, "--pairs", "1-2") == 2
    with pytest.raises(SystemExit) as info:
        run("nonsense")
    assert info.value.code == 2


def test_verify_passes_and_fault_fails(tmp_path, capsys):
    assert run("verify", "--no-weak", "--out", tmp_path / "ok", "--set", "basis.K=4") == 0
    summ = json.loads((tmp_path / "ok" / "verify.json").read_text())
    assert summ["passed"]
    law = next(r for r in summ["results"] if r["name"] == "semigroup_law")
    assert law["value"] <= 1e-10
    assert run("verify", "--no-weak", "--inject-fault", "asymmetric_T", "--out", tmp_path / "bad",
               "--set", "basis.K=4") == 1
    bad = json.loads((tmp_path / "bad" / "verify.json").read_text())
    assert "triple_symmetry" in bad["failed"]


def test_converge_dt_zero_noise(tmp_path):
    assert run("converge", "--sweep", "dt=0.01,0.005", "--out", tmp_path, "--source", "ode",
               "--set", "basis.K=3", "--set", "q.lambdas=[0,0,0]", "--set", "mc.M=50") == 0
    lines = (tmp_path / "converge_dt.csv").read_text().splitlines()
    assert lines[0].startswith("parameter,value,forward_error")
    for line in lines[1:]:
        assert float(line.split(",")[2]) <= 1e-14
