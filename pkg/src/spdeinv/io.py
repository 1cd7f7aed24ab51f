"""On-disk formats: CSV tables at 17 significant digits plus JSON metadata.

Dataset directory layout (schema version 1)::

    index.json        {"schema_version", "t0", "n", "pairs": [[i, j], ...],
                       "provenance", "lambda_spec"}
    manifest.json     config echo, seeds, package version
    theta_<i>_<j>.csv one symmetric n x n matrix per pair
    stderr_<i>_<j>.csv  Monte Carlo only, same shape

Every CSV is comma separated without a header unless noted; that keeps
``numpy.loadtxt`` round trips lossless.
"""

from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CoverageError, DataError
from .inversion import InversionReport, ThetaDataset
from .tensor import TensorField

SCHEMA_VERSION = 1
FLOAT_FMT = "%.17g"


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def write_matrix_csv(path, A) -> Path:
    path = Path(path)
    np.savetxt(path, np.atleast_2d(np.asarray(A, dtype=float)), fmt=FLOAT_FMT, delimiter=",")
    return path


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: unreadable matrix CSV ({exc})") from exc


def write_table_csv(path, header, rows) -> Path:
    """Header line plus rows; floats at 17 digits, ints and strings as is."""

    def cell(v):
        if isinstance(v, (bool, np.bool_)):
            return str(bool(v)).lower()
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return FLOAT_FMT % v
        return "" if v is None else str(v)

    path = Path(path)
    lines = [",".join(header)] + [",".join(cell(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_tensor_field(path, field: TensorField, t: float, lambda_spec=None, provenance=None) -> Path:
    """Matrix CSV plus a ``.json`` sidecar with ``K``, ``t`` and provenance."""
    path = write_matrix_csv(path, field.coeffs)
    write_json(path.with_suffix(".json"), {
        "schema_version": SCHEMA_VERSION,
        "K": field.n,
        "t": t,
        "lambda_spec": lambda_spec,
        "provenance": provenance or {"kind": "exact"},
    })
    return path


def read_tensor_field(path) -> tuple[TensorField, dict]:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    return TensorField(read_matrix_csv(path)), meta


def manifest(config_echo=None, **extra) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": config_echo,
    }
    out.update(extra)
    return out


def theta_filename(i, j) -> str:
    return f"theta_{i}_{j}.csv"


def stderr_filename(i, j) -> str:
    return f"stderr_{i}_{j}.csv"


def write_dataset(directory, data: ThetaDataset, config_echo=None, **manifest_extra) -> Path:
    """Write ``data`` in the dataset layout; returns the directory."""
    directory = ensure_dir(directory)
    pairs = sorted(data.entries)
    for i, j in pairs:
        write_matrix_csv(directory / theta_filename(i, j), data.entries[(i, j)])
        if data.stderr is not None:
            write_matrix_csv(directory / stderr_filename(i, j), data.stderr[(i, j)])
    write_json(directory / "index.json", {
        "schema_version": SCHEMA_VERSION,
        "t0": data.t0,
        "n": data.n,
        "pairs": [list(p) for p in pairs],
        "provenance": data.provenance,
        "lambda_spec": data.lambda_spec,
        "has_stderr": data.stderr is not None,
    })
    seeds = {k: data.provenance[k] for k in ("master_seed",) if k in data.provenance}
    write_json(directory / "manifest.json", manifest(config_echo, seeds=seeds, **manifest_extra))
    return directory


def read_dataset(directory) -> ThetaDataset:
    """Load a dataset directory, naming the offending file on any problem.

    Pairs listed in the index whose CSV is absent, and pairs absent from the
    index altogether, are reported together as a :class:`CoverageError`.
    """
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise DataError(f"{index_path}: dataset index not found")
    index = read_json(index_path)
    version = index.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{index_path}: unsupported schema_version {version!r}")
    try:
        t0, n = float(index["t0"]), int(index["n"])
        listed = [tuple(int(v) for v in p) for p in index["pairs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{index_path}: malformed index ({exc})") from exc
    has_se = bool(index.get("has_stderr", False))
    entries, stderr, missing = {}, {} if has_se else None, []
    for i, j in listed:
        f = directory / theta_filename(i, j)
        if not f.exists():
            missing.append((i, j))
            continue
        F = read_matrix_csv(f)
        if F.shape != (n, n):
            raise DataError(f"{f}: expected a {n}x{n} matrix, got {F.shape[0]}x{F.shape[1]}")
        if not np.array_equal(F, F.T):
            raise DataError(f"{f}: matrix is not symmetric")
        entries[(i, j)] = F
        if has_se:
            fs = directory / stderr_filename(i, j)
            if not fs.exists():
                raise DataError(f"{fs}: stderr file missing for Monte Carlo pair {i}:{j}")
            stderr[(i, j)] = read_matrix_csv(fs)
    have = set(entries)
    missing += [(i + 1, j + 1) for i in range(n) for j in range(i, n)
                if (i + 1, j + 1) not in have and (i + 1, j + 1) not in missing]
    if missing:
        missing.sort()
        files = ", ".join(theta_filename(i, j) for i, j in missing[:5])
        err = CoverageError(missing)
        err.args = (f"{err.args[0]} in {directory} (expected file(s): {files})",)
        raise err
    return ThetaDataset(t0, n, entries, index.get("provenance") or {"kind": "exact"},
                        stderr, index.get("lambda_spec"))


def write_spectrum_csv(path, dec) -> Path:
    """``index, sigma, multiplicity_group`` per eigenvalue (descending)."""
    labels = dec.group_labels()
    rows = [(k + 1, float(s), int(labels[k]) + 1) for k, s in enumerate(dec.sigmas)]
    return write_table_csv(path, ["index", "sigma", "multiplicity_group"], rows)


def write_report(path, report: InversionReport) -> Path:
    d = report.to_dict()
    d["schema_version"] = SCHEMA_VERSION
    return write_json(path, d)
