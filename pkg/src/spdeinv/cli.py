"""``spdeinv`` command-line driver.

Exit codes: 0 success, 1 property failure, 2 usage / configuration / data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pydantic
import yaml

from . import __version__
from . import io as sio
from .config import load_config
from .converge import HEADER, parse_sweep, rows_as_tuples, run_sweep, stderr_slope
from .covariance import assemble_generator
from .errors import ContractError, NumericalError, SpdeInvError
from .inversion import end_to_end, generate_dataset, invert_dataset
from .noise import QSpec
from .verify import FAULTS, run_suite, summary

log = logging.getLogger("spdeinv")

EXIT_OK, EXIT_PROPERTY, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


def _parse_pairs(text):
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            i, j = (int(v) for v in item.split(":"))
        except ValueError as exc:
            raise ValueError(f"bad pair {item!r}; expected i:j") from exc
        pairs.append((min(i, j), max(i, j)))
    if not pairs:
        raise ValueError("--pairs needs at least one i:j")
    return pairs


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, help="master seed (overrides mc.master_seed)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted config override, e.g. --set basis.K=6; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spdeinv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"spdeinv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("basis", parents=[common], help="eigenvalue table and triple-product checksum")

    th = sub.add_parser("theta", parents=[common], help="generate the theta^{i,j}(t0) dataset")
    th.add_argument("--source", choices=("mc", "ode"), default="ode")
    th.add_argument("--pairs", help="subset of pairs as i:j,i:j (default: all up to K_obs)")

    inv = sub.add_parser("invert", parents=[common], help="recover lambda_k^2 from a dataset")
    inv.add_argument("--dataset", type=Path, help="dataset directory written by 'theta'")
    inv.add_argument("--source", choices=("mc", "ode"), default="ode",
                     help="generate data in memory when --dataset is absent")

    ver = sub.add_parser("verify", parents=[common], help="run all property suites")
    ver.add_argument("--no-weak", action="store_true", help="skip the monitored weak-error study")
    ver.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)

    cv = sub.add_parser("converge", parents=[common], help="dt / K / M / t0 convergence tables")
    cv.add_argument("--sweep", required=True, help="key=v1,v2,... with key in dt, K, M, t0")
    cv.add_argument("--source", choices=("mc", "ode"), default="mc",
                    help="data source for the inversion column")
    return p


def _prepare(args):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["mc.master_seed"] = args.seed
    if args.out is not None:
        overrides["output.directory"] = str(args.out)
    cfg = load_config(args.config, overrides)
    log.debug("resolved config: %s", cfg.echo_json())
    out = sio.ensure_dir(cfg.output.directory)
    (out / "config.json").write_text(cfg.echo_json() + "\n")
    return cfg, out


def _write_manifest(out, cfg, command, **extra):
    sio.write_json(out / "manifest.json", sio.manifest(
        cfg.echo(), command=command, seeds={"master_seed": cfg.mc.master_seed}, **extra))


def cmd_basis(args, cfg, out):
    basis = cfg.basis_spec()
    mi = basis.multi_indices
    header = ["k"] + ([f"k{c + 1}" for c in range(basis.dim)] if basis.dim > 1 else []) + ["alpha_k"]
    rows = []
    for idx in range(basis.n_modes):
        extra = [int(v) for v in mi[idx]] if basis.dim > 1 else []
        rows.append([idx + 1] + extra + [float(basis.alphas[idx])])
    sio.write_table_csv(out / "eigenvalues.csv", header, rows)
    checksum = basis.triple_checksum()
    sio.write_json(out / "checksum.json", {"schema_version": sio.SCHEMA_VERSION, "dim": basis.dim,
                                           "K": basis.K, "triple_sha256": checksum})
    _write_manifest(out, cfg, "basis")
    print(f"triple_sha256 {checksum}")
    return EXIT_OK


def cmd_theta(args, cfg, out):
    pairs = _parse_pairs(args.pairs) if args.pairs else None
    data, _ = generate_dataset(cfg, args.source, pairs)
    sio.write_dataset(out, data, cfg.echo(), command="theta", source=args.source)
    if args.source == "ode":
        sio.write_spectrum_csv(out / "spectrum.csv", assemble_generator(cfg.basis_spec(), cfg.q_spec()).decomposition)
    print(f"wrote {len(data.entries)} pair(s) to {out}")
    return EXIT_OK


def cmd_invert(args, cfg, out):
    basis = cfg.basis_spec()
    if args.dataset is not None:
        data = sio.read_dataset(args.dataset)
        if data.n != basis.n_modes:
            raise ContractError(f"{args.dataset}: dataset has {data.n} modes, config basis has {basis.n_modes}")
        truth = QSpec.from_dict(data.lambda_spec) if data.lambda_spec else None
        report = invert_dataset(data, basis, cfg.inversion.floor, cfg.echo(), truth=truth,
                                source=str(args.dataset))
    else:
        report = end_to_end(cfg, args.source)
    sio.write_report(out / "report.json", report)
    _write_manifest(out, cfg, "invert", dataset=None if args.dataset is None else str(args.dataset))
    for k, (v, b) in enumerate(zip(report.lambda_sq_lsq, report.lambda_sq_pairing), start=1):
        print(f"lambda_{k}^2 lsq={v:.10g} pairing={b:.10g}")
    print(f"recovered_rank {report.recovered_rank}")
    return EXIT_OK


def cmd_verify(args, cfg, out):
    results = run_suite(cfg, fault=args.inject_fault, monitor_weak=not args.no_weak)
    summ = summary(results)
    sio.write_json(out / "verify.json", summ)
    _write_manifest(out, cfg, "verify", fault=args.inject_fault)
    for r in results:
        tag = "MON " if r.monitored else ("PASS" if r.passed else "FAIL")
        print(f"{tag} {r.module}.{r.name} value={r.value:.6g} threshold={r.threshold:.6g} {r.detail}".rstrip())
    return EXIT_OK if summ["passed"] else EXIT_PROPERTY


def cmd_converge(args, cfg, out):
    key, values = parse_sweep(args.sweep)
    rows = run_sweep(cfg, key, values, args.source)
    sio.write_table_csv(out / f"converge_{key}.csv", HEADER, rows_as_tuples(rows))
    extra = {}
    if key == "M" and len(rows) >= 2 and all(r.stderr_mean > 0 for r in rows):
        extra["stderr_slope"] = stderr_slope(rows)
        print(f"stderr slope vs M: {extra['stderr_slope']:.4f}")
    _write_manifest(out, cfg, "converge", sweep=args.sweep, source=args.source, **extra)
    for r in rows:
        print(f"{key}={r.value:g} forward={r.forward_error:.3e} inversion={r.inversion_error:.3e} "
              f"rank={r.recovered_rank} {r.status}")
    failed = [r for r in rows if r.status != "ok"]
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {"basis": cmd_basis, "theta": cmd_theta, "invert": cmd_invert,
            "verify": cmd_verify, "converge": cmd_converge}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, out = _prepare(args)
        return COMMANDS[args.command](args, cfg, out)
    except pydantic.ValidationError as exc:
        print(f"spdeinv: invalid configuration:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        stage = getattr(exc, "stage", None)
        print(f"spdeinv: numerical failure{f' in stage {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SpdeInvError as exc:
        stage = getattr(exc, "stage", None)
        print(f"spdeinv: {type(exc).__name__}{f' in stage {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, yaml.YAMLError, json.JSONDecodeError) as exc:
        print(f"spdeinv: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
