"""Convergence sweeps over ``dt``, ``K``, ``M`` or ``t0``.

Each sweep point yields one :class:`SweepRow`. The forward error compares
the Monte Carlo ``theta(t0, u0)`` with the matrix-exponential oracle; the
inversion error compares recovered ``lambda^2`` with the configured truth.
A stage failure at one point is recorded in ``status`` rather than
aborting the sweep.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np

from .covariance import assemble_generator, theta_exact
from .errors import SpdeInvError
from .forward import Field, mc_theta
from .inversion import generate_dataset, invert_dataset
from .spectral import loglog_slope

SWEEP_KEYS = {"dt": "scheme.dt", "K": "basis.K", "M": "mc.M", "t0": "times.t0"}


@dataclass
class SweepRow:
    parameter: str
    value: float
    forward_error: float
    stderr_max: float
    stderr_mean: float
    inversion_error: float
    recovered_rank: int
    status: str = "ok"


HEADER = [f.name for f in fields(SweepRow)]


def parse_sweep(text: str) -> tuple[str, list]:
    """``"dt=1e-2,5e-3"`` -> ``("dt", [0.01, 0.005])``."""
    if "=" not in text:
        raise ValueError(f"sweep must look like key=v1,v2,... got {text!r}")
    key, _, vals = text.partition("=")
    key = key.strip()
    if key not in SWEEP_KEYS:
        raise ValueError(f"unknown sweep key {key!r}; choose from {sorted(SWEEP_KEYS)}")
    cast = int if key in ("K", "M") else float
    try:
        values = [cast(float(v)) for v in vals.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad sweep value in {text!r}") from exc
    if not values:
        raise ValueError("sweep needs at least one value")
    return key, values


def sweep_point(config, source: str = "mc") -> SweepRow:
    basis, q, t0 = config.basis_spec(), config.q_spec(), config.times.t0
    u0 = config.u0_coeffs()
    gen = assemble_generator(basis, q)
    exact = theta_exact(gen, u0, t0).coeffs
    mc = mc_theta(Field(u0), t0, basis, q, config.ensemble())
    fwd = float(np.abs(mc.theta_hat - exact).max())
    se_max = float(mc.stderr.max())
    se_mean = float(mc.stderr[np.triu_indices(basis.n_modes)].mean())

    truth = q.lambdas_for(basis.n_modes) ** 2
    try:
        data, _ = generate_dataset(config, source)
        rep = invert_dataset(data, basis, config.inversion.floor)
    except SpdeInvError as exc:
        stage = getattr(exc, "stage", "invert")
        return SweepRow("", 0.0, fwd, se_max, se_mean, float("nan"), -1, f"{type(exc).__name__}@{stage}: {exc}")
    scale = truth.max() if truth.max() > 0 else 1.0
    inv = float(np.abs(np.asarray(rep.lambda_sq_lsq) - truth).max() / scale)
    return SweepRow("", 0.0, fwd, se_max, se_mean, inv, rep.recovered_rank)


def run_sweep(config, key: str, values, source: str = "mc") -> list[SweepRow]:
    dotted = SWEEP_KEYS[key]
    section, attr = dotted.split(".")
    rows = []
    for v in values:
        cfg = config.model_copy(deep=True)
        setattr(getattr(cfg, section), attr, v)
        row = sweep_point(cfg, source)
        row.parameter, row.value = key, v
        rows.append(row)
    return rows


def rows_as_tuples(rows):
    return [astuple(r) for r in rows]


def stderr_slope(rows) -> float:
    """Log-log slope of mean standard error against ``M`` (CLT predicts -1/2)."""
    return loglog_slope([r.value for r in rows], [r.stderr_mean for r in rows])
