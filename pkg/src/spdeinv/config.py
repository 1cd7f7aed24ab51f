"""Run configuration: one structured file (YAML or JSON) plus flag overrides."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .basis import BasisSpec
from .forward import SCHEMES, MCEnsemble, SdeScheme
from .noise import QSpec

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class BasisConfig(_Strict):
    dim: Literal[1, 2] = 1
    K: int = Field(8, ge=1, le=32)


class QConfig(_Strict):
    """Explicit ``lambdas`` or the power family ``c * k**(-s)``.

    A power family with ``K = None`` is truncated at the basis mode count.
    """

    lambdas: Optional[list[float]] = None
    family: Optional[Literal["power"]] = "power"
    c: float = Field(0.5, gt=0)
    s: float = Field(2.0, ge=0)
    K: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _one_form(self):
        if self.lambdas is not None and self.family is not None:
            raise ValueError("give either an explicit lambdas list or family, not both")
        if self.lambdas is None and self.family is None:
            raise ValueError("noise spec needs lambdas or family")
        if self.lambdas is not None and any(v < 0 for v in self.lambdas):
            raise ValueError("lambdas must be nonnegative")
        return self


class SchemeConfig(_Strict):
    kind: Literal[SCHEMES] = "exponential_euler"
    dt: float = Field(1e-3, gt=0)


class MCConfig(_Strict):
    M: int = Field(20000, ge=2)
    master_seed: int = Field(2024, ge=0, lt=2**64)
    workers: int = Field(1, ge=1)
    chunk: int = Field(1024, ge=1)


class TimesConfig(_Strict):
    t0: float = Field(0.1, gt=0)
    grid: list[float] = Field(default_factory=list)


class InversionConfig(_Strict):
    floor: Optional[float] = Field(None, ge=0)
    K_obs: Optional[int] = Field(None, ge=1)


class OutputConfig(_Strict):
    directory: str = "out"
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(_Strict):
    basis: BasisConfig = Field(default_factory=BasisConfig)
    q: QConfig = Field(default_factory=QConfig)
    scheme: SchemeConfig = Field(default_factory=SchemeConfig)
    mc: MCConfig = Field(default_factory=MCConfig)
    times: TimesConfig = Field(default_factory=TimesConfig)
    inversion: InversionConfig = Field(default_factory=InversionConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    u0: list[float] = Field(default_factory=lambda: [1.0, 1.0])

    @field_validator("u0")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("u0 needs at least one coefficient")
        return v

    def basis_spec(self) -> BasisSpec:
        return BasisSpec(self.basis.dim, self.basis.K)

    def q_spec(self) -> QSpec:
        if self.q.lambdas is not None:
            return QSpec(lambdas=tuple(self.q.lambdas))
        K = self.q.K or self.basis_spec().n_modes
        return QSpec.power(self.q.c, self.q.s, K)

    def scheme_spec(self) -> SdeScheme:
        return SdeScheme(self.scheme.kind, self.scheme.dt)

    def ensemble(self) -> MCEnsemble:
        return MCEnsemble(self.mc.M, self.mc.master_seed, self.scheme_spec(), self.mc.workers, self.mc.chunk)

    def u0_coeffs(self):
        import numpy as np

        n = self.basis_spec().n_modes
        out = np.zeros(n)
        vals = np.asarray(self.u0[:n], dtype=float)
        out[: vals.size] = vals
        return out

    def echo(self) -> dict:
        return self.model_dump(mode="json")

    def echo_json(self) -> str:
        return json.dumps(self.echo(), indent=2, sort_keys=True)


def load_config(path=None, overrides=None) -> RunConfig:
    """Read a YAML/JSON file (optional) and apply dotted overrides.

    ``overrides`` maps dotted keys such as ``"mc.master_seed"`` to values;
    they win over file values.
    """
    data = {}
    if path is not None:
        text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    for key, value in (overrides or {}).items():
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = value
    if "q" in data and isinstance(data["q"], dict) and "lambdas" in data["q"] and "family" not in data["q"]:
        data["q"] = dict(data["q"], family=None)
    return RunConfig.model_validate(data)
