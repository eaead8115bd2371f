"""Run configuration: one JSON document drives every subcommand."""

from __future__ import annotations

import hashlib
import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .laws import ImmigrationLaw, Intensity, LawError, ModelSpec, OffspringLaw
from .simulator import SimBudget


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` holds (path, reason) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {reason}" for path, reason in self.errors))


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class OffspringBlock(_Block):
    family: Literal["PurePower", "LogPower"]
    gamma: float
    c: float
    d: float = 0.0


class ImmigrationBlock(_Block):
    family: Literal["ScaledSibuya", "Bernoulli"]
    alpha: float = 1.0
    c_imm: float = Field(alias="cImm")


class IntensityBlock(_Block):
    family: Literal["Constant", "ExpApproach", "RationalApproach"] = "Constant"
    rho: float
    a: float = 0.0
    b: float = 1.0


class ModelBlock(_Block):
    mu: float = 1.0
    offspring: OffspringBlock
    immigration: ImmigrationBlock
    intensity: IntensityBlock

    @model_validator(mode="after")
    def _laws_valid(self):
        self.spec()
        return self

    def spec(self):
        o, i, r = self.offspring, self.immigration, self.intensity
        try:
            if self.mu <= 0:
                raise LawError("mu must be > 0")
            return ModelSpec(
                self.mu,
                OffspringLaw(o.family, o.gamma, o.c, o.d),
                ImmigrationLaw(i.family, i.alpha, i.c_imm),
                Intensity(r.family, r.rho, r.a, r.b),
            )
        except LawError as exc:
            raise ValueError(str(exc)) from None


class Tolerances(_Block):
    lt: float = 0.05
    ks: float = 0.08
    survival: float = 0.0
    plateau: float = 0.005
    cond_pgf: float = 0.03
    formula: float = 0.02


class ExperimentBlock(_Block):
    regime: Literal["auto", "I", "II", "III", "IV"] = "auto"
    tgrid: tuple[float, ...] = (50.0, 200.0, 800.0)
    n: int = Field(20_000, ge=1)
    lambda_grid: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    s_grid: tuple[float, ...] = (0.25, 0.5, 0.75)
    sigma_grid: tuple[float, ...] = (0.2, 0.5, 0.8)
    tolerances: Tolerances = Tolerances()
    survival_tgrid: tuple[float, ...] = (10.0, 100.0)
    survival_n: int = Field(10_000, ge=0)
    epsilon: float = Field(0.01, gt=0, lt=1)
    formula_t: float = Field(1e6, gt=0)

    @field_validator("tgrid", "survival_tgrid")
    @classmethod
    def _times(cls, v):
        if any(t < 0 for t in v):
            raise ValueError("times must be >= 0")
        if list(v) != sorted(v):
            raise ValueError("times must be increasing")
        return v

    @field_validator("s_grid")
    @classmethod
    def _unit(cls, v):
        if any(not 0 <= s <= 1 for s in v):
            raise ValueError("s must lie in [0,1]")
        return v

    @field_validator("sigma_grid")
    @classmethod
    def _open_unit(cls, v):
        if any(not 0 < s < 1 for s in v):
            raise ValueError("sigma must lie in (0,1)")
        return v


class BudgetBlock(_Block):
    max_events_per_clan: int = Field(10**7, ge=1)
    max_total_population: int = Field(10**12, ge=1)
    max_events_per_replicate: int = Field(10**8, ge=1)
    batch_threshold: int = Field(10**4, ge=1)
    method: Literal["auto", "exact", "events"] = "auto"

    def sim_budget(self):
        return SimBudget(self.max_events_per_clan, self.max_total_population, self.max_events_per_replicate,
                         self.batch_threshold)


class OutputBlock(_Block):
    directory: str = "out"


class RunConfig(_Block):
    model: ModelBlock
    experiment: ExperimentBlock = ExperimentBlock()
    seed: int = Field(ge=0, lt=2**64)
    budget: BudgetBlock = BudgetBlock()
    output: OutputBlock = OutputBlock()

    @model_validator(mode="before")
    @classmethod
    def _seed_present(cls, data):
        if isinstance(data, dict) and data.get("seed") is None:
            raise ValueError("seed required")
        return data

    def canonical(self):
        """Canonical JSON text; parsing it gives back an equal config."""
        return json.dumps(self.model_dump(mode="json", by_alias=True), sort_keys=True, indent=2) + "\n"

    def digest(self):
        """sha256 of everything that affects results; the output directory does not."""
        data = self.model_dump(mode="json", by_alias=True, exclude={"output"})
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _path(loc):
    return ".".join(str(p) for p in loc) or "<root>"


def _reason(err):
    msg = err["msg"]
    return msg.removeprefix("Value error, ")


def parse_config(text, overrides=None):
    """Validated RunConfig from JSON text; raises ConfigError listing (path, reason)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([(f"line {exc.lineno} column {exc.colno}", f"syntax error: {exc.msg}")]) from None
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "expected an object")])
    data.update(overrides or {})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([(_path(e["loc"]), _reason(e)) for e in exc.errors()]) from None


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)
