"""Job configuration files.

A job is a TOML file with one table per concern::

    [job]
    method = "harmonic"          # harmonic | cubature | oracle

    [model]
    r = 0.05                     # per year
    delta = 0.05                 # dividend yield, per year
    sigma = 1.0                  # per square-root year
    t = 0.25                     # years between exercise dates

    [payoff]
    kind = "put"
    strike = 1.0

    [grid]
    lower = -2.302585092994046
    upper = 0.0
    n_points = 201

See ``docs/reference/config.md`` for every table and key.
"""

from __future__ import annotations

import math
import tomllib
from pathlib import Path
from typing import Literal, Self

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .harmonic_core import GeneratorParams
from .iteration import IterationConfig
from .oracle import MIN_QUAD_POINTS

Method = Literal["harmonic", "cubature", "oracle"]
RATE_TOL = 1e-12


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class JobSection(_Section):
    method: Method
    name: str = "job"


class ModelSection(_Section):
    r: float = Field(ge=0.0)
    delta: float = 0.0
    sigma: float = Field(gt=0.0)
    t: float = Field(gt=0.0)

    def generator_params(self) -> GeneratorParams:
        return GeneratorParams.from_black_scholes(self.r, self.delta, self.sigma, self.t)

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.t)


class PayoffSection(_Section):
    kind: Literal["call", "put"] = "put"
    strike: float = Field(ge=0.0)
    betas: list[float] = Field(default_factory=lambda: [1.0])

    @field_validator("betas")
    @classmethod
    def _convex(cls, betas: list[float]) -> list[float]:
        if not betas or any(b < 0.0 for b in betas) or abs(sum(betas) - 1.0) > 1e-12:
            raise ValueError("betas must be nonnegative and sum to one")
        return betas

    @property
    def dimension(self) -> int:
        return len(self.betas)


class GridSection(_Section):
    lower: float
    upper: float
    n_points: int = Field(default=201, ge=2)

    @model_validator(mode="after")
    def _ordered(self) -> Self:
        if not self.lower < self.upper:
            raise ValueError("grid.lower must be below grid.upper")
        return self


class LatticeSection(_Section):
    lower: float | list[float]
    upper: float | list[float]
    spacing: float | list[float]
    interior_steps: int = Field(default=1, ge=0)
    grow_interior: bool = False

    def axis_values(self, dimension: int) -> tuple[tuple[float, ...], ...]:
        """Lower, upper and spacing expanded to one entry per axis."""
        expanded = []
        for name in ("lower", "upper", "spacing"):
            value = getattr(self, name)
            values = [value] * dimension if isinstance(value, float | int) else list(value)
            if len(values) != dimension:
                raise ConfigError(f"lattice.{name} needs {dimension} entries, got {len(values)}")
            expanded.append(tuple(float(v) for v in values))
        return tuple(expanded)


class RuleSection(_Section):
    family: Literal["gauss_hermite", "degree3"] = "gauss_hermite"
    order: int = Field(default=20, ge=1)


class IterationSection(_Section):
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=100_000, ge=1)
    record_trace: bool = False
    stagnation_window: int = Field(default=50, ge=1)
    start: Literal["payoff", "upper"] = "payoff"
    n_dates: int | None = Field(default=None, ge=0)

    def iteration_config(self) -> IterationConfig:
        return IterationConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            record_trace=self.record_trace,
            stagnation_window=self.stagnation_window,
        )


class OracleSection(_Section):
    n_points: int = Field(default=4001, ge=3)
    quad_points: int = Field(default=MIN_QUAD_POINTS, ge=MIN_QUAD_POINTS)
    sd_width: float = Field(default=8.0, gt=0.0)
    half_width: float = Field(default=7.0, gt=0.0)
    lower: float | None = None
    upper: float | None = None


class OutputSection(_Section):
    directory: Path = Path("results")
    values: str = "values.csv"
    report: str = "report.csv"
    summary: str = "summary.json"


class JobConfig(_Section):
    """A validated job: one method, one model, one payoff."""

    job: JobSection
    model: ModelSection
    payoff: PayoffSection
    grid: GridSection | None = None
    lattice: LatticeSection | None = None
    rule: RuleSection = Field(default_factory=RuleSection)
    iteration: IterationSection = Field(default_factory=IterationSection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _method_requirements(self) -> Self:
        method, dimension = self.job.method, self.payoff.dimension
        if method == "harmonic":
            if self.grid is None:
                raise ValueError("method 'harmonic' needs a [grid] table")
            if dimension != 1:
                raise ValueError("method 'harmonic' prices a single asset; use one beta")
        if method == "cubature" and self.iteration.n_dates is not None:
            raise ValueError(
                "method 'cubature' prices the perpetual option; drop iteration.n_dates"
            )
        if method == "cubature" and not 0.0 < self.model.discount < 1.0:
            raise ValueError("method 'cubature' needs r > 0 so that the discount lies in (0, 1)")
        if method == "cubature" and abs(self.model.r - self.model.delta) > RATE_TOL:
            raise ValueError(
                "method 'cubature' prices under the r == delta law; set model.delta = model.r"
            )
        if method == "oracle" and dimension > 2:
            raise ValueError("method 'oracle' supports at most two assets")
        return self

    @property
    def dimension(self) -> int:
        return self.payoff.dimension


def load_config(path: str | Path) -> JobConfig:
    """Read and validate a job file.

    Raises:
        ConfigError: If the file cannot be read, is not TOML or fails validation.
    """
    config_path = Path(path)
    try:
        with config_path.open("rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {config_path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config {config_path} is not valid TOML: {e}") from e
    try:
        return JobConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {config_path}:\n{e}") from e
