"""Run configuration: a YAML tree validated against a strict schema."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ConfigError(ValueError):
    """Schema violation; the message names the offending key path."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ForceMode(_Strict):
    mode: int = Field(1, ge=1)
    kind: Literal["cos", "sin"] = "cos"
    amplitude: float = 1.0


class BurgersModel(_Strict):
    nu: float = Field(0.5, gt=0)
    N: int = Field(32, ge=1)
    substeps: int = Field(100, ge=1)
    dealias: bool = True
    h_spec: list[ForceMode] = Field(default_factory=lambda: [ForceMode()])


class MapSpec(_Strict):
    kind: Literal["tanh", "linear", "constant", "table"] = "tanh"
    kappa: float = 2.0
    scale: float = 1.0
    q: float = 0.5
    c: float = 0.0
    xs: list[float] = Field(default_factory=list)
    ys: list[float] = Field(default_factory=list)


class GridSpec(_Strict):
    L: float = Field(10.0, gt=0)
    n: int = Field(512, ge=64)
    rule: Literal["gauss-legendre", "trapezoid"] = "gauss-legendre"


class ScalarModel(_Strict):
    map: MapSpec = Field(default_factory=MapSpec)
    grid: GridSpec = Field(default_factory=GridSpec)


class ModelSpec(_Strict):
    burgers: Optional[BurgersModel] = None
    scalar: Optional[ScalarModel] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.burgers is None) == (self.scalar is None):
            raise ValueError("exactly one of 'burgers' or 'scalar' must be given")
        return self


class NoiseSpec(_Strict):
    family: Literal["gaussian", "genexp"] = "gaussian"
    b0: float = Field(1.0, gt=0)
    r: float = Field(1.0, gt=0.5)
    a: float = Field(0.5, gt=0)
    beta: float = Field(2.0, gt=1, le=2)
    q_coeffs: list[float] = Field(default_factory=list)


class RunSpec(_Strict):
    k: int = Field(10000, ge=1)
    ensemble: int = Field(1, ge=1)
    burn_in: int = Field(1000, ge=0)
    block: int = Field(100, ge=1)
    seed: int = Field(0, ge=0)
    thin: int = Field(100, ge=1)
    u0_norm: float = Field(0.0, ge=0)


class ScgfSpec(_Strict):
    method: Literal["oracle", "naive", "cloning"] = "oracle"
    alphas: Optional[list[float]] = None
    window: Optional[tuple[float, float]] = None
    step: Optional[float] = Field(None, gt=0)
    k: int = Field(20, ge=1)
    k0: int = Field(0, ge=0)
    ensemble: int = Field(1000, ge=1)
    population: int = Field(1000, ge=100)
    repetitions: int = Field(8, ge=2)
    burn_in: int = Field(0, ge=0)
    r_step: float = Field(0.001, gt=0)
    r_max: Optional[float] = Field(None, gt=0)
    gc_tolerance: float = Field(1e-5, gt=0)

    @model_validator(mode="after")
    def _grid(self):
        if self.alphas is None and (self.window is None or self.step is None):
            raise ValueError("give either 'alphas' or both 'window' and 'step'")
        if self.alphas is not None and self.window is not None:
            raise ValueError("'alphas' and 'window' are mutually exclusive")
        return self

    def alpha_grid(self) -> np.ndarray:
        if self.alphas is not None:
            return np.array(sorted(self.alphas), dtype=float)
        lo, hi = self.window
        n = int(round((hi - lo) / self.step))
        return np.round(lo + self.step * np.arange(n + 1), 12)


class OutputSpec(_Strict):
    dir: str = "runs"
    tag: Optional[str] = None
    formats: list[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
    plot: bool = False


class VerifySpec(_Strict):
    expect_reversible: Literal["auto", "yes", "no"] = "auto"
    duality_alphas: list[float] = Field(default_factory=lambda: [-0.5, 0.3, 0.5, 0.9])
    samples: int = Field(200, ge=1)


class RunConfig(_Strict):
    model: ModelSpec
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    run: RunSpec = Field(default_factory=RunSpec)
    scgf: Optional[ScgfSpec] = None
    output: OutputSpec = Field(default_factory=OutputSpec)
    verify: VerifySpec = Field(default_factory=VerifySpec)
    threads: int = Field(0, ge=0)

    def resolved_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=True)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: configuration must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path: str | Path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"<file>: not valid YAML ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"<file>: {exc}") from None
    return parse_config(data)
