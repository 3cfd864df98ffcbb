"""Experiment configuration read from TOML files by the CLI."""

import math
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class OperatorKind(str, Enum):
    """Built-in discrete singular integral kernels."""

    HILBERT_PERIODIC = "hilbert_periodic"
    DINI_SMOOTH = "dini_smooth"


class WeightKind(str, Enum):
    """Matrix weight generators."""

    IDENTITY = "identity"
    SCALAR_POWER = "scalar_power"
    DIAGONAL = "diagonal"
    BLOOM_ROTATED = "bloom_rotated"
    RANDOM_LOGSMOOTH = "random_logsmooth"


class SymbolKind(str, Enum):
    """Symbol pairs of generalized commutators."""

    CLASSICAL = "classical"
    ITERATED = "iterated"
    MIXED = "mixed"
    POWER = "power"
    CUSTOM = "custom"


SUITE_NAMES = (
    "sandwich",
    "coordinate_product",
    "equivalence",
    "stopping",
    "power_inequality",
    "mixed_commutator",
    "commutator_bounds",
    "weight_battery",
    "algebra",
    "domination",
)


class GridSection(BaseModel):
    d: int = Field(default=1, ge=1, le=3, description="Torus dimension")
    L: int = Field(default=6, ge=1, le=12, description="Grid depth")

    model_config = ConfigDict(extra="forbid")


class ValuesSection(BaseModel):
    n: int = Field(default=2, ge=1, le=3, description="Outer (vector) dimension")
    m: int = Field(default=1, ge=1, le=4, description="Inner dimension of E")
    r: float = Field(default=2.0, ge=1.0, description="Inner l^r exponent (inf allowed)")

    model_config = ConfigDict(extra="forbid")


class OperatorSection(BaseModel):
    kind: OperatorKind = Field(default=OperatorKind.HILBERT_PERIODIC)
    c: float = Field(default=1.0, gt=0.0, description="Size constant of the Dini kernel")
    delta_mod: float = Field(default=0.5, gt=0.0, le=1.0, description="Dini modulus exponent")

    model_config = ConfigDict(extra="forbid")


class WeightSpec(BaseModel):
    """One matrix weight; which parameters matter depends on ``kind``."""

    kind: WeightKind = Field(..., description="Weight generator")
    label: Optional[str] = Field(default=None, description="Name used in reports")
    n: Optional[int] = Field(default=None, ge=1, le=3, description="Matrix size (defaults to values.n)")
    alpha: float = Field(default=0.5, description="Exponent of |x - x0|^alpha")
    alphas: List[float] = Field(default_factory=list, description="Diagonal power exponents")
    scales: List[float] = Field(default_factory=list, description="Diagonal constant factors")
    x0: float = Field(default=0.0, ge=0.0, lt=1.0, description="Singular point on every axis")
    theta: float = Field(default=0.0, description="Rotation angle at the origin")
    theta_slope: float = Field(default=0.0, description="Rotation angle growth along the first axis")
    amplitude: float = Field(default=1.0, ge=0.0, description="Log-field amplitude")
    modes: int = Field(default=4, ge=1, le=32, description="Fourier modes of the log field")
    seed: Optional[int] = Field(default=None, description="Seed (defaults to the run seed)")

    model_config = ConfigDict(extra="forbid")

    @field_validator("scales")
    @classmethod
    def _positive_scales(cls, scales: List[float]) -> List[float]:
        if any(scale <= 0 for scale in scales):
            raise ValueError("Weight scales must be positive")
        return scales


class ExponentsSection(BaseModel):
    p: float = Field(default=1.0, ge=1.0, description="Exponent of the f bodies")
    q: float = Field(default=1.0, ge=1.0, description="Exponent of the g bodies")
    s: float = Field(default=4.0, gt=1.0, description="Commutator exponent s")
    t: float = Field(default=4.0, gt=1.0, description="Commutator exponent t")
    lp: Optional[float] = Field(default=None, gt=1.0, description="L^p exponent of the commutator report")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _exponent_ranges(self):
        for name in ("p", "q", "s", "t"):
            if math.isinf(getattr(self, name)):
                raise ValueError(f"Exponent {name} must be finite")
        t_dual = self.t / (self.t - 1.0)
        if t_dual >= self.s:
            raise ValueError(f"1/s + 1/t must stay below 1, got s={self.s:g}, t={self.t:g}")
        if self.lp is not None:
            if not t_dual < self.lp < self.s:
                raise ValueError(f"lp must lie in (t', s) = ({t_dual:.4g}, {self.s:g}), got {self.lp}")
        return self


class DominationSection(BaseModel):
    epsilon: float = Field(default=0.05, gt=0.0, lt=1.0, description="Exceptional mass budget")
    delta: float = Field(default=0.5, gt=0.0, lt=1.0, description="Sparseness target of stopping families")
    threshold: Optional[float] = Field(default=None, gt=1.0, description="Stopping threshold A")

    model_config = ConfigDict(extra="forbid")


class CommutatorSection(BaseModel):
    kind: SymbolKind = Field(default=SymbolKind.CLASSICAL)
    k: int = Field(default=2, ge=1, le=20, description="Order of the iterated commutator")
    alpha: float = Field(default=0.5, ge=0.0, description="Power symbol exponent alpha")
    beta: float = Field(default=0.25, ge=0.0, description="Power symbol exponent beta")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _power_range(self):
        if self.alpha + self.beta > 1.0:
            raise ValueError(f"alpha + beta must be at most 1, got {self.alpha + self.beta}")
        return self


class SuiteSection(BaseModel):
    names: List[str] = Field(default_factory=lambda: list(SUITE_NAMES))
    instances: int = Field(default=20, ge=1, le=10000, description="Random instances per suite")

    model_config = ConfigDict(extra="forbid")

    @field_validator("names")
    @classmethod
    def _known_suites(cls, names: List[str]) -> List[str]:
        unknown = [name for name in names if name not in SUITE_NAMES]
        if unknown:
            raise ValueError(f"Unknown suites {unknown}; choose from {list(SUITE_NAMES)}")
        return names


class OutputSection(BaseModel):
    dir: Optional[str] = Field(default=None, description="Report directory (defaults to settings.output_dir)")

    model_config = ConfigDict(extra="forbid")


class ExperimentConfig(BaseModel):
    """Full experiment configuration; unknown keys are rejected everywhere."""

    seed: int = Field(default=0, ge=0, description="Seed of every random draw in the run")
    grid: GridSection = Field(default_factory=GridSection)
    values: ValuesSection = Field(default_factory=ValuesSection)
    operator: OperatorSection = Field(default_factory=OperatorSection)
    weights: List[WeightSpec] = Field(default_factory=list)
    exponents: ExponentsSection = Field(default_factory=ExponentsSection)
    domination: DominationSection = Field(default_factory=DominationSection)
    commutator: CommutatorSection = Field(default_factory=CommutatorSection)
    suite: SuiteSection = Field(default_factory=SuiteSection)
    output: OutputSection = Field(default_factory=OutputSection)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _vector_budget(self):
        if self.values.n * self.domination.epsilon >= 0.5:
            raise ValueError(
                f"n * epsilon must stay below 1/2, got {self.values.n} * {self.domination.epsilon}"
            )
        return self
