"""Serializable records emitted by the services and written by the CLI."""

import math
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class InequalityCheck(BaseModel):
    """One checked inequality lhs <= rhs with a stable anchor."""

    anchor: str = Field(..., description="Stable identifier of the inequality, e.g. 'ellipsoid.sandwich'")
    description: str = Field(..., description="Human readable statement")
    lhs: float = Field(..., description="Measured left side")
    rhs: float = Field(..., description="Bound on the right side")
    ratio: Optional[float] = Field(None, description="lhs / rhs, None when rhs = 0")
    passed: bool = Field(..., description="Whether lhs <= rhs within tolerance")
    exact: bool = Field(default=True, description="False when a side relies on a lower-bound dot")

    @classmethod
    def compare(
        cls,
        anchor: str,
        description: str,
        lhs: float,
        rhs: float,
        rtol: float = 1e-9,
        atol: float = 1e-12,
        exact: bool = True,
    ) -> "InequalityCheck":
        lhs, rhs = float(lhs), float(rhs)
        ratio = lhs / rhs if rhs > 0 and math.isfinite(rhs) else None
        passed = lhs <= rhs + rtol * abs(rhs) + atol
        return cls(
            anchor=anchor,
            description=description,
            lhs=lhs,
            rhs=rhs,
            ratio=ratio,
            passed=passed,
            exact=exact,
        )

    def summary_row(self) -> List[str]:
        ratio = "" if self.ratio is None else repr(self.ratio)
        return [self.anchor, repr(self.lhs), repr(self.rhs), ratio, str(self.passed).lower()]


class CubeRecord(BaseModel):
    """A family member with its witness cells as half-open index ranges."""

    level: int = Field(..., ge=0)
    index: Tuple[int, ...] = Field(...)
    witness: List[Tuple[int, int]] = Field(
        default_factory=list, description="Witness cell ranges [start, stop)"
    )
    a_value: Optional[float] = Field(None, description="Stopping quantity a_Q when available")


class SparsenessAudit(BaseModel):
    sparse: bool = Field(..., description="Witnesses disjoint, inside their cubes and large enough")
    eta: float = Field(..., description="Declared sparseness parameter")
    worst_ratio: float = Field(..., description="min |E(Q)| / |Q| over the family (1 for an empty family)")
    cube_count: int = Field(..., ge=0)
    overlapping_pair: Optional[Tuple[str, str]] = Field(
        None, description="First pair with overlapping witnesses"
    )
    witness_outside: Optional[str] = Field(None, description="First cube whose witness leaves the cube")


class EquivalenceReport(BaseModel):
    p: float
    q: float
    n: int
    delta: float
    threshold: float = Field(..., description="Stopping threshold A")
    sparse_form: float = Field(..., description="Sparse form of the stopping family")
    maximal_l1: float = Field(..., description="L^1 norm of the pair maximal function")
    easy_ratio: Optional[float] = Field(None, description="delta * sparse_form / maximal_l1")
    hard_ratio: Optional[float] = Field(None, description="maximal_l1 / (A * sparse_form)")
    family_size: int
    sparseness: SparsenessAudit
    stopping_ratio: float = Field(..., description="max a_Q / (A a_S) over all cubes")
    exact: bool = Field(..., description="Every a_Q from an exact dot")
    checks: List[InequalityCheck] = Field(default_factory=list)


class SingleScaleRecord(BaseModel):
    cube: str
    exceptional: List[str] = Field(default_factory=list)
    exceptional_measure: float
    budget: float = Field(..., description="Allowed exceptional measure (n epsilon |Q|)")
    constant: float = Field(..., description="Measured single-scale constant")
    rank: int = Field(..., ge=0, description="Rank of the body on 3Q")
    degenerate: bool = False
    sandwich_ratio: Optional[float] = None


class DominationReport(BaseModel):
    n: int
    epsilon: float
    epsilon_n: float = Field(..., description="n * epsilon")
    eta: float = Field(..., description="Declared sparseness 1 - n epsilon")
    family: List[CubeRecord] = Field(default_factory=list)
    sparseness: SparsenessAudit
    constant_measured: float = Field(..., description="Largest measured single-scale constant")
    constant_n: float = Field(..., description="C_n = c n^(3/2) (1 + mvee tolerance)")
    sandwich_ratios: List[float] = Field(default_factory=list)
    lhs: float = Field(..., description="|t(f, g)|")
    sparse_form: float
    rhs: float = Field(..., description="C_n * sparse_form")
    verdict_ratio: Optional[float] = None
    dominated: bool
    dot_exact: bool
    generations: int
    telescoping_error: float = Field(..., description="Deviation of the telescoped sum from t(f, g)")
    leaf_residual: float
    leaf_bound: float
    converged: bool
    single_scale: List[SingleScaleRecord] = Field(default_factory=list)


class LTildeReport(BaseModel):
    norm: float = Field(..., description="L^2 operator norm of the positive sparse operator")
    a2: float
    ainfty_w: float
    ainfty_v: float
    bound: float = Field(..., description="([W,V]_A2 [W]_Ainf [V]_Ainf)^(1/2)")
    ratio: Optional[float] = None
    family_size: int
    family: str = Field(default="", description="Provenance of the sparse family the norm was taken on")


class WeightedNormReport(BaseModel):
    label: str
    lower: float = Field(..., description="Certified lower bound of the weighted operator norm")
    exact: bool = Field(..., description="True when lower is the exact norm")
    a2: float
    a2_admissible: bool
    upper_ref: float = Field(..., description="[W]_A2^(3/2)")
    ratio: Optional[float] = Field(None, description="lower / [W]_A2^(3/2)")
    method: str


class WeightReport(BaseModel):
    label: str
    kind: str
    n: int
    a2: float
    ainfty: float
    a2_admissible: bool
    net_curve: List[Tuple[int, float]] = Field(default_factory=list)


class CommutatorReport(BaseModel):
    kind: str
    s: float
    t: float
    p: Optional[float] = None
    a_st: float = Field(..., description="A_{s,t} over all cubes Q x Q")
    a_st_triple: Optional[float] = Field(None, description="A_{s,t} over the blocks Q x 3Q")
    s_s: Optional[float] = Field(None, description="S_s of a mixed pair")
    t_s: Optional[float] = Field(None, description="T_s of a mixed pair")
    mixed_ratio: Optional[float] = Field(None, description="A_s / (T_s + S_s) of a mixed pair")
    bmo: List[float] = Field(default_factory=list, description="Mean-centred BMO_s norms of the symbols")
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    constant: Optional[float] = None
    eta: Optional[float] = None
    lp_audit_skipped: Optional[str] = Field(None, description="Why the L^p two-sided audit was not run")
    checks: List[InequalityCheck] = Field(default_factory=list)


class PowerInequalityReport(BaseModel):
    alpha: float
    beta: float
    p: float
    pointwise_ratio: float = Field(..., description="max |B(x,y)| / |b(x)-b(y)|^(alpha+beta)")
    integrated_ratio: float = Field(..., description="max over cubes of the averaged bound ratio")
    bmo_p: float
    checks: List[InequalityCheck] = Field(default_factory=list)


class ReportEnvelope(BaseModel):
    """Top-level record written to report.json."""

    version: str
    subcommand: str
    seed: int
    generated_at: datetime
    payload: Dict[str, Any] = Field(default_factory=dict)
    checks: List[InequalityCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[InequalityCheck]:
        return [check for check in self.checks if not check.passed]


class SuiteResult(BaseModel):
    """Checks produced by one property suite."""

    name: str
    instances: int = Field(..., ge=0, description="Random instances drawn")
    checks: List[InequalityCheck] = Field(default_factory=list)
    details: Dict[str, Any] = Field(default_factory=dict, description="Diagnostics reported as data")

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)
