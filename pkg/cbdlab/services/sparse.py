"""
Sparse families, stopping-time constructions, sparse forms and the pair
maximal function

    M(f, g)(x) = sup_{Q containing x} a_Q,   a_Q = <<f>>_{avL^p(Q)} . <<g>>_{avL^q(Q)}.

The stopping family on the root satisfies the two-sided estimate

    delta * sum_S a_S |S| <= ||M(f, g)||_1 <= A * sum_S a_S |S|.
"""

import json
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from cbdlab.models.reports import (
    CubeRecord,
    EquivalenceReport,
    InequalityCheck,
    SparsenessAudit,
)
from cbdlab.services.bodies import ConvexBody, DotEstimate, estimate_dot
from cbdlab.services.errors import DimensionMismatchError
from cbdlab.services.grid import Cube, DyadicGrid, GridFunction

logger = logging.getLogger(__name__)


# ============================================================================
# Sparse families
# ============================================================================


def _cell_ranges(cells: np.ndarray) -> List[Tuple[int, int]]:
    """Runs of consecutive cell indices as half-open ranges."""
    cells = np.sort(np.asarray(cells, dtype=np.int64))
    if len(cells) == 0:
        return []
    breaks = np.flatnonzero(np.diff(cells) != 1) + 1
    starts = np.concatenate([[0], breaks])
    stops = np.concatenate([breaks, [len(cells)]])
    return [(int(cells[a]), int(cells[b - 1]) + 1) for a, b in zip(starts, stops)]


class SparseFamily(BaseModel):
    """Dyadic cubes with pairwise disjoint witness sets E(Q) inside Q."""

    grid: DyadicGrid
    cubes: List[Cube] = Field(default_factory=list)
    witnesses: List[np.ndarray] = Field(default_factory=list, description="Witness cells per cube")
    eta: float = Field(..., gt=0.0, le=1.0, description="Declared sparseness parameter")
    provenance: str = Field(default="manual", description="Construction that produced the family")
    a_values: Optional[List[float]] = Field(default=None, description="Stopping quantity per cube")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @model_validator(mode="after")
    def _check_lengths(self):
        if len(self.cubes) != len(self.witnesses):
            raise ValueError("Every cube needs exactly one witness set")
        if self.a_values is not None and len(self.a_values) != len(self.cubes):
            raise ValueError("a_values must have one entry per cube")
        return self

    def __len__(self) -> int:
        return len(self.cubes)

    def measure(self) -> float:
        """sum of |Q| over the family."""
        return sum(self.grid.measure(cube) for cube in self.cubes)

    def to_records(self) -> List[CubeRecord]:
        values = self.a_values or [None] * len(self.cubes)
        return [
            CubeRecord(level=cube.level, index=cube.index, witness=_cell_ranges(witness), a_value=value)
            for cube, witness, value in zip(self.cubes, self.witnesses, values)
        ]

    def to_json(self) -> str:
        document = {
            "dimension": self.grid.dimension,
            "depth": self.grid.depth,
            "eta": self.eta,
            "provenance": self.provenance,
            "cubes": [record.model_dump(mode="json") for record in self.to_records()],
        }
        return json.dumps(document, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SparseFamily":
        document = json.loads(text)
        grid = DyadicGrid(dimension=document["dimension"], depth=document["depth"])
        records = [CubeRecord.model_validate(item) for item in document["cubes"]]
        witnesses = [
            np.concatenate([np.arange(a, b) for a, b in record.witness] or [np.zeros(0, dtype=np.int64)])
            for record in records
        ]
        values = [record.a_value for record in records]
        return cls(
            grid=grid,
            cubes=[Cube(level=record.level, index=tuple(record.index)) for record in records],
            witnesses=witnesses,
            eta=document["eta"],
            provenance=document["provenance"],
            a_values=None if any(v is None for v in values) else values,
        )


def corner_chain(grid: DyadicGrid) -> SparseFamily:
    """Cubes containing the origin, one per level; E(Q) is Q minus the next cube of the chain."""
    origin = tuple([0] * grid.dimension)
    cubes = [Cube(level=level, index=origin) for level in range(grid.depth + 1)]
    witnesses = [
        np.setdiff1d(grid.cells(cube), grid.cells(inner)) for cube, inner in zip(cubes[:-1], cubes[1:])
    ]
    witnesses.append(np.array(grid.cells(cubes[-1])))
    eta = 1.0 - 0.5**grid.dimension
    return SparseFamily(grid=grid, cubes=cubes, witnesses=witnesses, eta=eta, provenance="corner_chain")


def verify_sparse(family: SparseFamily, tolerance: float = 1e-12) -> SparsenessAudit:
    """Check disjointness, E(Q) inside Q and |E(Q)| >= eta |Q| for every member."""
    grid = family.grid
    owner = np.full(grid.n_cells, -1, dtype=np.int64)
    worst = 1.0
    overlapping = None
    outside = None
    for position, (cube, witness) in enumerate(zip(family.cubes, family.witnesses)):
        cells = grid.cells(cube)
        witness = np.asarray(witness, dtype=np.int64)
        if outside is None and not np.all(np.isin(witness, cells)):
            outside = str(cube)
        taken = owner[witness]
        if overlapping is None and np.any(taken >= 0):
            other = family.cubes[int(taken[taken >= 0][0])]
            overlapping = (str(other), str(cube))
        owner[witness] = position
        worst = min(worst, len(np.unique(witness)) / len(cells))
    sparse = overlapping is None and outside is None and worst >= family.eta - tolerance
    if not sparse:
        logger.debug(
            f"Family '{family.provenance}' not {family.eta}-sparse: worst {worst:.4g}, "
            f"overlap {overlapping}, outside {outside}"
        )
    return SparsenessAudit(
        sparse=sparse,
        eta=family.eta,
        worst_ratio=worst,
        cube_count=len(family),
        overlapping_pair=overlapping,
        witness_outside=outside,
    )


# ============================================================================
# Pair forms
# ============================================================================


class PairFormConfig(BaseModel):
    """Exponents and stopping threshold of the pair form a_Q."""

    p: float = Field(default=1.0, ge=1.0, description="Exponent of the f bodies")
    q: float = Field(default=1.0, ge=1.0, description="Exponent of the g bodies")
    n: int = Field(default=1, ge=1, description="Outer dimension of the data")
    delta: float = Field(default=0.5, gt=0.0, lt=1.0, description="Sparseness target")
    threshold: Optional[float] = Field(default=None, gt=1.0, description="Stopping threshold A")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_threshold(self):
        if math.isinf(self.p) or math.isinf(self.q):
            raise ValueError("Pair form exponents must be finite")
        if self.threshold is not None:
            decay = self.n**self.exponent / self.threshold**self.r
            if decay > 1.0 - self.delta:
                raise ValueError(
                    f"Threshold A={self.threshold} too small: n^{self.exponent:.3g}/A^{self.r:.3g} "
                    f"= {decay:.4g} exceeds 1 - delta = {1.0 - self.delta}"
                )
        return self

    @property
    def r(self) -> float:
        """1/r = 1/p + 1/q."""
        return 1.0 / (1.0 / self.p + 1.0 / self.q)

    @property
    def exponent(self) -> float:
        """max(1, r) + r/2, the power of n in the disjoint-sum inequality."""
        return max(1.0, self.r) + self.r / 2.0

    @property
    def stopping_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return (2.0 * self.n**self.exponent / (1.0 - self.delta)) ** (1.0 / self.r)


def _validate_data(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise DimensionMismatchError("f and g live on different grids")
    if f.n != g.n:
        raise DimensionMismatchError(f"f and g have outer dimensions {f.n} and {g.n}")


class PairAverages:
    """Memoized a_Q = <<f>>_{avL^p(Q)} . <<g>>_{avL^q(Q)} with exactness tracking."""

    def __init__(self, f: GridFunction, g: GridFunction, p: float, q: float, method: str = "auto"):
        _validate_data(f, g)
        self.f = f
        self.g = g
        self.p = p
        self.q = q
        self.method = method
        self._cache: Dict[Cube, DotEstimate] = {}

    @property
    def grid(self) -> DyadicGrid:
        return self.f.grid

    def estimate(self, cube: Cube) -> DotEstimate:
        if cube not in self._cache:
            cells = self.grid.cells(cube)
            self._cache[cube] = estimate_dot(
                ConvexBody.from_function(self.f, cells, self.p),
                ConvexBody.from_function(self.g, cells, self.q),
                method=self.method,
            )
        return self._cache[cube]

    def value(self, cube: Cube) -> float:
        return self.estimate(cube).value

    def level_values(self, level: int) -> np.ndarray:
        """a_Q for every cube of ``level`` in flat order."""
        return np.array([self.value(cube) for cube in self.grid.cubes(level)])

    @property
    def exact(self) -> bool:
        """Whether every a_Q evaluated so far came from an exact dot."""
        return all(estimate.exact for estimate in self._cache.values())


def sparse_form_terms(
    family: SparseFamily, f: GridFunction, g: GridFunction, p: float, q: float, triple: bool = False
) -> List[DotEstimate]:
    """The dots <<f>>_{avL^p(Q or 3Q)} . <<g>>_{avL^q(Q)} of every member."""
    _validate_data(f, g)
    grid = f.grid
    terms = []
    for cube in family.cubes:
        f_cells = grid.triple_cells(cube) if triple else grid.cells(cube)
        terms.append(
            estimate_dot(
                ConvexBody.from_function(f, f_cells, p),
                ConvexBody.from_function(g, grid.cells(cube), q),
            )
        )
    return terms


def sparse_form(
    family: SparseFamily, f: GridFunction, g: GridFunction, p: float, q: float, triple: bool = False
) -> float:
    """sum over the family of |Q| dot(<<f>>_{avL^p}, <<g>>_{avL^q}); ``triple`` puts f on 3Q."""
    terms = sparse_form_terms(family, f, g, p, q, triple)
    return float(sum(family.grid.measure(cube) * term.value for cube, term in zip(family.cubes, terms)))


def pair_maximal_function(averages: PairAverages) -> np.ndarray:
    """Cellwise sup of a_Q over the chain of cubes containing each cell."""
    grid = averages.grid
    result = np.zeros(grid.n_cells)
    for level in range(grid.depth + 1):
        result = np.maximum(result, averages.level_values(level)[grid.cube_of_cells(level)])
    return result


def pair_maximal_l1(
    f: GridFunction, g: GridFunction, p: float, q: float, averages: Optional[PairAverages] = None
) -> float:
    """|| sup_Q 1_Q a_Q ||_{L^1} over the whole dyadic system of the grid."""
    averages = averages or PairAverages(f, g, p, q)
    return float(f.grid.cell_measure * np.sum(pair_maximal_function(averages)))


# ============================================================================
# Stopping families
# ============================================================================


def stopping_family(
    f: GridFunction, g: GridFunction, config: PairFormConfig, averages: Optional[PairAverages] = None
) -> SparseFamily:
    """Stopping family from the root: children of Q are the maximal cubes with a > A a_Q.

    Witnesses are E(Q) = Q minus its stopping children, so the family is
    delta-sparse whenever the threshold satisfies the decay condition.
    """
    _validate_data(f, g)
    if f.n != config.n:
        raise DimensionMismatchError(f"Config is for n={config.n}, data has n={f.n}")
    grid = f.grid
    averages = averages or PairAverages(f, g, config.p, config.q)
    threshold = config.stopping_threshold
    root = grid.root()
    if averages.value(root) == 0.0:
        return SparseFamily(
            grid=grid,
            cubes=[root],
            witnesses=[np.arange(grid.n_cells)],
            eta=config.delta,
            provenance="stopping",
            a_values=[0.0],
        )

    cubes, witnesses, values = [], [], []
    generation = [root]
    depth = 0
    while generation:
        following = []
        for cube in generation:
            level = averages.value(cube)
            stopped = grid.maximal_cubes(cube, lambda other: averages.value(other) > threshold * level)
            covered = [grid.cells(child) for child in stopped]
            cells = grid.cells(cube)
            witness = np.setdiff1d(cells, np.concatenate(covered)) if covered else np.array(cells)
            cubes.append(cube)
            witnesses.append(witness)
            values.append(level)
            following.extend(stopped)
        logger.debug(f"Stopping generation {depth}: {len(generation)} cubes, {len(following)} children")
        generation = following
        depth += 1
    return SparseFamily(
        grid=grid,
        cubes=cubes,
        witnesses=witnesses,
        eta=config.delta,
        provenance="stopping",
        a_values=values,
    )


def stopping_audit(family: SparseFamily, averages: PairAverages, threshold: float) -> float:
    """max over all cubes Q of a_Q / (A a_S), S the smallest member containing Q."""
    grid = family.grid
    members = {cube: value for cube, value in zip(family.cubes, family.a_values or [])}
    if not members:
        members = {cube: averages.value(cube) for cube in family.cubes}
    worst = 0.0
    for cube in grid.all_cubes():
        enclosing = cube
        while enclosing is not None and enclosing not in members:
            enclosing = grid.parent(enclosing)
        if enclosing is None:
            continue
        value = averages.value(cube)
        bound = threshold * members[enclosing]
        if bound > 0:
            worst = max(worst, value / bound)
        elif value > 0:
            return math.inf
    return worst


def equivalence_report(f: GridFunction, g: GridFunction, config: PairFormConfig) -> EquivalenceReport:
    """Compare the stopping-family sparse form with the pair maximal function."""
    averages = PairAverages(f, g, config.p, config.q)
    family = stopping_family(f, g, config, averages)
    threshold = config.stopping_threshold
    form = float(sum(f.grid.measure(cube) * value for cube, value in zip(family.cubes, family.a_values)))
    maximal = pair_maximal_l1(f, g, config.p, config.q, averages)
    audit = verify_sparse(family)
    exact = averages.exact
    checks = [
        InequalityCheck.compare(
            "equivalence.easy",
            "sum_S a_S |S| <= (1/delta) ||sup_Q 1_Q a_Q||_1",
            form,
            maximal / config.delta,
            exact=exact,
        ),
        InequalityCheck.compare(
            "equivalence.hard",
            "||sup_Q 1_Q a_Q||_1 <= A sum_S a_S |S|",
            maximal,
            threshold * form,
            exact=exact,
        ),
    ]
    return EquivalenceReport(
        p=config.p,
        q=config.q,
        n=config.n,
        delta=config.delta,
        threshold=threshold,
        sparse_form=form,
        maximal_l1=maximal,
        easy_ratio=config.delta * form / maximal if maximal > 0 else None,
        hard_ratio=maximal / (threshold * form) if form > 0 else None,
        family_size=len(family),
        sparseness=audit,
        stopping_ratio=stopping_audit(family, averages, threshold),
        exact=exact,
        checks=checks,
    )


# ============================================================================
# Stopping inequalities
# ============================================================================


def disjoint_sum_check(
    f: GridFunction,
    g: GridFunction,
    container: Cube,
    cubes: Sequence[Cube],
    p: float,
    q: float,
) -> InequalityCheck:
    """sum_i dot(L^p bodies on Q_i)^r <= n^(max(r,1)+r/2) dot(L^p bodies on Q)^r.

    The cubes must be pairwise disjoint subcubes of ``container``.
    """
    _validate_data(f, g)
    grid = f.grid
    config = PairFormConfig(p=p, q=q, n=f.n)
    r = config.r

    def unnormalized(cells: np.ndarray) -> DotEstimate:
        return estimate_dot(
            ConvexBody.from_function(f, cells, p, normalized=False),
            ConvexBody.from_function(g, cells, q, normalized=False),
        )

    parts = [unnormalized(grid.cells(cube)) for cube in cubes]
    whole = unnormalized(grid.cells(container))
    return InequalityCheck.compare(
        "stopping.disjoint_sum",
        "sum_i dot(A_i, B_i)^r <= n^(max(r,1)+r/2) dot(A, B)^r over disjoint subcubes",
        sum(part.value**r for part in parts),
        f.n**config.exponent * whole.value**r,
        rtol=1e-7,
        exact=whole.exact and all(part.exact for part in parts),
    )


def stopping_measure_check(averages: PairAverages, container: Cube, threshold: float) -> InequalityCheck:
    """sum |Q_i| <= n^(max(r,1)+r/2) / A^r |Q| for the maximal Q_i with a >= A a_Q."""
    grid = averages.grid
    config = PairFormConfig(p=averages.p, q=averages.q, n=averages.f.n)
    level = averages.value(container)
    if level > 0:
        selected = grid.maximal_cubes(
            container,
            lambda cube: cube != container and averages.value(cube) >= threshold * level,
        )
    else:
        selected = []
    return InequalityCheck.compare(
        "stopping.measure",
        "sum |Q_i| <= n^(max(r,1)+r/2) / A^r |Q| for cubes with a_Qi >= A a_Q",
        sum(grid.measure(cube) for cube in selected),
        config.n**config.exponent / threshold**config.r * grid.measure(container),
        rtol=1e-7,
        exact=averages.exact,
    )


def random_disjoint_cubes(grid: DyadicGrid, container: Cube, rng: np.random.Generator) -> List[Cube]:
    """A random antichain of subcubes of ``container`` (some cubes kept, some refined)."""
    selected = []
    stack = [container]
    while stack:
        cube = stack.pop()
        if cube.level == grid.depth or rng.random() < 0.35:
            if rng.random() < 0.8:
                selected.append(cube)
        else:
            stack.extend(grid.children(cube))
    return sorted(selected, key=Cube.sort_key)


def stopping_inequality_checks(
    f: GridFunction,
    g: GridFunction,
    p: float,
    q: float,
    rng: np.random.Generator,
    thresholds: Sequence[float] = (2.0, 4.0, 8.0),
) -> List[InequalityCheck]:
    """Both stopping inequalities on one random instance."""
    grid = f.grid
    root = grid.root()
    checks = [disjoint_sum_check(f, g, root, random_disjoint_cubes(grid, root, rng), p, q)]
    averages = PairAverages(f, g, p, q)
    for threshold in thresholds:
        checks.append(stopping_measure_check(averages, root, threshold))
    return checks
