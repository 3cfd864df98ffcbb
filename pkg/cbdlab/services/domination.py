"""
Discrete singular integrals on the one-dimensional torus and their convex
body domination.

Operators are dense kernel matrices acting componentwise on E^n valued
grid functions. The single-scale step picks exceptional cubes inside a cube
Q from quantile thresholds of the dyadic maximal function and the grand
maximal truncation, rounding vector data with the John ellipsoid of its
body on 3Q first. Iterating it from the root gives a (1 - n eps)-sparse
family S with

    |t(f, g)| <= C_n sum_S |S| <<f>>_{avL^1(3S)} . <<g>>_{avL^1(S)}.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from cbdlab.config import settings
from cbdlab.models.experiment import OperatorKind
from cbdlab.models.reports import (
    DominationReport,
    InequalityCheck,
    LTildeReport,
    SingleScaleRecord,
    WeightedNormReport,
)
from cbdlab.services.bodies import ConvexBody, estimate_dot
from cbdlab.services.errors import DimensionMismatchError
from cbdlab.services.grid import Cube, DyadicGrid, GridFunction, dual_exponent, local_norm_on
from cbdlab.services.john import mvee, round_transform
from cbdlab.services.linalg import dual_unit_maximizer, spd_power, spectral_norm
from cbdlab.services.sparse import SparseFamily, sparse_form_terms, verify_sparse
from cbdlab.services.weights import MatrixWeight, a2_characteristic, ainfty_matrix

logger = logging.getLogger(__name__)


# ============================================================================
# Kernel operators
# ============================================================================


class KernelOperator(BaseModel):
    """Tf(x) = sum_y |cell| K(x, y) f(y), acting componentwise on E^n."""

    grid: DyadicGrid
    kind: OperatorKind
    matrix: np.ndarray = Field(..., description="Kernel K(x, y) over cell pairs, zero on the diagonal")
    c: float = Field(default=1.0, gt=0.0, description="Dini size constant")
    delta_mod: float = Field(default=0.5, gt=0.0, description="Dini modulus exponent")
    size_constant: float = Field(..., description="Bound of |K(x, y)| dist(x, y)^d off the diagonal")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def cell_measure(self) -> float:
        return self.grid.cell_measure

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid:
            raise DimensionMismatchError("Function and operator live on different grids")
        return f.with_values(self.cell_measure * np.einsum("xy,ynm->xnm", self.matrix, f.values))

    def apply_array(self, values: np.ndarray) -> np.ndarray:
        """Apply to any array of shape (cells, ...)."""
        return self.cell_measure * np.tensordot(self.matrix, values, axes=(1, 0))

    def apply_adjoint_array(self, values: np.ndarray) -> np.ndarray:
        return self.cell_measure * np.tensordot(self.matrix.T, values, axes=(1, 0))

    def dense(self) -> np.ndarray:
        """Matrix of T on cell values, |cell| K."""
        return self.cell_measure * self.matrix


def _torus_offsets(grid: DyadicGrid) -> np.ndarray:
    """Signed wrapped offsets x - y in [-1/2, 1/2) between cell midpoints."""
    points = grid.midpoints()[:, 0]
    return np.mod(points[:, None] - points[None, :] + 0.5, 1.0) - 0.5


def _validate_operator_grid(grid: DyadicGrid) -> None:
    if grid.dimension != 1:
        raise DimensionMismatchError(f"Kernel operators need d = 1, got d = {grid.dimension}")
    if grid.n_cells > settings.max_dense_cells:
        raise ValueError(
            f"Dense kernels are capped at {settings.max_dense_cells} cells, grid has {grid.n_cells}"
        )


def make_operator(
    grid: DyadicGrid,
    kind: OperatorKind = OperatorKind.HILBERT_PERIODIC,
    c: float = 1.0,
    delta_mod: float = 0.5,
) -> KernelOperator:
    """Build a dense kernel operator.

    hilbert_periodic: K(x, y) = cot(pi (x - y)), exactly antisymmetric.
    dini_smooth: K(x, y) = c sign(x - y) cos(pi t)^(1 + delta_mod) / t with t the
    torus distance; the cosine factor truncates smoothly at the antipode.

    Raises:
        DimensionMismatchError: If the grid is not one-dimensional
        ValueError: For unknown kinds or grids above max_dense_cells
    """
    _validate_operator_grid(grid)
    kind = OperatorKind(kind)
    count = grid.n_cells
    offsets = _torus_offsets(grid)
    distance = np.abs(offsets)

    if kind == OperatorKind.HILBERT_PERIODIC:
        shifts = np.arange(count)
        coefficients = np.zeros(count)
        half = np.arange(1, (count + 1) // 2)
        coefficients[half] = 1.0 / np.tan(math.pi * half / count)
        coefficients[count - half] = -coefficients[half]
        matrix = coefficients[(shifts[:, None] - shifts[None, :]) % count]
        size_constant = 1.0 / math.pi
    elif kind == OperatorKind.DINI_SMOOTH:
        safe = np.where(distance > 0, distance, 1.0)
        profile = c * np.cos(math.pi * distance) ** (1.0 + delta_mod)
        matrix = np.where(distance > 0, np.sign(offsets) * profile / safe, 0.0)
        size_constant = c
    else:
        raise ValueError(f"Unknown operator kind: {kind}")

    off_diagonal = distance > 0
    measured = float(np.max(np.abs(matrix[off_diagonal]) * distance[off_diagonal])) if count > 1 else 0.0
    if measured > size_constant * (1.0 + 1e-12):
        raise ValueError(f"Kernel size bound violated: {measured} > {size_constant}")
    return KernelOperator(
        grid=grid, kind=kind, matrix=matrix, c=c, delta_mod=delta_mod, size_constant=size_constant
    )


# ============================================================================
# Bilinear forms
# ============================================================================


def _validate_data(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise DimensionMismatchError("f and g live on different grids")
    if f.n != g.n or f.m != g.m:
        raise DimensionMismatchError(f"f has shape (n={f.n}, m={f.m}), g has (n={g.n}, m={g.m})")


def bilinear_form(operator: KernelOperator, f: GridFunction, g: GridFunction) -> float:
    """t(f, g) = sum_i <T f_i, g_i> with the E/E* pairing inside every component."""
    _validate_data(f, g)
    return float(operator.cell_measure * np.sum(operator.apply(f).values * g.values))


def localized_form(operator: KernelOperator, cube: Cube, f: GridFunction, g: GridFunction) -> float:
    """t(1_{3Q} f, 1_Q g)."""
    grid = operator.grid
    rows = grid.cells(cube)
    columns = grid.triple_cells(cube)
    image = np.einsum("xy,ynm->xnm", operator.matrix[np.ix_(rows, columns)], f.values[columns])
    return float(operator.cell_measure**2 * np.sum(image * g.values[rows]))


def _grand_truncation_values(operator: KernelOperator, cube: Cube, f: GridFunction) -> np.ndarray:
    grid = operator.grid
    cells = grid.cells(cube)
    outer = grid.triple_cells(cube)
    result = np.zeros(len(cells))
    for sub in grid.descendants(cube):
        annulus = np.setdiff1d(outer, grid.triple_cells(sub), assume_unique=True)
        if len(annulus) == 0:
            continue
        rows = grid.cells(sub)
        image = operator.cell_measure * np.einsum(
            "xy,ynm->xnm", operator.matrix[np.ix_(rows, annulus)], f.values[annulus]
        )
        peak = float(np.max(np.sqrt(np.sum(np.linalg.norm(image, ord=f.r, axis=-1) ** 2, axis=1))))
        positions = np.searchsorted(cells, rows)
        result[positions] = np.maximum(result[positions], peak)
    return result


def grand_truncation(operator: KernelOperator, cube: Cube, f: GridFunction) -> GridFunction:
    """M_{T,Q} f(x) = max over x in Q' inside Q of max_{Q'} |T(1_{3Q \\ 3Q'} f)|, zero outside Q."""
    values = np.zeros(operator.grid.n_cells)
    values[operator.grid.cells(cube)] = _grand_truncation_values(operator, cube, f)
    return GridFunction.scalar(operator.grid, values)


# ============================================================================
# Single-scale step
# ============================================================================


class SingleScaleResult(BaseModel):
    """Exceptional cubes inside one cube and the measured constants."""

    cube: Cube
    exceptional: List[Cube] = Field(default_factory=list)
    exceptional_measure: float = 0.0
    budget: float = Field(..., description="n eps |Q|")
    difference: float = Field(default=0.0, description="t(1_3Q f, 1_Q g) - sum_j t(1_3Qj f, 1_Qj g)")
    constant: float = Field(default=0.0, description="|difference| / (dot |Q|) or the scalar analogue")
    coordinate_constants: List[float] = Field(default_factory=list)
    bound_constant: float = Field(default=0.0, description="max c_i k^(3/2) (1 + mvee tolerance)")
    rank: int = 0
    degenerate: bool = False
    sandwich_ratio: Optional[float] = None
    generation: int = Field(default=0, ge=0, description="Recursion depth at which the cube was processed")

    def to_record(self) -> SingleScaleRecord:
        return SingleScaleRecord(
            cube=str(self.cube),
            exceptional=[str(cube) for cube in self.exceptional],
            exceptional_measure=self.exceptional_measure,
            budget=self.budget,
            constant=self.constant,
            rank=self.rank,
            degenerate=self.degenerate,
            sandwich_ratio=self.sandwich_ratio,
        )


def _validate_epsilon(epsilon: float, n: int) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n * epsilon >= 1.0:
        raise ValueError(f"n * epsilon must stay below 1, got {n} * {epsilon}")


def _quantile_threshold(values: np.ndarray, allowance: int) -> float:
    """Smallest level leaving at most ``allowance`` values strictly above it."""
    return float(np.sort(values)[len(values) - 1 - allowance])


def _scalar_exceptional(operator: KernelOperator, cube: Cube, f: GridFunction, epsilon: float) -> List[Cube]:
    grid = operator.grid
    cells = grid.cells(cube)
    outer = grid.triple_cells(cube)
    localized = np.zeros(grid.n_cells)
    localized[outer] = f.en_norms()[outer]
    maximal = grid.maximal_table(localized)[0][cells]
    truncation = _grand_truncation_values(operator, cube, f)
    allowance = int(math.floor(epsilon * len(cells) / 2.0))
    exceeds = (maximal > _quantile_threshold(maximal, allowance)) | (
        truncation > _quantile_threshold(truncation, allowance)
    )
    if not np.any(exceeds):
        return []
    mask = np.zeros(grid.n_cells, dtype=bool)
    mask[cells[exceeds]] = True
    return grid.maximal_cubes(cube, lambda sub: sub != cube and bool(np.all(mask[grid.cells(sub)])))


def _difference(
    operator: KernelOperator, cube: Cube, exceptional: List[Cube], f: GridFunction, g: GridFunction
) -> float:
    inner = sum(localized_form(operator, sub, f, g) for sub in exceptional)
    return localized_form(operator, cube, f, g) - inner


def _scalar_constant(
    operator: KernelOperator, cube: Cube, exceptional: List[Cube], f: GridFunction, g: GridFunction
) -> float:
    grid = operator.grid
    scale = (
        local_norm_on(f, grid.triple_cells(cube), 1.0)
        * local_norm_on(g, grid.cells(cube), 1.0)
        * grid.measure(cube)
    )
    if scale == 0.0:
        return 0.0
    return abs(_difference(operator, cube, exceptional, f, g)) / scale


def single_scale(
    operator: KernelOperator, cube: Cube, f: GridFunction, g: GridFunction, epsilon: float
) -> SingleScaleResult:
    """Exceptional antichain inside ``cube`` and the measured single-scale constant.

    Scalar data (n = 1) uses quantile thresholds directly. Vector data is
    rounded by the John ellipsoid of <<f>>_{avL^1(3Q)}; a degenerate body is
    handled in coordinates of its span, with g projected onto the span.
    """
    _validate_data(f, g)
    _validate_epsilon(epsilon, f.n)
    grid = operator.grid
    measure = grid.measure(cube)
    budget = f.n * epsilon * measure
    triple = grid.triple_cells(cube)

    if not np.any(f.values[triple]):
        return SingleScaleResult(cube=cube, budget=budget, rank=0, degenerate=f.n > 1)

    if f.n == 1:
        exceptional = _scalar_exceptional(operator, cube, f, epsilon)
        constant = _scalar_constant(operator, cube, exceptional, f, g)
        return SingleScaleResult(
            cube=cube,
            exceptional=exceptional,
            exceptional_measure=sum(grid.measure(sub) for sub in exceptional),
            budget=budget,
            difference=_difference(operator, cube, exceptional, f, g),
            constant=constant,
            coordinate_constants=[constant],
            bound_constant=constant,
            rank=1,
        )

    body = ConvexBody.from_function(f, triple, 1.0)
    ellipsoid = mvee(body)
    rounding = round_transform(ellipsoid)
    if rounding.degenerate:
        forward = spd_power(ellipsoid.axes, -1.0) @ rounding.basis.T
        backward = ellipsoid.axes @ rounding.basis.T
        logger.debug(f"{cube}: degenerate body of rank {rounding.rank}, working in its span")
    else:
        forward, backward = rounding.transform, rounding.inverse_transpose
    rounded_f = f.apply_matrix(forward)
    rounded_g = g.apply_matrix(backward)

    if rounding.rank == 1:
        scalar = single_scale(operator, cube, rounded_f, rounded_g, epsilon)
        return scalar.model_copy(
            update={
                "budget": budget,
                "degenerate": True,
                "sandwich_ratio": ellipsoid.max_ratio,
                "bound_constant": scalar.constant * (1.0 + ellipsoid.tolerance),
            }
        )

    union = []
    for i in range(rounding.rank):
        union.extend(_scalar_exceptional(operator, cube, rounded_f.component(i), epsilon))
    exceptional = grid.maximal_among(union)
    coordinate_constants = [
        _scalar_constant(operator, cube, exceptional, rounded_f.component(i), rounded_g.component(i))
        for i in range(rounding.rank)
    ]
    difference = _difference(operator, cube, exceptional, f, g)
    pairing = estimate_dot(body, ConvexBody.from_function(g, grid.cells(cube), 1.0)).value
    constant = abs(difference) / (pairing * measure) if pairing > 0 else 0.0
    return SingleScaleResult(
        cube=cube,
        exceptional=exceptional,
        exceptional_measure=sum(grid.measure(sub) for sub in exceptional),
        budget=budget,
        difference=difference,
        constant=constant,
        coordinate_constants=coordinate_constants,
        bound_constant=max(coordinate_constants) * rounding.rank**1.5 * (1.0 + ellipsoid.tolerance),
        rank=rounding.rank,
        degenerate=rounding.degenerate,
        sandwich_ratio=ellipsoid.max_ratio,
    )


# ============================================================================
# Global pipeline
# ============================================================================


def domination_family(
    operator: KernelOperator, f: GridFunction, g: GridFunction, epsilon: float
) -> Tuple[SparseFamily, List[SingleScaleResult]]:
    """Iterate the single-scale step from the root until no exceptional cubes remain."""
    _validate_data(f, g)
    if f.n * epsilon >= 0.5:
        raise ValueError(f"n * epsilon must stay below 1/2, got {f.n} * {epsilon}")
    grid = operator.grid
    eta = 1.0 - f.n * epsilon
    if not np.any(f.values) and not np.any(g.values):
        return SparseFamily(grid=grid, eta=eta, provenance="domination"), []

    cubes, witnesses, results = [], [], []
    generation = [grid.root()]
    depth = 0
    while generation:
        following = []
        for cube in generation:
            result = single_scale(operator, cube, f, g, epsilon).model_copy(update={"generation": depth})
            cells = grid.cells(cube)
            covered = [grid.cells(sub) for sub in result.exceptional]
            cubes.append(cube)
            witnesses.append(np.setdiff1d(cells, np.concatenate(covered)) if covered else np.array(cells))
            results.append(result)
            following.extend(result.exceptional)
        logger.info(f"Generation {depth}: {len(generation)} cubes, {len(following)} exceptional")
        generation = following
        depth += 1
    family = SparseFamily(grid=grid, cubes=cubes, witnesses=witnesses, eta=eta, provenance="domination")
    return family, results


def _unprocessed(family: SparseFamily, results: List[SingleScaleResult]) -> List[Cube]:
    """Exceptional cubes that never received their own single-scale step."""
    processed = set(family.cubes)
    pending = {sub for result in results for sub in result.exceptional if sub not in processed}
    return sorted(pending, key=Cube.sort_key)


def cbd_pipeline(
    operator: KernelOperator,
    f: GridFunction,
    g: GridFunction,
    epsilon: float,
    p: float = 1.0,
    q: float = 1.0,
) -> DominationReport:
    """Sparse family and the domination check |t(f, g)| <= C_n * sparse form.

    C_n is the largest measured coordinate constant times n^(3/2) (1 + mvee
    tolerance); the sparse form pairs avL^p bodies of f on 3S with avL^q
    bodies of g on S.
    """
    family, results = domination_family(operator, f, g, epsilon)
    grid = operator.grid
    n = f.n
    lhs = abs(bilinear_form(operator, f, g))
    telescoped = sum(result.difference for result in results)
    terms = sparse_form_terms(family, f, g, p, q, triple=True)
    form = float(sum(grid.measure(cube) * term.value for cube, term in zip(family.cubes, terms)))
    measured = max((max(r.coordinate_constants, default=0.0) for r in results), default=0.0)
    constant_n = measured * n**1.5 * (1.0 + settings.mvee_tolerance)
    rhs = constant_n * form
    dominated = lhs <= rhs * (1.0 + 1e-9) + 1e-12
    if not dominated:
        logger.warning(f"Domination check failed: |t| = {lhs:.6g} > C_n * form = {rhs:.6g}")

    kernel_peak = float(np.max(np.abs(operator.matrix))) if grid.n_cells > 1 else 0.0
    leaf_bound = (
        n**1.5 * 3**grid.dimension * kernel_peak * f.sup_norm() * g.sup_norm() * grid.cell_measure**2
    )
    residual = sum(localized_form(operator, cube, f, g) for cube in _unprocessed(family, results))
    leaf_residual = abs(residual)
    telescoping_error = abs(bilinear_form(operator, f, g) - telescoped - residual) if results else 0.0
    converged = leaf_residual <= leaf_bound and telescoping_error <= 1e-10 * max(1.0, lhs)
    if not converged:
        logger.warning(f"Pipeline did not converge: telescoping error {telescoping_error:.3g}")

    return DominationReport(
        n=n,
        epsilon=epsilon,
        epsilon_n=n * epsilon,
        eta=family.eta,
        family=family.to_records(),
        sparseness=verify_sparse(family),
        constant_measured=measured,
        constant_n=constant_n,
        sandwich_ratios=[r.sandwich_ratio for r in results if r.sandwich_ratio is not None],
        lhs=lhs,
        sparse_form=form,
        rhs=rhs,
        verdict_ratio=lhs / rhs if rhs > 0 else None,
        dominated=dominated,
        dot_exact=all(term.exact for term in terms),
        generations=max((result.generation for result in results), default=-1) + 1,
        telescoping_error=telescoping_error,
        leaf_residual=leaf_residual,
        leaf_bound=leaf_bound,
        converged=converged,
        single_scale=[result.to_record() for result in results],
    )


def domination_checks(report: DominationReport) -> List[InequalityCheck]:
    """The bound, the sparseness and the telescoping identity of one pipeline run."""
    n = report.n
    return [
        InequalityCheck.compare(
            "domination.bound",
            f"|t(f, g)| <= C_n sparse form (n={n})",
            report.lhs,
            report.rhs,
            rtol=1e-7,
            exact=report.dot_exact,
        ),
        InequalityCheck.compare(
            "domination.sparse",
            f"1 - n eps <= min |E(Q)|/|Q| over the family (n={n})",
            report.eta,
            report.sparseness.worst_ratio,
        ),
        InequalityCheck.compare(
            "domination.telescoping",
            f"|t(f, g) - sum of single-scale differences| (n={n})",
            report.telescoping_error,
            0.0,
            atol=1e-10 * max(1.0, report.lhs),
        ),
    ]


# ============================================================================
# Matrix-weighted bounds
# ============================================================================


def dense_weighted_fits(grid: DyadicGrid, n: int) -> bool:
    """Whether the (cells * n)-square conjugated and pairwise matrices fit under max_dense_cells."""
    return grid.n_cells * n <= settings.max_dense_cells


def _require_dense_weighted(grid: DyadicGrid, n: int) -> None:
    if not dense_weighted_fits(grid, n):
        raise ValueError(
            f"Dense weighted matrices are capped at {settings.max_dense_cells} cells * n, "
            f"got {grid.n_cells} * {n}"
        )


def ltilde_matrix(family: SparseFamily, weight: MatrixWeight, other: MatrixWeight) -> np.ndarray:
    """Dense matrix of h -> sum_S 1_S(x) avg_{3S} |V^(1/2)(x) W^(1/2)(y)| h(y)."""
    grid = family.grid
    if weight.grid != grid or other.grid != grid:
        raise DimensionMismatchError("Weights and family live on different grids")
    _require_dense_weighted(grid, weight.n)
    root_w = weight.power(0.5)
    root_v = other.power(0.5)
    norms = spectral_norm(np.einsum("xij,yjk->xyik", root_v, root_w))
    coefficients = np.zeros((grid.n_cells, grid.n_cells))
    for cube in family.cubes:
        triple = grid.triple_cells(cube)
        coefficients[np.ix_(grid.cells(cube), triple)] += 1.0 / len(triple)
    return norms * coefficients


def ltilde_opnorm(
    family: SparseFamily,
    weight: MatrixWeight,
    other: Optional[MatrixWeight] = None,
    direction_count: Optional[int] = None,
) -> LTildeReport:
    """L^2 norm of the positive sparse operator against ([W,V]_A2 [W]_Ainf [V]_Ainf)^(1/2)."""
    other = weight.inverse_weight() if other is None else other
    a2 = a2_characteristic(weight, other)
    ainfty_w = ainfty_matrix(weight, direction_count)
    ainfty_v = ainfty_matrix(other, direction_count)
    bound = math.sqrt(a2 * ainfty_w * ainfty_v)
    if len(family) == 0:
        norm = 0.0
    else:
        norm = float(linalg.svdvals(ltilde_matrix(family, weight, other))[0])
    return LTildeReport(
        norm=norm,
        a2=a2,
        ainfty_w=ainfty_w,
        ainfty_v=ainfty_v,
        bound=bound,
        ratio=norm / bound if bound > 0 else None,
        family_size=len(family),
        family=family.provenance,
    )


def conjugated_matrix(operator: KernelOperator, weight: MatrixWeight) -> np.ndarray:
    """Matrix of W^(1/2) T W^(-1/2) on R^(cells * n)."""
    if weight.grid != operator.grid:
        raise DimensionMismatchError("Weight and operator live on different grids")
    n = weight.n
    _require_dense_weighted(operator.grid, n)
    blocks = np.einsum(
        "xy,xij,yjk->xiyk", operator.dense(), weight.power(0.5), weight.power(-0.5)
    )
    count = operator.grid.n_cells
    return blocks.reshape(count * n, count * n)


def _normalized_dual(values: np.ndarray, r: float, cell_measure: float) -> np.ndarray:
    """Unit element of L^2 with l^r blocks norming ``values`` measured with l^{r'} blocks."""
    measured = dual_exponent(r)
    block_norms = np.linalg.norm(values, ord=measured, axis=-1)
    total = math.sqrt(cell_measure * float(np.sum(block_norms**2)))
    if total == 0.0:
        return np.zeros_like(values)
    return block_norms[..., None] * dual_unit_maximizer(values, measured) / total


def _weighted_l2(values: np.ndarray, root: np.ndarray, r: float, cell_measure: float) -> float:
    weighted = np.einsum("cij,cjm->cim", root, values)
    block_norms = np.linalg.norm(weighted, ord=r, axis=-1)
    return math.sqrt(cell_measure * float(np.sum(block_norms**2)))


def weighted_opnorm_bounds(
    operator: KernelOperator,
    weight: MatrixWeight,
    m: int = 1,
    r: float = 2.0,
    seed: int = 0,
    starts: int = 4,
) -> WeightedNormReport:
    """Lower bound of ||T||_{L^2(W; E^n)} for E = (R^m, l^r).

    r = 2 gives the exact norm as the top singular value of the conjugated
    matrix when it fits under max_dense_cells. Otherwise alternating
    Hoelder-dual ascent over normalized pairs (f, g) gives a certified lower
    bound <Tf, g> / (||f||_W ||g||_{W^-1}).
    """
    a2 = a2_characteristic(weight)
    upper_ref = a2**1.5
    if r == 2.0 and dense_weighted_fits(operator.grid, weight.n):
        lower = float(linalg.svdvals(conjugated_matrix(operator, weight))[0])
        return WeightedNormReport(
            label=weight.label,
            lower=lower,
            exact=True,
            a2=a2,
            a2_admissible=weight.a2_admissible,
            upper_ref=upper_ref,
            ratio=lower / upper_ref,
            method="svd",
        )

    cell = operator.cell_measure
    r_dual = dual_exponent(r)
    root = weight.power(0.5)
    inverse_root = weight.power(-0.5)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        f = rng.standard_normal((operator.grid.n_cells, weight.n, m))
        value = 0.0
        for _ in range(settings.ascent_max_sweeps):
            image = np.einsum("cij,cjm->cim", root, operator.apply_array(f))
            g = np.einsum("cij,cjm->cim", root, _normalized_dual(image, r_dual, cell))
            preimage = np.einsum("cij,cjm->cim", inverse_root, operator.apply_adjoint_array(g))
            f = np.einsum("cij,cjm->cim", inverse_root, _normalized_dual(preimage, r, cell))
            pairing = cell * float(np.sum(operator.apply_array(f) * g))
            scale = _weighted_l2(f, root, r, cell) * _weighted_l2(g, inverse_root, r_dual, cell)
            updated = pairing / scale if scale > 0 else 0.0
            if updated - value < settings.ascent_tolerance:
                value = max(value, updated)
                break
            value = updated
        best = max(best, value)
    return WeightedNormReport(
        label=weight.label,
        lower=best,
        exact=False,
        a2=a2,
        a2_admissible=weight.a2_admissible,
        upper_ref=upper_ref,
        ratio=best / upper_ref,
        method="ascent",
    )