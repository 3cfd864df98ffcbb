"""
Generalized commutators f -> sum_i a_i T(b_i f) on the one-dimensional torus.

A symbol pair (a, b) enters every estimate through the kernel
F(x, y) = a(x) . b(y): the classical commutator [b, T] has
F = b(x) - b(y), the k-th order one (b(x) - b(y))^k. Boundedness on L^p
follows from convex body domination of T once

    A_{s,t} = sup_Q ||F||_{avL^(s,t)_min(Q x Q)}

is finite, and the mixed-norm constants below are computed exhaustively
over every dyadic cube of the grid.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import linalg
from scipy.special import comb

from cbdlab.config import settings
from cbdlab.models.experiment import SymbolKind
from cbdlab.models.reports import CommutatorReport, DominationReport, InequalityCheck, PowerInequalityReport
from cbdlab.services.bodies import ConvexBody, estimate_dot
from cbdlab.services.domination import KernelOperator, cbd_pipeline
from cbdlab.services.errors import DimensionMismatchError
from cbdlab.services.grid import Cube, DyadicGrid, GridFunction, dual_exponent, local_norm_on

logger = logging.getLogger(__name__)

MAX_ITERATED_ORDER = 20

KernelSource = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


# ============================================================================
# Symbol pairs
# ============================================================================


class SymbolPair(BaseModel):
    """Pre-multipliers a_i and post-multipliers b_i, each of shape (terms, cells)."""

    grid: DyadicGrid
    kind: SymbolKind
    a: np.ndarray = Field(..., description="Pre-multipliers a_i(x), shape (terms, cells)")
    b: np.ndarray = Field(..., description="Post-multipliers b_i(y), shape (terms, cells)")
    sources: np.ndarray = Field(..., description="Scalar symbols the pair was built from, shape (k, cells)")
    order: Optional[int] = Field(default=None, description="k of an iterated commutator")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("a", "b", "sources", mode="before")
    @classmethod
    def _freeze(cls, value):
        array = np.atleast_2d(np.array(value, dtype=float))
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shapes(self):
        cells = self.grid.n_cells
        if self.a.shape != self.b.shape or self.a.shape[1] != cells:
            raise DimensionMismatchError(
                f"Symbols must both have shape (terms, {cells}), got {self.a.shape} and {self.b.shape}"
            )
        if self.sources.shape[1] != cells:
            raise DimensionMismatchError(f"Source symbols must have {cells} cells, got {self.sources.shape}")
        return self

    @property
    def terms(self) -> int:
        return self.a.shape[0]

    def kernel(self, rows: Optional[np.ndarray] = None, columns: Optional[np.ndarray] = None) -> np.ndarray:
        """F(x, y) = a(x) . b(y) for x in ``rows`` and y in ``columns`` (all cells by default)."""
        rows = np.arange(self.grid.n_cells) if rows is None else rows
        columns = np.arange(self.grid.n_cells) if columns is None else columns
        return self.a[:, rows].T @ self.b[:, columns]


def _validate_symbol(grid: DyadicGrid, values, name: str) -> np.ndarray:
    if values is None:
        raise ValueError(f"Symbol '{name}' is required for this kind")
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.shape[0] != grid.n_cells:
        raise DimensionMismatchError(f"Symbol '{name}' needs {grid.n_cells} cells, got {array.shape[0]}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"Symbol '{name}' must be finite")
    return array


def build_symbols(
    grid: DyadicGrid,
    kind: SymbolKind,
    symbol: Optional[np.ndarray] = None,
    second: Optional[np.ndarray] = None,
    k: int = 1,
    alpha: float = 0.5,
    beta: float = 0.25,
    pre: Optional[np.ndarray] = None,
    post: Optional[np.ndarray] = None,
) -> SymbolPair:
    """Build the symbol pair of a commutator kind.

    classical: a = (b, -1), b = (1, b), kernel b(x) - b(y).
    iterated: a_i = C(k, i) b^(k-i), b_i = (-b)^i, kernel (b(x) - b(y))^k.
    mixed: kernel (b1(x) - b1(y)) (b2(x) - b2(y)).
    power: a = (b^alpha, -b^beta), b = (b^beta, b^alpha) for b >= 0.
    custom: ``pre`` and ``post`` as given.

    Raises:
        ValueError: For missing symbols, k outside [1, 20], negative powers
            or negative b in the power kind
    """
    kind = SymbolKind(kind)
    ones = np.ones(grid.n_cells)

    if kind == SymbolKind.CLASSICAL:
        b = _validate_symbol(grid, symbol, "b")
        return SymbolPair(grid=grid, kind=kind, a=[b, -ones], b=[ones, b], sources=[b])

    if kind == SymbolKind.ITERATED:
        if not 1 <= k <= MAX_ITERATED_ORDER:
            raise ValueError(f"Iterated order k must lie in [1, {MAX_ITERATED_ORDER}], got {k}")
        b = _validate_symbol(grid, symbol, "b")
        a = [float(comb(k, i, exact=True)) * b ** (k - i) for i in range(k + 1)]
        post_terms = [(-b) ** i for i in range(k + 1)]
        return SymbolPair(grid=grid, kind=kind, a=a, b=post_terms, sources=[b], order=k)

    if kind == SymbolKind.MIXED:
        b1 = _validate_symbol(grid, symbol, "b1")
        b2 = _validate_symbol(grid, second, "b2")
        return SymbolPair(
            grid=grid,
            kind=kind,
            a=[b1 * b2, -b1, -b2, ones],
            b=[ones, b2, b1, b1 * b2],
            sources=[b1, b2],
        )

    if kind == SymbolKind.POWER:
        b = _validate_symbol(grid, symbol, "b")
        if alpha < 0 or beta < 0:
            raise ValueError(f"Powers must be nonnegative, got alpha={alpha}, beta={beta}")
        if np.any(b < 0):
            raise ValueError("Power symbols need b >= 0 on every cell")
        return SymbolPair(
            grid=grid, kind=kind, a=[b**alpha, -(b**beta)], b=[b**beta, b**alpha], sources=[b]
        )

    if kind == SymbolKind.CUSTOM:
        if pre is None or post is None:
            raise ValueError("Custom symbols need both pre and post multipliers")
        return SymbolPair(grid=grid, kind=kind, a=pre, b=post, sources=np.zeros((0, grid.n_cells)))

    raise ValueError(f"Unknown symbol kind: {kind}")


def _validate_operand(pair: SymbolPair, f: GridFunction) -> None:
    if f.grid != pair.grid:
        raise DimensionMismatchError("Function and symbols live on different grids")
    if f.n != 1:
        raise DimensionMismatchError(f"Generalized commutators act on scalar functions, got n={f.n}")


def apply_generalized(operator: KernelOperator, pair: SymbolPair, f: GridFunction) -> GridFunction:
    """sum_i a_i T(b_i f)."""
    _validate_operand(pair, f)
    image = np.zeros_like(f.values)
    for pre, post in zip(pair.a, pair.b):
        image += pre[:, None, None] * operator.apply_array(post[:, None, None] * f.values)
    return f.with_values(image)


def generalized_matrix(operator: KernelOperator, pair: SymbolPair) -> np.ndarray:
    """Matrix |cell| K(x, y) F(x, y) of the generalized commutator on cell values."""
    if operator.grid != pair.grid:
        raise DimensionMismatchError("Operator and symbols live on different grids")
    return operator.dense() * pair.kernel()


def lift(pair: SymbolPair, f: GridFunction, g: GridFunction) -> Tuple[GridFunction, GridFunction]:
    """The vector functions (b f, a g) with <a . T(b f), g> = t(b f, a g)."""
    _validate_operand(pair, f)
    _validate_operand(pair, g)
    lifted_f = f.with_values(pair.b.T[:, :, None] * f.values)
    lifted_g = g.with_values(pair.a.T[:, :, None] * g.values)
    return lifted_f, lifted_g


# ============================================================================
# Mixed norms and oscillation constants
# ============================================================================


def _validate_mixed_exponents(s: float, t: float) -> None:
    for name, value in (("s", s), ("t", t)):
        if not 1.0 <= value < math.inf:
            raise ValueError(f"Exponent {name} must lie in [1, inf), got {value}")


def mixed_min_norm(
    kernel: KernelSource,
    s: float,
    t: float,
    rows: Optional[np.ndarray] = None,
    columns: Optional[np.ndarray] = None,
) -> float:
    """min of the two iterated normalized norms of F, x carrying s and y carrying t.

    Args:
        kernel: Matrix F[x, y], or a callable (rows, columns) -> matrix
        s: Exponent in x (rows)
        t: Exponent in y (columns)
        rows: Cells of the x cube when ``kernel`` is callable
        columns: Cells of the y cube when ``kernel`` is callable
    """
    _validate_mixed_exponents(s, t)
    if callable(kernel):
        if rows is None or columns is None:
            raise ValueError("A callable kernel needs both rows and columns")
        kernel = kernel(rows, columns)
    magnitude = np.abs(np.asarray(kernel, dtype=float))
    x_outer = float(np.mean(np.mean(magnitude**t, axis=1) ** (s / t)) ** (1.0 / s))
    y_outer = float(np.mean(np.mean(magnitude**s, axis=0) ** (t / s)) ** (1.0 / t))
    return min(x_outer, y_outer)


def _oscillations(grid: DyadicGrid, values: np.ndarray, level: int) -> np.ndarray:
    """b - <b>_Q on every cell for the level-``level`` cubes."""
    means = grid.level_averages(values, level)
    return values - means[grid.cube_of_cells(level)]


def bmo_norm(grid: DyadicGrid, values: np.ndarray, s: float = 1.0) -> float:
    """Mean-centred sup_Q (avg_Q |b - <b>_Q|^s)^(1/s) over all dyadic cubes."""
    if not 1.0 <= s < math.inf:
        raise ValueError(f"BMO exponent must lie in [1, inf), got {s}")
    values = np.asarray(values, dtype=float).reshape(-1)
    best = 0.0
    for level in range(grid.depth + 1):
        deviation = np.abs(_oscillations(grid, values, level)) ** s
        best = max(best, float(np.max(grid.level_averages(deviation, level))) ** (1.0 / s))
    return best


def _oscillation_products(
    grid: DyadicGrid, first: np.ndarray, second: np.ndarray, s: float
) -> Tuple[float, float]:
    """(S_s, T_s) of a pair of symbols."""
    s_value, t_value = 0.0, 0.0
    for level in range(grid.depth + 1):
        one = np.abs(_oscillations(grid, first, level)) ** s
        two = np.abs(_oscillations(grid, second, level)) ** s
        separate = (grid.level_averages(one, level) * grid.level_averages(two, level)) ** (1.0 / s)
        joint = grid.level_averages(one * two, level) ** (1.0 / s)
        s_value = max(s_value, float(np.max(separate)))
        t_value = max(t_value, float(np.max(joint)))
    return s_value, t_value


def _sup_mixed_norm(pair: SymbolPair, s: float, t: float, triple: bool) -> float:
    grid = pair.grid
    best = 0.0
    for cube in grid.all_cubes():
        rows = grid.cells(cube)
        columns = grid.triple_cells(cube) if triple else rows
        best = max(best, mixed_min_norm(pair.kernel, s, t, rows, columns))
    return best


def a_st_constants(pair: SymbolPair, s: float, t: float) -> CommutatorReport:
    """A_{s,t} over Q x Q and Q x 3Q, S_s and T_s of mixed pairs, BMO norms of the sources.

    Classical pairs are checked against the envelope BMO_s <= A_{s,s} <= 2 BMO_s
    and mixed pairs against A_s <= 2 (T_s + S_s); both only when s = t.
    """
    if not (1.0 < s < math.inf and 1.0 < t < math.inf):
        raise ValueError(f"Exponents s, t must lie in (1, inf), got s={s}, t={t}")
    grid = pair.grid
    a_st = _sup_mixed_norm(pair, s, t, triple=False)
    a_st_triple = _sup_mixed_norm(pair, s, t, triple=True)
    bmo = [bmo_norm(grid, source, s) for source in pair.sources]
    checks: List[InequalityCheck] = []
    s_s = t_s = mixed_ratio = None

    if pair.kind == SymbolKind.CLASSICAL and s == t:
        checks.append(
            InequalityCheck.compare(
                "commutator.bmo_le_classical",
                "||b||_BMO^s <= A_s for the classical pair",
                bmo[0],
                a_st,
            )
        )
        checks.append(
            InequalityCheck.compare(
                "commutator.classical_le_2bmo",
                "A_s <= 2 ||b||_BMO^s for the classical pair",
                a_st,
                2.0 * bmo[0],
            )
        )

    if pair.kind == SymbolKind.MIXED:
        s_s, t_s = _oscillation_products(grid, pair.sources[0], pair.sources[1], s)
        if s == t:
            checks.append(
                InequalityCheck.compare(
                    "commutator.mixed_le_2(T+S)",
                    "A_s <= 2 (T_s + S_s) for a mixed pair",
                    a_st,
                    2.0 * (t_s + s_s),
                )
            )
        mixed_ratio = a_st / (t_s + s_s) if t_s + s_s > 0 else None

    return CommutatorReport(
        kind=pair.kind.value,
        s=s,
        t=t,
        a_st=a_st,
        a_st_triple=a_st_triple,
        s_s=s_s,
        t_s=t_s,
        mixed_ratio=mixed_ratio,
        bmo=bmo,
        checks=checks,
    )


# ============================================================================
# Powers of BMO functions
# ============================================================================


def _validate_powers(alpha: float, beta: float) -> None:
    if alpha < 0 or beta < 0:
        raise ValueError(f"Powers must be nonnegative, got alpha={alpha}, beta={beta}")
    if alpha + beta > 1.0:
        raise ValueError(f"alpha + beta must be at most 1, got {alpha + beta}")


def elementary_power_check(
    rng: np.random.Generator, samples: int = 100_000, bound: float = 10.0
) -> InequalityCheck:
    """|u^d - v^d| max(u, v)^(1-d) <= |u - v| on random (u, v, d) in [0, bound]^2 x [0, 1]."""
    u = rng.uniform(0.0, bound, samples)
    v = rng.uniform(0.0, bound, samples)
    delta = rng.uniform(0.0, 1.0, samples)
    # the endpoint d = 1 is the equality case
    delta[: min(samples, 16)] = 1.0
    lhs = np.abs(u**delta - v**delta) * np.maximum(u, v) ** (1.0 - delta)
    excess = float(np.max(lhs - np.abs(u - v)))
    return InequalityCheck.compare(
        "power.elementary",
        "|u^d - v^d| max(u, v)^(1-d) <= |u - v| (largest excess)",
        excess,
        0.0,
        atol=1e-12 * bound,
    )


def bmo_power_check(
    grid: DyadicGrid,
    values: np.ndarray,
    alpha: float,
    beta: float,
    p: float,
    rng: Optional[np.random.Generator] = None,
    samples: int = 100_000,
) -> PowerInequalityReport:
    """Pointwise and averaged bounds for B(x, y) = b(x)^alpha b(y)^beta - b(x)^beta b(y)^alpha.

    Checks |B| <= |b(x) - b(y)|^(alpha+beta) on all cell pairs and
    (avg_QxQ |B|^p)^(1/p) <= (2 avg-osc_p(b, Q))^(alpha+beta) on every cube,
    plus the elementary inequality on random samples.

    Raises:
        ValueError: If alpha + beta > 1, a power is negative, b < 0 somewhere
            or p < 1
    """
    _validate_powers(alpha, beta)
    if not 1.0 <= p < math.inf:
        raise ValueError(f"Exponent p must lie in [1, inf), got {p}")
    b = _validate_symbol(grid, values, "b")
    if np.any(b < 0):
        raise ValueError("The power inequality needs b >= 0 on every cell")
    if grid.n_cells > settings.max_dense_cells:
        raise ValueError(f"Pairwise checks are capped at {settings.max_dense_cells} cells")

    gamma = alpha + beta
    scale = max(float(np.max(b)), 1.0) ** gamma
    pair = b[:, None] ** alpha * b[None, :] ** beta - b[:, None] ** beta * b[None, :] ** alpha
    envelope = np.abs(b[:, None] - b[None, :]) ** gamma
    stable = envelope > 1e-8 * scale
    pointwise_ratio = float(np.max(np.abs(pair[stable]) / envelope[stable])) if np.any(stable) else 0.0

    integrated_ratio = 0.0
    worst_excess = -math.inf
    for cube in grid.all_cubes():
        cells = grid.cells(cube)
        averaged = float(np.mean(np.abs(pair[np.ix_(cells, cells)]) ** p) ** (1.0 / p))
        oscillation = float(np.mean(np.abs(b[cells] - np.mean(b[cells])) ** p) ** (1.0 / p))
        bound = (2.0 * oscillation) ** gamma
        worst_excess = max(worst_excess, averaged - bound)
        if bound > 0:
            integrated_ratio = max(integrated_ratio, averaged / bound)

    bmo_p = bmo_norm(grid, b, p)
    rng = np.random.default_rng(0) if rng is None else rng
    checks = [
        InequalityCheck.compare(
            "power.pointwise",
            "|B(x,y)| <= |b(x) - b(y)|^(alpha+beta) (largest excess)",
            float(np.max(np.abs(pair) - envelope)),
            0.0,
            atol=1e-12 * scale,
        ),
        InequalityCheck.compare(
            "power.averaged",
            "(avg |B|^p)^(1/p) <= (2 osc_p(b, Q))^(alpha+beta) on every cube (largest excess)",
            worst_excess,
            0.0,
            atol=1e-12 * scale,
        ),
        elementary_power_check(rng, samples),
    ]
    return PowerInequalityReport(
        alpha=alpha,
        beta=beta,
        p=p,
        pointwise_ratio=pointwise_ratio,
        integrated_ratio=integrated_ratio,
        bmo_p=bmo_p,
        checks=checks,
    )


# ============================================================================
# Maximal operators and L^p norms
# ============================================================================


def doob_constant(r: float, p: float) -> float:
    """((p/r)')^(1/r), the dyadic bound of M_r on L^p for p > r."""
    if not 1.0 <= r < p:
        raise ValueError(f"Need 1 <= r < p, got r={r}, p={p}")
    return dual_exponent(p / r) ** (1.0 / r)


def _lp_norm(grid: DyadicGrid, values: np.ndarray, p: float) -> float:
    return float((grid.cell_measure * np.sum(np.abs(values) ** p)) ** (1.0 / p))


def triple_maximal(grid: DyadicGrid, values: np.ndarray, r: float = 1.0) -> np.ndarray:
    """sup over dyadic Q containing x of (avg_{3Q} |h|^r)^(1/r)."""
    powered = np.abs(np.asarray(values, dtype=float).reshape(-1)) ** r
    result = np.zeros(grid.n_cells)
    for cube in grid.all_cubes():
        cells = grid.cells(cube)
        result[cells] = np.maximum(result[cells], float(np.mean(powered[grid.triple_cells(cube)])))
    return result ** (1.0 / r)


def maximal_operator_ratio(grid: DyadicGrid, values: np.ndarray, r: float, p: float) -> InequalityCheck:
    """||M_r h||_{L^p} <= ((p/r)')^(1/r) ||h||_{L^p} for the dyadic maximal function."""
    constant = doob_constant(r, p)
    values = np.asarray(values, dtype=float).reshape(-1)
    return InequalityCheck.compare(
        "maximal.doob",
        f"||M_r h||_p <= ((p/r)')^(1/r) ||h||_p with r={r:g}, p={p:g}",
        _lp_norm(grid, grid.dyadic_maximal(values, r), p),
        constant * _lp_norm(grid, values, p),
    )


def _duality_map(values: np.ndarray, p: float) -> np.ndarray:
    return np.sign(values) * np.abs(values) ** (p - 1.0)


def lp_operator_lower_bound(
    matrix: np.ndarray,
    p: float,
    seed: int = 0,
    starts: Optional[int] = None,
) -> Tuple[float, np.ndarray]:
    """Lower bound of the l^p operator norm of ``matrix`` and the vector attaining it.

    p = 2 is exact through the singular value decomposition. Otherwise the
    nonlinear power iteration x -> J_{p'}(M^T J_p(M x)) runs from random
    starts; every iterate certifies ||M x||_p / ||x||_p.
    """
    if not 1.0 < p < math.inf:
        raise ValueError(f"Exponent p must lie in (1, inf), got {p}")
    if not np.any(matrix):
        return 0.0, np.ones(matrix.shape[1])
    if p == 2.0:
        _, singular, right = linalg.svd(matrix)
        return float(singular[0]), right[0]

    p_dual = dual_exponent(p)
    rng = np.random.default_rng(seed)
    best, best_vector = 0.0, np.ones(matrix.shape[1])
    for _ in range(settings.ascent_random_starts if starts is None else starts):
        x = rng.standard_normal(matrix.shape[1])
        x /= np.linalg.norm(x, ord=p)
        value = 0.0
        for _ in range(settings.ascent_max_sweeps):
            image = matrix @ x
            updated = float(np.linalg.norm(image, ord=p))
            if updated > best:
                best, best_vector = updated, x.copy()
            if updated - value < settings.ascent_tolerance * max(1.0, updated):
                break
            value = updated
            back = matrix.T @ _duality_map(image, p)
            if not np.any(back):
                break
            x = _duality_map(back, p_dual)
            x /= np.linalg.norm(x, ord=p)
    return best, best_vector


# ============================================================================
# Per-instance domination chain
# ============================================================================


def cbd_bound_check(report: DominationReport) -> InequalityCheck:
    """|<a . T(b f), g>| <= C sum_S |S| dot(<<b f>>_{3S}, <<a g>>_S) from a pipeline run on (b f, a g)."""
    return InequalityCheck.compare(
        "commutator.sparse_bound",
        "|<a.T(bf), g>| <= C_n sum_S |S| <<bf>>_{avL1(3S)} . <<ag>>_{avL1(S)}",
        report.lhs,
        report.rhs,
        rtol=1e-7,
        exact=report.dot_exact,
    )


def mixed_holder_check(
    pair: SymbolPair,
    f: GridFunction,
    g: GridFunction,
    cube: Cube,
    s: float,
    t: float,
    triple: bool = False,
) -> InequalityCheck:
    """dot(<<b f>>_{avL1}, <<a g>>_{avL1}) <= ||F||_(s,t)min ||f||_{avL^t'} ||g||_{avL^s'}.

    g and a live on ``cube``; f and b on ``cube`` or its triple.
    """
    if not (1.0 < s < math.inf and 1.0 < t < math.inf):
        raise ValueError(f"Exponents s, t must lie in (1, inf), got s={s}, t={t}")
    grid = pair.grid
    rows = grid.cells(cube)
    columns = grid.triple_cells(cube) if triple else rows
    lifted_f, lifted_g = lift(pair, f, g)
    estimate = estimate_dot(
        ConvexBody.from_function(lifted_f, columns, 1.0),
        ConvexBody.from_function(lifted_g, rows, 1.0),
    )
    bound = (
        mixed_min_norm(pair.kernel, s, t, rows, columns)
        * local_norm_on(f, columns, dual_exponent(t))
        * local_norm_on(g, rows, dual_exponent(s))
    )
    return InequalityCheck.compare(
        "commutator.mixed_holder",
        f"dot of symbol bodies on {cube} <= ||a.b||_(s,t)min ||f||_avL^t' ||g||_avL^s'",
        estimate.value,
        bound,
        rtol=1e-7,
        exact=estimate.exact,
    )


def _validate_lp_exponent(p: float, s: float, t: float) -> None:
    low = dual_exponent(t)
    if not low < p < s:
        raise ValueError(f"p must lie in (t', s) = ({low:g}, {s:g}), got {p}")


def default_lp_exponent(s: float, t: float) -> float:
    """2 when admissible, otherwise the midpoint of (t', s)."""
    low = dual_exponent(t)
    if low < 2.0 < s:
        return 2.0
    return 0.5 * (low + s)


def lp_commutator_report(
    operator: KernelOperator,
    pair: SymbolPair,
    s: float,
    t: float,
    p: float,
    epsilon: float = 0.05,
    seed: int = 0,
) -> CommutatorReport:
    """Two-sided audit of the L^p norm of a . T b.

    The lower bound is a certified l^p power-iteration value attained by a
    unit f; g is its norming dual. The upper bound runs the domination
    pipeline on (b f, a g) and follows the chain

        |<a.T(bf), g>| <= (C/eta) A_{s,t}(Q x 3Q) ||M^3_{t'} f||_p ||M_{s'} g||_{p'},

    with M^3 the maximal function over the triples of dyadic cubes. The
    caller keeps terms * epsilon below 1/2.

    Raises:
        ValueError: If p lies outside (t', s)
    """
    _validate_lp_exponent(p, s, t)
    grid = operator.grid
    constants = a_st_constants(pair, s, t)
    matrix = generalized_matrix(operator, pair)
    lower, vector = lp_operator_lower_bound(matrix, p, seed=seed)

    f_values = vector / _lp_norm(grid, vector, p)
    image = matrix @ f_values
    dual = _duality_map(image, p)
    dual_norm = _lp_norm(grid, dual, dual_exponent(p))
    g_values = dual / dual_norm if dual_norm > 0 else np.zeros_like(dual)
    f = GridFunction.scalar(grid, f_values)
    g = GridFunction.scalar(grid, g_values)

    domination = cbd_pipeline(operator, *lift(pair, f, g), epsilon)
    t_dual, s_dual = dual_exponent(t), dual_exponent(s)
    upper = (
        domination.constant_n
        / domination.eta
        * constants.a_st_triple
        * _lp_norm(grid, triple_maximal(grid, f_values, t_dual), p)
        * _lp_norm(grid, grid.dyadic_maximal(g_values, s_dual), dual_exponent(p))
    )
    logger.info(f"{pair.kind.value} commutator on L^{p:g}: lower {lower:.6g}, upper {upper:.6g}")

    checks = list(constants.checks)
    checks.append(cbd_bound_check(domination))
    checks.append(
        InequalityCheck.compare(
            "commutator.lp_two_sided",
            "measured ||a.T b||_{L^p} <= (C/eta) A_{s,t} ||M^3_t' f||_p ||M_s' g||_p'",
            lower,
            upper,
            rtol=1e-7,
            exact=domination.dot_exact,
        )
    )
    checks.append(maximal_operator_ratio(grid, g_values, s_dual, dual_exponent(p)))
    return constants.model_copy(
        update={
            "p": p,
            "lower_bound": lower,
            "upper_bound": upper,
            "constant": domination.constant_n,
            "eta": domination.eta,
            "checks": checks,
        }
    )


def sweep_maximal_ratios(
    grid: DyadicGrid, r: float, p: float, rng: np.random.Generator, count: int = 20
) -> List[InequalityCheck]:
    """Doob bounds for M_r on L^p over random functions."""
    return [maximal_operator_ratio(grid, rng.standard_normal(grid.n_cells), r, p) for _ in range(count)]


def random_symbol(grid: DyadicGrid, rng: np.random.Generator, kind: str = "log") -> np.ndarray:
    """Sampled symbols: log-distance to a random point ("log") or smooth random noise ("smooth")."""
    points = grid.midpoints()[:, 0]
    if kind == "log":
        offsets = np.abs(points - rng.uniform())
        distance = np.maximum(np.minimum(offsets, 1.0 - offsets), 0.25 / grid.side)
        return np.log(distance)
    if kind == "smooth":
        modes = np.arange(1, 5)
        coefficients = rng.standard_normal((2, len(modes))) / modes
        phase = 2.0 * math.pi * np.outer(points, modes)
        return np.cos(phase) @ coefficients[0] + np.sin(phase) @ coefficients[1]
    raise ValueError(f"Unknown random symbol kind: {kind}")

