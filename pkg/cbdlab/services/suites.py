"""
Property suites run by ``cbdlab verify``.

Every suite draws its random instances from a generator seeded by the run
seed and the suite's position in SUITE_NAMES, so selecting a subset of
suites does not change the instances of the others.
"""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from cbdlab.models.experiment import SUITE_NAMES, ExperimentConfig, SymbolKind, WeightKind, WeightSpec
from cbdlab.models.reports import InequalityCheck, SuiteResult
from cbdlab.services.bodies import ConvexBody
from cbdlab.services.commutators import (
    a_st_constants,
    apply_generalized,
    bmo_power_check,
    build_symbols,
    default_lp_exponent,
    lp_commutator_report,
    mixed_holder_check,
    random_symbol,
    sweep_maximal_ratios,
)
from cbdlab.services.domination import (
    bilinear_form,
    cbd_pipeline,
    domination_checks,
    ltilde_opnorm,
    make_operator,
    weighted_opnorm_bounds,
)
from cbdlab.services.grid import DyadicGrid, GridFunction, dual_exponent
from cbdlab.services.john import coordinate_product_check, sandwich_check
from cbdlab.services.sparse import (
    PairFormConfig,
    SparseFamily,
    equivalence_report,
    stopping_family,
    stopping_inequality_checks,
)
from cbdlab.services.weights import a2_characteristic, ainfty_matrix, make_weight

logger = logging.getLogger(__name__)

SuiteFunction = Callable[[ExperimentConfig, np.random.Generator], SuiteResult]

POWER_FAMILY = (0.0, 0.2, 0.4, 0.6, 0.8)
REFINEMENT_LEVELS = (6, 7, 8, 9)


def suite_rng(config: ExperimentConfig, name: str) -> np.random.Generator:
    return np.random.default_rng([config.seed, SUITE_NAMES.index(name)])


def line_grid(config: ExperimentConfig) -> DyadicGrid:
    """One-dimensional grid of the configured depth; kernel operators live on it."""
    return DyadicGrid(dimension=1, depth=config.grid.L)


def config_grid(config: ExperimentConfig) -> DyadicGrid:
    return DyadicGrid(dimension=config.grid.d, depth=config.grid.L)


def random_body(
    rng: np.random.Generator, n: int, atoms: Optional[int] = None, degenerate: bool = False
) -> ConvexBody:
    """Zonotope-type body of ``atoms`` random generators in R^n."""
    atoms = atoms or int(rng.integers(n + 1, 4 * n + 1))
    blocks = rng.standard_normal((atoms, n, 1))
    if degenerate and n > 1:
        blocks[:, -1] = blocks[:, 0]
    return ConvexBody(blocks=blocks, weights=np.full(atoms, 1.0 / atoms), p=1.0, r=2.0)


def _deviation_check(anchor: str, description: str, deviation: float, scale: float) -> InequalityCheck:
    return InequalityCheck.compare(anchor, description, deviation, 0.0, atol=1e-12 * max(1.0, scale))


# ============================================================================
# Geometry
# ============================================================================


def sandwich_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    checks = []
    for index in range(config.suite.instances):
        n = 1 + index % 3
        checks.extend(sandwich_check(random_body(rng, n, degenerate=index % 4 == 3)))
    return SuiteResult(name="sandwich", instances=config.suite.instances, checks=checks)


def coordinate_product_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    checks = []
    for index in range(config.suite.instances):
        n = 1 + index % 2
        checks.extend(coordinate_product_check(random_body(rng, n), random_body(rng, n)))
    return SuiteResult(name="coordinate_product", instances=config.suite.instances, checks=checks)


def algebra_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    """Basis independence and transpose identities of t, and the commutator identities."""
    grid = line_grid(config)
    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    n = max(config.values.n, 2)
    checks = []
    for _ in range(config.suite.instances):
        f = GridFunction.random(grid, n, rng)
        g = GridFunction.random(grid, n, rng)
        value = bilinear_form(operator, f, g)
        orthogonal, _ = np.linalg.qr(rng.standard_normal((n, n)))
        matrix = rng.standard_normal((n, n))
        scale = abs(value) + f.sup_norm() * g.sup_norm()
        checks.append(
            _deviation_check(
                "algebra.basis_independence",
                "|t(Of, Og) - t(f, g)| for orthogonal O",
                abs(
                    bilinear_form(operator, f.apply_matrix(orthogonal), g.apply_matrix(orthogonal)) - value
                ),
                scale,
            )
        )
        checks.append(
            _deviation_check(
                "algebra.transpose",
                "|t(Af, g) - t(f, A^T g)|",
                abs(
                    bilinear_form(operator, f.apply_matrix(matrix), g)
                    - bilinear_form(operator, f, g.apply_matrix(matrix.T))
                ),
                scale * float(np.max(np.abs(matrix))),
            )
        )

        b = random_symbol(grid, rng, "smooth")
        h = GridFunction.random(grid, 1, rng)
        classical = apply_generalized(operator, build_symbols(grid, SymbolKind.CLASSICAL, b), h)
        direct = operator.apply(h).multiply(b) - operator.apply(h.multiply(b))
        checks.append(
            _deviation_check(
                "algebra.classical_two_path",
                "max |sum_i a_i T(b_i f) - (b T f - T(b f))|",
                float(np.max(np.abs(classical.values - direct.values))),
                float(np.max(np.abs(direct.values))),
            )
        )
        iterated = build_symbols(grid, SymbolKind.ITERATED, b, k=3)
        difference = b[:, None] - b[None, :]
        checks.append(
            _deviation_check(
                "algebra.iterated_binomial",
                "max |sum_i a_i(x) b_i(y) - (b(x) - b(y))^3|",
                float(np.max(np.abs(iterated.kernel() - difference**3))),
                float(np.max(np.abs(difference)) ** 3),
            )
        )
        mixed = apply_generalized(operator, build_symbols(grid, SymbolKind.MIXED, b, b), h)
        second = apply_generalized(operator, build_symbols(grid, SymbolKind.ITERATED, b, k=2), h)
        checks.append(
            _deviation_check(
                "algebra.mixed_equals_iterated",
                "max |mixed(b, b) f - iterated_2(b) f|",
                float(np.max(np.abs(mixed.values - second.values))),
                float(np.max(np.abs(second.values))) * float(np.max(np.abs(b))) ** 2,
            )
        )
    return SuiteResult(name="algebra", instances=config.suite.instances, checks=checks)


# ============================================================================
# Stopping times
# ============================================================================


def equivalence_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    grid = config_grid(config)
    checks = []
    ratios: Dict[str, List[float]] = {}
    for p, q in ((1.0, 1.0), (2.0, 2.0), (1.0, 2.0)):
        for n in (1, 2):
            pair_config = PairFormConfig(
                p=p, q=q, n=n, delta=config.domination.delta, threshold=config.domination.threshold
            )
            key = f"p={p:g},q={q:g},n={n}"
            for _ in range(config.suite.instances):
                report = equivalence_report(
                    GridFunction.random(grid, n, rng), GridFunction.random(grid, n, rng), pair_config
                )
                checks.extend(report.checks)
                ratios.setdefault(key, []).append(report.hard_ratio or 0.0)
    details = {"max_hard_ratio": {key: max(values) for key, values in ratios.items()}}
    return SuiteResult(
        name="equivalence", instances=6 * config.suite.instances, checks=checks, details=details
    )


def stopping_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    grid = config_grid(config)
    exponents = {(1.0, 1.0), (config.exponents.p, config.exponents.q)}
    checks = []
    for p, q in sorted(exponents):
        for _ in range(config.suite.instances):
            f = GridFunction.random(grid, config.values.n, rng)
            g = GridFunction.random(grid, config.values.n, rng)
            checks.extend(stopping_inequality_checks(f, g, p, q, rng))
    return SuiteResult(name="stopping", instances=len(exponents) * config.suite.instances, checks=checks)


# ============================================================================
# Commutators
# ============================================================================


def power_inequality_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    grid = line_grid(config)
    checks = []
    ratios = []
    for index in range(config.suite.instances):
        if index == 0:
            alpha, beta = config.commutator.alpha, config.commutator.beta
        else:
            alpha = float(rng.uniform(0.0, 1.0))
            beta = float(rng.uniform(0.0, 1.0 - alpha))
        b = -random_symbol(grid, rng, "log")
        report = bmo_power_check(
            grid, b, alpha, beta, config.exponents.s, rng=rng, samples=100_000 if index == 0 else 1_000
        )
        checks.extend(report.checks)
        ratios.append(report.integrated_ratio)
    return SuiteResult(
        name="power_inequality",
        instances=config.suite.instances,
        checks=checks,
        details={"max_integrated_ratio": max(ratios)},
    )


def mixed_commutator_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    grid = line_grid(config)
    checks = []
    ratios = []
    for index in range(config.suite.instances):
        s = 3.0 if index % 2 == 0 else 4.0
        pair = build_symbols(
            grid, SymbolKind.MIXED, random_symbol(grid, rng, "smooth"), random_symbol(grid, rng, "log")
        )
        report = a_st_constants(pair, s, s)
        checks.extend(report.checks)
        if report.mixed_ratio is not None:
            ratios.append(report.mixed_ratio)

    r = dual_exponent(config.exponents.t)
    checks.extend(sweep_maximal_ratios(grid, r, 2.0 * r, rng, count=config.suite.instances))
    details = {"mixed_ratios": ratios}
    return SuiteResult(
        name="mixed_commutator", instances=config.suite.instances, checks=checks, details=details
    )


def commutator_bounds_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    """Two-sided L^p audit of the classical commutator, plus the mixed Hoelder step."""
    grid = line_grid(config)
    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    s, t = config.exponents.s, config.exponents.t
    p = config.exponents.lp or default_lp_exponent(s, t)
    checks = []
    gaps = []
    for index in range(config.suite.instances):
        b = random_symbol(grid, rng, "log")
        pair = build_symbols(grid, SymbolKind.CLASSICAL, b)
        epsilon = min(config.domination.epsilon, 0.2)
        report = lp_commutator_report(operator, pair, s, t, p, epsilon=epsilon, seed=config.seed + index)
        checks.extend(report.checks)
        if report.upper_bound:
            gaps.append(report.lower_bound / report.upper_bound)
        cube = grid.cubes(min(2, grid.depth))[index % grid.cubes_at(min(2, grid.depth))]
        f = GridFunction.random(grid, 1, rng)
        g = GridFunction.random(grid, 1, rng)
        checks.append(mixed_holder_check(pair, f, g, cube, s, t, triple=True))
    return SuiteResult(
        name="commutator_bounds",
        instances=config.suite.instances,
        checks=checks,
        details={"lower_over_upper": gaps},
    )


# ============================================================================
# Weights
# ============================================================================


def default_weight_specs(n: int) -> List[WeightSpec]:
    """Battery of 31 weights covering every generator kind."""
    specs = [WeightSpec(kind=WeightKind.IDENTITY, label="identity")]
    for alpha in (-0.8, -0.4, 0.0, 0.2, 0.4, 0.6, 0.8):
        specs.append(WeightSpec(kind=WeightKind.SCALAR_POWER, alpha=alpha, label=f"power_{alpha:g}"))
    for first, second in ((0.5, -0.5), (0.3, 0.7), (-0.3, 0.6), (0.8, -0.2), (0.0, 0.5)):
        alphas = [first if i % 2 == 0 else second for i in range(n)]
        scales = [1.0 + i for i in range(n)]
        specs.append(
            WeightSpec(
                kind=WeightKind.DIAGONAL,
                alphas=alphas,
                scales=scales,
                label=f"diagonal_{first:g}_{second:g}",
            )
        )
    for alpha in (0.3, 0.6, -0.4):
        for slope in (0.0, 1.0, 3.0):
            specs.append(
                WeightSpec(
                    kind=WeightKind.BLOOM_ROTATED,
                    alpha=alpha,
                    theta=0.3,
                    theta_slope=slope,
                    label=f"bloom_{alpha:g}_{slope:g}",
                )
            )
    for amplitude in (0.25, 0.5, 1.0):
        for seed in range(3):
            specs.append(
                WeightSpec(
                    kind=WeightKind.RANDOM_LOGSMOOTH,
                    amplitude=amplitude,
                    seed=seed,
                    label=f"logsmooth_{amplitude:g}_{seed}",
                )
            )
    return specs


def weight_battery_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    grid = line_grid(config)
    n = config.values.n
    specs = config.weights or default_weight_specs(n)
    checks = []
    characteristics = {}
    for spec in specs:
        weight = make_weight(grid, spec, n=n, seed=config.seed)
        a2 = a2_characteristic(weight)
        ainfty = ainfty_matrix(weight)
        characteristics[weight.label] = {"a2": a2, "ainfty": ainfty}
        checks.append(
            InequalityCheck.compare(
                "weights.ainfty_le_4a2",
                f"[W]_Ainf <= 4 [W]_A2 for {weight.label}",
                ainfty,
                4.0 * a2,
                exact=False,
            )
        )

    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    bounds = []
    for alpha in POWER_FAMILY:
        weight = make_weight(grid, WeightSpec(kind=WeightKind.SCALAR_POWER, alpha=alpha), n=2)
        bounds.append(weighted_opnorm_bounds(operator, weight, m=2, r=2.0, seed=config.seed))
    trend = [report.ratio for report in bounds]
    checks.append(
        InequalityCheck.compare(
            "weights.opnorm_trend",
            "||T||_{L2(W)} / [W]_A2^(3/2) over the power family stays below twice the unweighted ratio",
            max(trend),
            2.0 * max(trend[0], 1.0),
        )
    )
    checks.append(
        opnorm_monotone_check(
            [report.a2 for report in bounds],
            [report.lower for report in bounds],
            exact=all(report.exact for report in bounds),
        )
    )

    refinement = _ltilde_refinement(n)
    for alpha, ratios in refinement.items():
        checks.append(
            InequalityCheck.compare(
                "weights.ltilde_refinement",
                f"L-tilde ratio stable within a factor 2 under refinement, alpha={alpha:g}",
                max(ratios),
                2.0 * min(ratios),
            )
        )
    details = {
        "characteristics": characteristics,
        "opnorm_trend": dict(zip((f"{a:g}" for a in POWER_FAMILY), trend)),
        "opnorm_by_a2": [[report.a2, report.lower] for report in bounds],
        "ltilde_ratios": {f"{a:g}": ratios for a, ratios in refinement.items()},
    }
    return SuiteResult(name="weight_battery", instances=len(specs), checks=checks, details=details)


def opnorm_monotone_check(
    a2_values: Sequence[float], norms: Sequence[float], exact: bool = True
) -> InequalityCheck:
    """Weighted norms sorted by [W]_A2 must not decrease.

    The left side is the largest drop ratio between neighbours in that order
    (1 when there are fewer than two norms); ascent lower bounds get a 1e-3 slack.
    """
    order = np.argsort(np.asarray(a2_values, dtype=float), kind="stable")
    ordered = [norms[i] for i in order]
    drops = [before / after for before, after in zip(ordered, ordered[1:]) if after > 0]
    return InequalityCheck.compare(
        "weights.opnorm_monotone",
        "||T||_{L2(W)} is nondecreasing in [W]_A2 along the power family",
        max(drops, default=1.0),
        1.0,
        rtol=1e-9 if exact else 1e-3,
        exact=exact,
    )


def refinement_family(grid: DyadicGrid) -> SparseFamily:
    """Stopping family of f = g = 1_[0, 1/32) at threshold 16, the same cubes at every depth >= 5."""
    indicator = np.zeros(grid.n_cells)
    indicator[: max(grid.n_cells // 32, 1)] = 1.0
    data = GridFunction.scalar(grid, indicator)
    return stopping_family(data, data, PairFormConfig(n=1))


def _ltilde_refinement(n: int, alphas: Sequence[float] = (0.2, 0.5, 0.8)) -> Dict[float, List[float]]:
    result = {}
    for alpha in alphas:
        ratios = []
        for depth in REFINEMENT_LEVELS:
            grid = DyadicGrid(dimension=1, depth=depth)
            weight = make_weight(grid, WeightSpec(kind=WeightKind.SCALAR_POWER, alpha=alpha), n=n)
            report = ltilde_opnorm(refinement_family(grid), weight)
            ratios.append(report.ratio if report.ratio is not None else math.inf)
        result[alpha] = ratios
    return result


# ============================================================================
# Domination
# ============================================================================


def domination_suite(config: ExperimentConfig, rng: np.random.Generator) -> SuiteResult:
    """Pipeline runs for n = 1 and n = 2 on matched seeds."""
    grid = line_grid(config)
    operator = make_operator(grid, config.operator.kind, config.operator.c, config.operator.delta_mod)
    checks = []
    constants: Dict[int, List[float]] = {1: [], 2: []}
    for _ in range(config.suite.instances):
        f = GridFunction.random(grid, 2, rng)
        g = GridFunction.random(grid, 2, rng)
        for n in (1, 2):
            epsilon = min(config.domination.epsilon, 0.45 / n)
            data_f = f if n == 2 else f.component(0)
            data_g = g if n == 2 else g.component(0)
            report = cbd_pipeline(operator, data_f, data_g, epsilon)
            constants[n].append(report.constant_n)
            checks.extend(domination_checks(report))
    worst_one = max(constants[1], default=0.0)
    worst_two = max(constants[2], default=0.0)
    if worst_one > 0:
        checks.append(
            InequalityCheck.compare(
                "domination.dimension_growth",
                "C_2 / C_1 <= 2^(3/2) * 1.5 over matched seeds",
                worst_two / worst_one,
                2**1.5 * 1.5,
            )
        )
    details = {"constant_n": {str(n): values for n, values in constants.items()}}
    return SuiteResult(
        name="domination", instances=config.suite.instances, checks=checks, details=details
    )


SUITES: Dict[str, SuiteFunction] = {
    "sandwich": sandwich_suite,
    "coordinate_product": coordinate_product_suite,
    "equivalence": equivalence_suite,
    "stopping": stopping_suite,
    "power_inequality": power_inequality_suite,
    "mixed_commutator": mixed_commutator_suite,
    "commutator_bounds": commutator_bounds_suite,
    "weight_battery": weight_battery_suite,
    "algebra": algebra_suite,
    "domination": domination_suite,
}


def run_suites(config: ExperimentConfig, names: Optional[Sequence[str]] = None) -> List[SuiteResult]:
    """Run the selected suites in SUITE_NAMES order."""
    selected = set(names or config.suite.names)
    results = []
    for name in SUITE_NAMES:
        if name not in selected:
            continue
        result = SUITES[name](config, suite_rng(config, name))
        failures = sum(not check.passed for check in result.checks)
        logger.info(f"Suite {name}: {len(result.checks)} checks, {failures} failed")
        results.append(result)
    return results
