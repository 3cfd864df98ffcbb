"""
Tests for generalized commutators.

Covers:
- Symbol pairs: classical, iterated, mixed, power and custom kernels
- The two evaluation paths of a . T b and the vector lift
- Mixed min-norms, A_{s,t}, BMO envelopes and the mixed-pair bound
- Power symbols and the elementary inequality
- Maximal operators and the two-sided L^p audit
"""

import math

import numpy as np
import pytest

from cbdlab.models.experiment import SymbolKind
from cbdlab.services.commutators import (
    a_st_constants,
    apply_generalized,
    bmo_norm,
    bmo_power_check,
    build_symbols,
    default_lp_exponent,
    doob_constant,
    elementary_power_check,
    generalized_matrix,
    lift,
    lp_commutator_report,
    lp_operator_lower_bound,
    maximal_operator_ratio,
    mixed_holder_check,
    mixed_min_norm,
    random_symbol,
    triple_maximal,
)
from cbdlab.services.domination import bilinear_form, make_operator
from cbdlab.services.errors import DimensionMismatchError
from cbdlab.services.grid import Cube, GridFunction


@pytest.fixture
def small_hilbert(line_grid):
    return make_operator(line_grid)


def _differences(b: np.ndarray) -> np.ndarray:
    return b[:, None] - b[None, :]


# ============================================================================
# Symbol pairs
# ============================================================================


@pytest.mark.unit
class TestSymbolPairs:
    """Kernels F(x, y) = a(x) . b(y)."""

    def test_constant_classical_symbol_vanishes(self, small_hilbert, line_grid):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, np.full(line_grid.n_cells, 3.0))
        assert np.allclose(pair.kernel(), 0.0)
        assert not np.any(generalized_matrix(small_hilbert, pair))

    @pytest.mark.parametrize("k", [1, 2, 3, 5])
    def test_iterated_kernel_is_binomial(self, line_grid, rng, k):
        b = rng.standard_normal(line_grid.n_cells)
        pair = build_symbols(line_grid, SymbolKind.ITERATED, b, k=k)
        assert pair.terms == k + 1
        assert pair.order == k
        assert np.allclose(pair.kernel(), _differences(b) ** k)

    def test_mixed_with_equal_symbols_is_second_order(self, line_grid, rng):
        b = rng.standard_normal(line_grid.n_cells)
        mixed = build_symbols(line_grid, SymbolKind.MIXED, b, b)
        iterated = build_symbols(line_grid, SymbolKind.ITERATED, b, k=2)
        assert np.allclose(mixed.kernel(), iterated.kernel())

    def test_mixed_kernel(self, line_grid, rng):
        b1 = rng.standard_normal(line_grid.n_cells)
        b2 = rng.standard_normal(line_grid.n_cells)
        pair = build_symbols(line_grid, SymbolKind.MIXED, b1, b2)
        assert np.allclose(pair.kernel(), _differences(b1) * _differences(b2))

    def test_equal_powers_give_zero_kernel(self, line_grid, rng):
        b = np.abs(rng.standard_normal(line_grid.n_cells))
        pair = build_symbols(line_grid, SymbolKind.POWER, b, alpha=0.3, beta=0.3)
        assert np.allclose(pair.kernel(), 0.0)

    def test_custom_pair(self, line_grid, rng):
        pre = rng.standard_normal((3, line_grid.n_cells))
        post = rng.standard_normal((3, line_grid.n_cells))
        pair = build_symbols(line_grid, SymbolKind.CUSTOM, pre=pre, post=post)
        assert np.allclose(pair.kernel(), pre.T @ post)

    @pytest.mark.parametrize(
        "kind, kwargs",
        [
            (SymbolKind.CLASSICAL, {}),
            (SymbolKind.ITERATED, {"symbol": np.zeros(16), "k": 0}),
            (SymbolKind.ITERATED, {"symbol": np.zeros(16), "k": 21}),
            (SymbolKind.MIXED, {"symbol": np.zeros(16)}),
            (SymbolKind.POWER, {"symbol": -np.ones(16)}),
            (SymbolKind.POWER, {"symbol": np.ones(16), "alpha": -0.1}),
            (SymbolKind.CUSTOM, {"pre": np.ones((1, 16))}),
        ],
    )
    def test_invalid_symbols(self, line_grid, kind, kwargs):
        with pytest.raises(ValueError):
            build_symbols(line_grid, kind, **kwargs)

    def test_symbol_length_checked(self, line_grid):
        with pytest.raises(DimensionMismatchError):
            build_symbols(line_grid, SymbolKind.CLASSICAL, np.ones(8))

    @pytest.mark.parametrize("kind", ["log", "smooth"])
    def test_random_symbols_are_finite(self, line_grid, rng, kind):
        assert np.all(np.isfinite(random_symbol(line_grid, rng, kind)))


@pytest.mark.unit
class TestEvaluation:
    """sum_i a_i T(b_i f) against the kernel matrix and the vector lift."""

    def test_two_paths_agree(self, small_hilbert, line_grid, rng):
        b = random_symbol(line_grid, rng, "smooth")
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, b)
        f = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
        direct = apply_generalized(small_hilbert, pair, f).values[:, 0, 0]
        assert np.allclose(direct, generalized_matrix(small_hilbert, pair) @ f.values[:, 0, 0], atol=1e-12)
        tf = small_hilbert.apply(f).values[:, 0, 0]
        tbf = small_hilbert.apply(f.multiply(b)).values[:, 0, 0]
        assert np.allclose(direct, b * tf - tbf, atol=1e-12)

    def test_lift_preserves_pairing(self, small_hilbert, line_grid, rng):
        pair = build_symbols(line_grid, SymbolKind.ITERATED, rng.standard_normal(line_grid.n_cells), k=2)
        f = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
        g = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
        image = apply_generalized(small_hilbert, pair, f)
        pairing = line_grid.cell_measure * float(np.sum(image.values * g.values))
        lifted_f, lifted_g = lift(pair, f, g)
        assert lifted_f.n == pair.terms
        value = bilinear_form(small_hilbert, lifted_f, lifted_g)
        assert value == pytest.approx(pairing, rel=1e-10, abs=1e-12)

    def test_vector_operand_rejected(self, small_hilbert, line_grid, rng):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, rng.standard_normal(line_grid.n_cells))
        with pytest.raises(DimensionMismatchError):
            apply_generalized(small_hilbert, pair, GridFunction.random(line_grid, 2, rng))


# ============================================================================
# Mixed norms and A_{s,t}
# ============================================================================


@pytest.mark.unit
class TestMixedNorms:
    """||F||_(s,t)min and the oscillation constants."""

    def test_constant_kernel(self):
        assert mixed_min_norm(np.full((4, 8), -2.5), 3.0, 1.5) == pytest.approx(2.5)

    def test_equal_exponents_give_plain_average(self, rng):
        kernel = rng.standard_normal((8, 8))
        expected = np.mean(np.abs(kernel) ** 3) ** (1.0 / 3.0)
        assert mixed_min_norm(kernel, 3.0, 3.0) == pytest.approx(expected)

    def test_tensor_product(self, rng):
        u = rng.standard_normal(8)
        v = rng.standard_normal(8)
        expected = np.mean(np.abs(u) ** 2) ** 0.5 * np.mean(np.abs(v) ** 4) ** 0.25
        assert mixed_min_norm(np.outer(u, v), 2.0, 4.0) == pytest.approx(expected)

    def test_min_of_orders(self, rng):
        kernel = rng.standard_normal((6, 6)) ** 3
        value = mixed_min_norm(kernel, 1.5, 4.0)
        transposed = mixed_min_norm(kernel.T, 4.0, 1.5)
        assert value == pytest.approx(transposed)

    def test_callable_kernel_needs_cells(self):
        with pytest.raises(ValueError):
            mixed_min_norm(lambda rows, columns: np.ones((2, 2)), 2.0, 2.0)

    def test_constant_symbol_has_zero_constants(self, line_grid):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, np.full(line_grid.n_cells, 7.0))
        report = a_st_constants(pair, 2.0, 2.0)
        assert report.a_st == 0.0
        assert report.a_st_triple == 0.0
        assert report.bmo == [0.0]

    def test_bmo_of_half_indicator(self, line_grid):
        b = np.zeros(line_grid.n_cells)
        b[: line_grid.n_cells // 2] = 1.0
        assert bmo_norm(line_grid, b, 1.0) == pytest.approx(0.5)
        assert bmo_norm(line_grid, b, 2.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("s", [1.5, 2.0, 4.0])
    def test_classical_bmo_envelope(self, line_grid, rng, s):
        for kind in ("log", "smooth"):
            pair = build_symbols(line_grid, SymbolKind.CLASSICAL, random_symbol(line_grid, rng, kind))
            report = a_st_constants(pair, s, s)
            anchors = [check.anchor for check in report.checks]
            assert anchors == ["commutator.bmo_le_classical", "commutator.classical_le_2bmo"]
            assert all(check.passed for check in report.checks), report.checks

    def test_mixed_pair_bound(self, line_grid, rng):
        for _ in range(5):
            b1 = random_symbol(line_grid, rng, "smooth")
            b2 = random_symbol(line_grid, rng, "log")
            report = a_st_constants(build_symbols(line_grid, SymbolKind.MIXED, b1, b2), 2.0, 2.0)
            assert report.s_s is not None and report.t_s is not None
            assert all(check.passed for check in report.checks), report.checks
            assert report.mixed_ratio is not None

    def test_mixed_holder(self, line_grid, rng):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, random_symbol(line_grid, rng, "smooth"))
        f = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
        g = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
        for cube in (line_grid.root(), Cube(level=2, index=(3,))):
            for triple in (False, True):
                check = mixed_holder_check(pair, f, g, cube, 4.0, 4.0, triple=triple)
                assert check.passed, check

    def test_exponents_must_exceed_one(self, line_grid):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, np.arange(16.0))
        with pytest.raises(ValueError):
            a_st_constants(pair, 1.0, 2.0)


# ============================================================================
# Powers
# ============================================================================


@pytest.mark.unit
class TestPowerSymbols:
    """B(x, y) = b(x)^alpha b(y)^beta - b(x)^beta b(y)^alpha."""

    def test_equal_powers(self, line_grid, rng):
        b = np.abs(random_symbol(line_grid, rng, "log"))
        report = bmo_power_check(line_grid, b, 0.4, 0.4, 2.0, rng=rng, samples=1000)
        assert report.pointwise_ratio == 0.0
        assert all(check.passed for check in report.checks), report.checks

    @pytest.mark.parametrize("alpha, beta, p", [(0.5, 0.25, 2.0), (0.9, 0.1, 1.0), (0.0, 0.7, 3.0)])
    def test_bounds_hold(self, line_grid, rng, alpha, beta, p):
        b = np.abs(random_symbol(line_grid, rng, "log"))
        report = bmo_power_check(line_grid, b, alpha, beta, p, rng=rng, samples=1000)
        assert [check.anchor for check in report.checks] == [
            "power.pointwise",
            "power.averaged",
            "power.elementary",
        ]
        assert all(check.passed for check in report.checks), report.checks
        assert report.pointwise_ratio <= 1.0 + 1e-9

    def test_invalid_powers(self, line_grid):
        b = np.ones(line_grid.n_cells)
        with pytest.raises(ValueError):
            bmo_power_check(line_grid, b, 0.7, 0.5, 2.0)
        with pytest.raises(ValueError):
            bmo_power_check(line_grid, -b, 0.2, 0.2, 2.0)

    def test_elementary_inequality(self, rng):
        check = elementary_power_check(rng, samples=20000)
        assert check.anchor == "power.elementary"
        assert check.passed


# ============================================================================
# Maximal operators and L^p norms
# ============================================================================


@pytest.mark.unit
class TestMaximalOperators:
    """Doob bounds and the triple maximal function."""

    def test_doob_constant(self):
        assert doob_constant(1.0, 2.0) == pytest.approx(2.0)
        assert doob_constant(2.0, 4.0) == pytest.approx(math.sqrt(2.0))
        with pytest.raises(ValueError):
            doob_constant(2.0, 2.0)

    @pytest.mark.parametrize("r, p", [(1.0, 2.0), (1.0, 1.5), (2.0, 3.0)])
    def test_doob_bound_holds(self, line_grid, rng, r, p):
        for _ in range(10):
            check = maximal_operator_ratio(line_grid, rng.standard_normal(line_grid.n_cells), r, p)
            assert check.anchor == "maximal.doob"
            assert check.passed

    def test_triple_maximal_dominates_dyadic(self, line_grid, rng):
        h = rng.standard_normal(line_grid.n_cells)
        assert np.all(triple_maximal(line_grid, h) >= line_grid.dyadic_maximal(h) / 3.0 - 1e-12)
        constant = np.full(line_grid.n_cells, 2.0)
        assert np.allclose(triple_maximal(line_grid, constant, r=2.0), 2.0)

    def test_lp_lower_bound(self, rng):
        matrix = rng.standard_normal((12, 12))
        exact, _ = lp_operator_lower_bound(matrix, 2.0)
        assert exact == pytest.approx(np.linalg.norm(matrix, ord=2))
        value, vector = lp_operator_lower_bound(matrix, 3.0, seed=1, starts=3)
        assert value == pytest.approx(np.linalg.norm(matrix @ vector, ord=3) / np.linalg.norm(vector, ord=3))
        assert lp_operator_lower_bound(np.zeros((4, 4)), 3.0)[0] == 0.0


@pytest.mark.integration
class TestLpReport:
    """lower <= ||a . T b||_{L^p} <= upper."""

    def test_default_exponent(self):
        assert default_lp_exponent(4.0, 4.0) == 2.0
        assert default_lp_exponent(1.5, 4.0) == pytest.approx(0.5 * (4.0 / 3.0 + 1.5))

    def test_classical_two_sided(self, small_hilbert, line_grid, rng):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, random_symbol(line_grid, rng, "smooth"))
        report = lp_commutator_report(small_hilbert, pair, 4.0, 4.0, 2.0)
        assert report.lower_bound is not None and report.upper_bound is not None
        assert 0.0 < report.lower_bound <= report.upper_bound
        anchors = {check.anchor for check in report.checks}
        assert {"commutator.sparse_bound", "commutator.lp_two_sided", "maximal.doob"} <= anchors
        assert all(check.passed for check in report.checks), report.checks

    def test_non_hilbert_exponent(self, small_hilbert, line_grid, rng):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, random_symbol(line_grid, rng, "log"))
        report = lp_commutator_report(small_hilbert, pair, 4.0, 4.0, 3.0)
        assert report.p == 3.0
        assert all(check.passed for check in report.checks), report.checks

    def test_constant_symbol_has_zero_lower_bound(self, small_hilbert, line_grid):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, np.full(line_grid.n_cells, 2.0))
        report = lp_commutator_report(small_hilbert, pair, 4.0, 4.0, 2.0)
        assert report.lower_bound == 0.0

    def test_exponent_outside_interval(self, small_hilbert, line_grid):
        pair = build_symbols(line_grid, SymbolKind.CLASSICAL, np.arange(16.0))
        with pytest.raises(ValueError):
            lp_commutator_report(small_hilbert, pair, 4.0, 4.0, 5.0)
        with pytest.raises(ValueError):
            lp_commutator_report(small_hilbert, pair, 4.0, 4.0, 1.2)
