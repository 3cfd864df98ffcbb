"""
Tests for matrix weights.

Covers:
- A_2 characteristic: identity, two-cell hand values, diagonal reduction
- A_infinity: constants, hand values, the bound by 4 [W]_A2, nested nets
- Weight generators and the SPD validation
- Weighted L^p norms
"""

import logging

import numpy as np
import pytest

from cbdlab.models.experiment import WeightKind, WeightSpec
from cbdlab.services.errors import DimensionMismatchError, InvalidWeightError
from cbdlab.services.grid import DyadicGrid, GridFunction
from cbdlab.services.weights import (
    MatrixWeight,
    a2_characteristic,
    ainfty_matrix,
    ainfty_net_curve,
    ainfty_scalar,
    make_weight,
    weighted_norm,
)


@pytest.fixture
def two_cell_grid():
    return DyadicGrid(dimension=1, depth=1)


# ============================================================================
# A_2
# ============================================================================


@pytest.mark.unit
class TestA2Characteristic:
    """[W]_A2 over all dyadic cubes."""

    def test_identity_is_one(self, line_grid):
        assert a2_characteristic(MatrixWeight.identity(line_grid, 3)) == pytest.approx(1.0)

    @pytest.mark.parametrize("t", [2.0, 9.0, 0.25])
    def test_two_cell_scalar_weight(self, two_cell_grid, t):
        weight = MatrixWeight.from_scalar(two_cell_grid, np.array([1.0, t]))
        expected = (1.0 + t) / 2.0 * (1.0 + 1.0 / t) / 2.0
        assert a2_characteristic(weight) == pytest.approx(expected)

    def test_at_least_one(self, line_grid):
        for seed in range(10):
            spec = WeightSpec(kind=WeightKind.RANDOM_LOGSMOOTH, amplitude=0.8)
            weight = make_weight(line_grid, spec, n=2, seed=seed)
            assert a2_characteristic(weight) >= 1.0 - 1e-12

    def test_diagonal_weight_takes_worst_entry(self, line_grid, rng):
        first = np.exp(rng.standard_normal(line_grid.n_cells))
        second = np.exp(2.0 * rng.standard_normal(line_grid.n_cells))
        matrices = np.zeros((line_grid.n_cells, 2, 2))
        matrices[:, 0, 0], matrices[:, 1, 1] = first, second
        weight = MatrixWeight(grid=line_grid, matrices=matrices)
        scalars = [a2_characteristic(MatrixWeight.from_scalar(line_grid, w)) for w in (first, second)]
        assert a2_characteristic(weight) == pytest.approx(max(scalars))

    def test_constant_matrix_is_one(self, line_grid):
        constant = np.array([[2.0, 1.0], [1.0, 3.0]])
        weight = MatrixWeight(grid=line_grid, matrices=np.broadcast_to(constant, (line_grid.n_cells, 2, 2)))
        assert a2_characteristic(weight) == pytest.approx(1.0)

    def test_pair_is_symmetric(self, line_grid):
        rotated = make_weight(
            line_grid, WeightSpec(kind=WeightKind.BLOOM_ROTATED, alpha=0.4, theta=0.3, theta_slope=2.0), n=2
        )
        for seed in range(4):
            spec = WeightSpec(kind=WeightKind.RANDOM_LOGSMOOTH, amplitude=0.8)
            other = make_weight(line_grid, spec, n=2, seed=seed)
            assert a2_characteristic(rotated, other) == pytest.approx(
                a2_characteristic(other, rotated), rel=1e-10
            )

    def test_pair_on_other_grid_rejected(self, line_grid, square_grid):
        with pytest.raises(DimensionMismatchError):
            a2_characteristic(MatrixWeight.identity(line_grid, 2), MatrixWeight.identity(square_grid, 2))


# ============================================================================
# A_infinity
# ============================================================================


@pytest.mark.unit
class TestAinfty:
    """Fujii-Wilson characteristic along directions."""

    def test_constant_weight_is_one(self, line_grid):
        assert ainfty_scalar(line_grid, np.full(line_grid.n_cells, 5.0)) == pytest.approx(1.0)

    @pytest.mark.parametrize("t", [3.0, 10.0])
    def test_two_cell_hand_value(self, two_cell_grid, t):
        expected = (1.0 + 3.0 * t) / (2.0 * (1.0 + t))
        assert ainfty_scalar(two_cell_grid, np.array([1.0, t])) == pytest.approx(expected)

    def test_bounded_by_four_a2(self, line_grid):
        for seed in range(10):
            spec = WeightSpec(kind=WeightKind.RANDOM_LOGSMOOTH, amplitude=1.0)
            weight = make_weight(line_grid, spec, n=2, seed=seed)
            assert ainfty_matrix(weight) <= 4.0 * a2_characteristic(weight) + 1e-9

    def test_nonpositive_scalar_rejected(self, line_grid):
        w = np.ones(line_grid.n_cells)
        w[3] = 0.0
        with pytest.raises(InvalidWeightError):
            ainfty_scalar(line_grid, w)

    def test_small_net_rejected(self, line_grid):
        with pytest.raises(ValueError):
            ainfty_matrix(MatrixWeight.identity(line_grid, 2), direction_count=3)

    def test_net_curve_is_monotone(self, line_grid):
        spec = WeightSpec(kind=WeightKind.BLOOM_ROTATED, alpha=0.6, theta_slope=3.0)
        weight = make_weight(line_grid, spec, n=2)
        curve = ainfty_net_curve(weight, [32, 4, 8, 16])
        assert [count for count, _ in curve] == [4, 8, 16, 32]
        values = [value for _, value in curve]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert values[-1] == pytest.approx(ainfty_matrix(weight, direction_count=32))

    def test_diagonal_axes_are_in_the_net(self, line_grid):
        spec = WeightSpec(kind=WeightKind.DIAGONAL, alphas=[0.5, -0.5])
        weight = make_weight(line_grid, spec, n=2)
        axes = [ainfty_scalar(line_grid, weight.directional(e)) for e in np.eye(2)]
        assert ainfty_matrix(weight, direction_count=4) >= max(axes) - 1e-12


# ============================================================================
# Generators
# ============================================================================


@pytest.mark.unit
class TestMakeWeight:
    """Weight generators from configuration."""

    @pytest.mark.parametrize("kind", list(WeightKind))
    def test_every_kind_is_spd(self, square_grid, kind):
        weight = make_weight(square_grid, WeightSpec(kind=kind), n=2, seed=4)
        assert weight.matrices.shape == (square_grid.n_cells, 2, 2)
        assert np.all(np.linalg.eigvalsh(weight.matrices)[:, 0] > 0)
        assert weight.label == kind.value

    def test_seeded_generator_is_deterministic(self, line_grid):
        spec = WeightSpec(kind=WeightKind.RANDOM_LOGSMOOTH)
        first = make_weight(line_grid, spec, n=2, seed=11)
        second = make_weight(line_grid, spec, n=2, seed=11)
        assert np.array_equal(first.matrices, second.matrices)
        pinned = WeightSpec(kind=WeightKind.RANDOM_LOGSMOOTH, seed=11)
        assert np.array_equal(make_weight(line_grid, pinned, n=2, seed=99).matrices, first.matrices)

    def test_spec_size_overrides_default(self, line_grid):
        weight = make_weight(line_grid, WeightSpec(kind=WeightKind.IDENTITY, n=3), n=2)
        assert weight.n == 3

    def test_exponent_list_length_checked(self, line_grid):
        with pytest.raises(DimensionMismatchError):
            make_weight(line_grid, WeightSpec(kind=WeightKind.DIAGONAL, alphas=[0.1]), n=2)

    def test_borderline_power_is_flagged_and_grows(self, caplog):
        spec = WeightSpec(kind=WeightKind.SCALAR_POWER, alpha=1.0)
        with caplog.at_level(logging.WARNING, logger="cbdlab.services.weights"):
            coarse = make_weight(DyadicGrid(dimension=1, depth=4), spec, n=1)
        fine = make_weight(DyadicGrid(dimension=1, depth=8), spec, n=1)
        assert not coarse.a2_admissible
        assert "not in A_2" in caplog.text
        assert a2_characteristic(fine) > a2_characteristic(coarse)

    def test_admissible_power_is_not_flagged(self, line_grid):
        weight = make_weight(line_grid, WeightSpec(kind=WeightKind.SCALAR_POWER, alpha=-0.5), n=2)
        assert weight.a2_admissible

    def test_rotated_weight_keeps_eigenvalues(self, line_grid):
        plain = make_weight(line_grid, WeightSpec(kind=WeightKind.BLOOM_ROTATED, alpha=0.5), n=2)
        rotated = make_weight(
            line_grid, WeightSpec(kind=WeightKind.BLOOM_ROTATED, alpha=0.5, theta=0.7, theta_slope=2.0), n=2
        )
        assert np.allclose(np.linalg.eigvalsh(plain.matrices), np.linalg.eigvalsh(rotated.matrices))
        assert not np.allclose(plain.matrices, rotated.matrices)


@pytest.mark.unit
class TestMatrixWeightValidation:
    """SPD checks on construction."""

    def test_indefinite_cell_rejected(self, line_grid):
        matrices = np.broadcast_to(np.eye(2), (line_grid.n_cells, 2, 2)).copy()
        matrices[7] = np.diag([1.0, -1.0])
        with pytest.raises(ValueError, match="cell 7"):
            MatrixWeight(grid=line_grid, matrices=matrices)

    def test_asymmetric_rejected(self, line_grid):
        matrices = np.broadcast_to(np.array([[1.0, 0.5], [0.0, 1.0]]), (line_grid.n_cells, 2, 2))
        with pytest.raises(ValueError):
            MatrixWeight(grid=line_grid, matrices=matrices)

    def test_inverse_weight(self, line_grid):
        weight = MatrixWeight.from_scalar(line_grid, np.full(line_grid.n_cells, 4.0), n=2)
        assert np.allclose(weight.inverse_weight().matrices, 0.25 * np.eye(2))


# ============================================================================
# Weighted norms
# ============================================================================


@pytest.mark.unit
class TestWeightedNorm:
    """||W^(1/p) f||_Lp."""

    def test_identity_weight_is_plain_norm(self, line_grid, rng):
        f = GridFunction.random(line_grid, 2, rng)
        plain = np.sqrt(np.mean(f.en_norms() ** 2))
        assert weighted_norm(f, MatrixWeight.identity(line_grid, 2), 2.0) == pytest.approx(plain)

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_constant_scalar_weight(self, line_grid, rng, p):
        f = GridFunction.random(line_grid, 2, rng)
        identity = weighted_norm(f, MatrixWeight.identity(line_grid, 2), p)
        scaled = MatrixWeight.from_scalar(line_grid, np.full(line_grid.n_cells, 8.0), n=2)
        assert weighted_norm(f, scaled, p) == pytest.approx(8.0 ** (1.0 / p) * identity)

    def test_p_two_is_quadratic_form(self, line_grid, rng):
        f = GridFunction.random(line_grid, 2, rng)
        weight = make_weight(line_grid, WeightSpec(kind=WeightKind.RANDOM_LOGSMOOTH), n=2, seed=1)
        vectors = f.values[:, :, 0]
        quadratic = np.einsum("ci,cij,cj->c", vectors, weight.matrices, vectors)
        assert weighted_norm(f, weight, 2.0) == pytest.approx(np.sqrt(np.mean(quadratic)))

    def test_size_mismatch(self, line_grid, rng):
        with pytest.raises(DimensionMismatchError):
            weighted_norm(GridFunction.random(line_grid, 3, rng), MatrixWeight.identity(line_grid, 2), 2.0)
