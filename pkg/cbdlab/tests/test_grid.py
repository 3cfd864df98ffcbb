"""
Tests for the dyadic grid and grid functions.

Covers:
- Cube hierarchy: children, parents, containment, leaves
- Maximal-cube selection against an exhaustive scan
- Torus triples 3Q with wraparound
- Local norms and the dyadic maximal function
- Grid function algebra and serialisation
"""

import math

import numpy as np
import pytest

from cbdlab.services.errors import DimensionMismatchError, ResolutionExhaustedError
from cbdlab.services.grid import (
    Cube,
    DyadicGrid,
    GridFunction,
    dual_exponent,
    local_norm,
    local_norm_on,
    lp_norm_on,
)

# ============================================================================
# Cube hierarchy
# ============================================================================


@pytest.mark.unit
class TestCubeHierarchy:
    """Levels, children and parents."""

    def test_cell_count_and_measure(self, square_grid):
        assert square_grid.n_cells == 2 ** (2 * 3)
        assert square_grid.cell_measure == 2.0 ** (-6)
        for level in range(square_grid.depth + 1):
            cells = np.concatenate([square_grid.cells(cube) for cube in square_grid.cubes(level)])
            assert sorted(cells.tolist()) == list(range(square_grid.n_cells))

    def test_root_children_bisect(self):
        grid = DyadicGrid(dimension=1, depth=3)
        children = grid.children(grid.root())
        assert children == [Cube(level=1, index=(0,)), Cube(level=1, index=(1,))]
        assert grid.cells(children[0]).tolist() == [0, 1, 2, 3]
        assert grid.cells(children[1]).tolist() == [4, 5, 6, 7]

    def test_children_partition_and_parent(self, square_grid):
        cube = Cube(level=1, index=(1, 0))
        children = square_grid.children(cube)
        assert len(children) == 4
        assert sum(square_grid.measure(child) for child in children) == square_grid.measure(cube)
        merged = np.sort(np.concatenate([square_grid.cells(child) for child in children]))
        assert np.array_equal(merged, square_grid.cells(cube))
        assert all(square_grid.parent(child) == cube for child in children)

    def test_leaf_has_no_children(self, line_grid):
        leaf = Cube(level=line_grid.depth, index=(5,))
        with pytest.raises(ResolutionExhaustedError):
            line_grid.children(leaf)

    def test_invalid_cubes_rejected(self, line_grid, square_grid):
        with pytest.raises(ValueError):
            line_grid.cells(Cube(level=2, index=(4,)))
        with pytest.raises(DimensionMismatchError):
            square_grid.cells(Cube(level=1, index=(0,)))

    def test_ancestors_chain(self, line_grid):
        chain = line_grid.ancestors(11)
        assert [cube.level for cube in chain] == [4, 3, 2, 1, 0]
        assert all(11 in line_grid.cells(cube) for cube in chain)

    def test_contains(self, line_grid):
        outer = Cube(level=1, index=(1,))
        assert line_grid.contains(outer, Cube(level=3, index=(5,)))
        assert not line_grid.contains(outer, Cube(level=3, index=(2,)))
        assert not line_grid.contains(Cube(level=3, index=(5,)), outer)


# ============================================================================
# Maximal cubes
# ============================================================================


@pytest.mark.unit
class TestMaximalCubes:
    """Stopping-time selection of maximal cubes."""

    def test_leaf_predicate_returns_all_cells(self, line_grid):
        selected = line_grid.maximal_cubes(line_grid.root(), lambda cube: cube.level == line_grid.depth)
        assert len(selected) == line_grid.n_cells
        cells = np.concatenate([line_grid.cells(cube) for cube in selected])
        assert len(set(cells.tolist())) == line_grid.n_cells

    def test_chebyshev_selection_matches_exhaustive_scan(self, line_grid):
        f = np.zeros(line_grid.n_cells)
        f[:4] = 1.0
        root_average = np.mean(np.abs(f))

        def predicate(cube):
            return np.mean(np.abs(f[line_grid.cells(cube)])) > 2.0 * root_average

        selected = line_grid.maximal_cubes(line_grid.root(), predicate)
        satisfying = [cube for cube in line_grid.all_cubes() if predicate(cube)]

        assert len(line_grid.all_cubes()) == 31
        assert selected == line_grid.maximal_among(satisfying)
        for cube in satisfying:
            assert any(line_grid.contains(top, cube) for top in selected)
        assert sum(line_grid.measure(cube) for cube in selected) <= 0.5
        assert selected == [Cube(level=2, index=(0,))]

    def test_maximal_among_drops_nested(self, line_grid):
        cubes = [Cube(level=1, index=(0,)), Cube(level=3, index=(1,)), Cube(level=2, index=(3,))]
        assert line_grid.maximal_among(cubes) == [Cube(level=1, index=(0,)), Cube(level=2, index=(3,))]

    @pytest.mark.parametrize("grid_name", ["line_grid", "square_grid"])
    def test_maximal_selection_is_idempotent(self, request, rng, grid_name):
        grid = request.getfixturevalue(grid_name)
        cubes = grid.all_cubes()
        for _ in range(10):
            picked = [cubes[i] for i in rng.choice(len(cubes), size=12, replace=False)]
            maximal = grid.maximal_among(picked)
            assert grid.maximal_among(maximal) == maximal
            assert grid.maximal_cubes(grid.root(), lambda cube: cube in maximal) == maximal
            members = set(picked)
            assert grid.maximal_cubes(grid.root(), lambda cube: cube in members) == maximal


# ============================================================================
# Triples
# ============================================================================


@pytest.mark.unit
class TestTripleCells:
    """3Q on the torus."""

    def test_wraps_around_left_edge(self, line_grid):
        triple = line_grid.triple_cells(Cube(level=2, index=(0,)))
        expected = list(range(0, 8)) + list(range(12, 16))
        assert triple.tolist() == expected

    def test_root_triple_is_root(self, line_grid):
        assert line_grid.triple_cells(line_grid.root()).tolist() == list(range(line_grid.n_cells))

    def test_level_one_triple_is_torus(self, line_grid):
        # the two neighbours of a half coincide modulo 1
        triple = line_grid.triple_cells(Cube(level=1, index=(1,)))
        assert len(triple) == line_grid.n_cells

    def test_planar_corner_wraps_on_both_axes(self, square_grid):
        cube = Cube(level=2, index=(0, 0))
        triple = square_grid.triple_cells(cube)
        level_two = square_grid.cube_of_cells(2)[triple]
        assert len(set(level_two.tolist())) == 9
        assert len(triple) == 9 * 4
        assert square_grid.triple_measure(cube) == pytest.approx(9 * square_grid.measure(cube))


# ============================================================================
# Norms and maximal functions
# ============================================================================


@pytest.mark.unit
class TestLocalNorms:
    """Normalized norms over cubes."""

    def test_constant_function(self, line_grid):
        f = GridFunction.scalar(line_grid, np.full(line_grid.n_cells, -3.0))
        for p in (1.0, 2.0, 3.5):
            assert local_norm(f, Cube(level=2, index=(1,)), p) == pytest.approx(3.0)

    def test_left_half_indicator(self, line_grid):
        cube = Cube(level=1, index=(0,))
        values = np.zeros(line_grid.n_cells)
        values[:4] = 1.0
        f = GridFunction.scalar(line_grid, values)
        assert local_norm(f, cube, 1.0) == pytest.approx(0.5)
        assert local_norm(f, cube, 2.0) == pytest.approx(1.0 / math.sqrt(2.0))

    def test_jensen_ordering(self, line_grid, rng):
        for _ in range(100):
            f = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
            level = int(rng.integers(0, line_grid.depth + 1))
            cube = line_grid.cube_from_flat(level, int(rng.integers(0, line_grid.cubes_at(level))))
            assert local_norm(f, cube, 1.0) <= local_norm(f, cube, 2.0) + 1e-12

    def test_unnormalized_norm_scales_with_measure(self, line_grid, rng):
        f = GridFunction.scalar(line_grid, rng.standard_normal(line_grid.n_cells))
        cells = line_grid.cells(Cube(level=2, index=(3,)))
        measure = len(cells) * line_grid.cell_measure
        assert lp_norm_on(f, cells, 2.0) == pytest.approx(measure**0.5 * local_norm_on(f, cells, 2.0))

    def test_vector_data_rejected(self, line_grid, rng):
        f = GridFunction.random(line_grid, 2, rng)
        with pytest.raises(DimensionMismatchError):
            local_norm(f, line_grid.root(), 1.0)

    def test_infinite_exponent_rejected(self, line_grid):
        f = GridFunction.scalar(line_grid, np.ones(line_grid.n_cells))
        with pytest.raises(ValueError):
            local_norm(f, line_grid.root(), math.inf)

    def test_dual_exponent(self):
        assert dual_exponent(2.0) == 2.0
        assert dual_exponent(1.0) == math.inf
        assert dual_exponent(math.inf) == 1.0
        assert dual_exponent(4.0) == pytest.approx(4.0 / 3.0)


@pytest.mark.unit
class TestMaximalFunction:
    """Level averages and the dyadic maximal function."""

    def test_level_averages(self, square_grid, rng):
        values = rng.standard_normal((square_grid.n_cells, 2))
        averages = square_grid.level_averages(values, 1)
        for cube in square_grid.cubes(1):
            expected = values[square_grid.cells(cube)].mean(axis=0)
            assert np.allclose(averages[square_grid.flat_index(cube)], expected)

    def test_maximal_matches_ancestor_scan(self, square_grid, rng):
        h = np.abs(rng.standard_normal(square_grid.n_cells))
        result = square_grid.dyadic_maximal(h)
        for cell in range(square_grid.n_cells):
            expected = max(np.mean(h[square_grid.cells(cube)]) for cube in square_grid.ancestors(cell))
            assert result[cell] == pytest.approx(expected)

    def test_localized_maximal(self, line_grid, rng):
        h = rng.standard_normal(line_grid.n_cells)
        cube = Cube(level=1, index=(1,))
        local = line_grid.dyadic_maximal(h, r=2.0, cube=cube)
        cells = line_grid.cells(cube)
        for position, cell in enumerate(cells):
            chain = [q for q in line_grid.ancestors(int(cell)) if q.level >= cube.level]
            expected = max(np.mean(h[line_grid.cells(q)] ** 2) for q in chain) ** 0.5
            assert local[position] == pytest.approx(expected)


# ============================================================================
# Grid functions
# ============================================================================


@pytest.mark.unit
class TestGridFunction:
    """Construction, algebra and serialisation."""

    def test_shape_validation(self, line_grid):
        with pytest.raises(ValueError):
            GridFunction(grid=line_grid, values=np.zeros((line_grid.n_cells - 1, 1, 1)))
        with pytest.raises(ValueError):
            GridFunction.scalar(line_grid, np.full(line_grid.n_cells, np.nan))

    def test_values_are_read_only(self, line_grid, rng):
        f = GridFunction.random(line_grid, 2, rng)
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0

    def test_stack_and_component(self, line_grid, rng):
        f = GridFunction.random(line_grid, 3, rng, m=2)
        parts = [f.component(i) for i in range(f.n)]
        assert np.array_equal(GridFunction.stack(parts).values, f.values)

    def test_apply_matrix(self, line_grid, rng):
        f = GridFunction.random(line_grid, 2, rng)
        swapped = f.apply_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.array_equal(swapped.values[:, 0], f.values[:, 1])
        with pytest.raises(DimensionMismatchError):
            f.apply_matrix(np.eye(3))

    def test_en_norms(self, line_grid):
        values = np.zeros((line_grid.n_cells, 2, 2))
        values[:, 0, :] = [3.0, 4.0]
        values[:, 1, :] = [0.0, 12.0]
        f = GridFunction(grid=line_grid, values=values, r=2.0)
        assert np.allclose(f.inner_norms(), [[5.0, 12.0]])
        assert np.allclose(f.en_norms(), 13.0)
        sup = GridFunction(grid=line_grid, values=values, r=math.inf)
        assert np.allclose(sup.inner_norms(), [[4.0, 12.0]])

    def test_csv_and_bytes_keep_header(self, square_grid, rng):
        f = GridFunction.random(square_grid, 2, rng, m=3, r=math.inf)
        from_csv = GridFunction.from_csv(f.to_csv())
        from_bytes = GridFunction.from_bytes(f.to_bytes())
        for restored in (from_csv, from_bytes):
            assert restored.header() == f.header()
            assert np.array_equal(restored.values, f.values)

    def test_csv_without_header_rejected(self):
        with pytest.raises(ValueError):
            GridFunction.from_csv("1,2,3\n")
