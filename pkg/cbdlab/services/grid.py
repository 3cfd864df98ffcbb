"""
Dyadic cube systems on the periodic torus [0,1)^d and functions sampled on them.

The torus carries a single root cube. Level l partitions it into 2^(d*l)
cubes and the leaf level L holds the cells on which a GridFunction stores
its samples. Integrals are cell-weighted sums, so normalized (averaged)
norms over a cube are plain means over its cells.
"""

import csv
import io
import itertools
import logging
import math
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from cbdlab.config import MAX_GRID_DEPTH
from cbdlab.services.errors import DimensionMismatchError, ResolutionExhaustedError

logger = logging.getLogger(__name__)


# ============================================================================
# Cubes and grids
# ============================================================================


class Cube(BaseModel):
    """A dyadic cube 2^-level ([0,1)^d + index) of the torus."""

    level: int = Field(..., ge=0, description="Dyadic level (0 is the root)")
    index: Tuple[int, ...] = Field(..., description="Lattice corner modulo 2^level")

    model_config = ConfigDict(frozen=True)

    def sort_key(self) -> Tuple[int, Tuple[int, ...]]:
        return (self.level, self.index)

    def __str__(self) -> str:
        return f"Q[{self.level}:{','.join(str(k) for k in self.index)}]"


@lru_cache(maxsize=8192)
def _cube_cells(dimension: int, depth: int, level: int, index: Tuple[int, ...]) -> np.ndarray:
    side = 1 << (depth - level)
    ranges = [np.arange(k * side, (k + 1) * side) for k in index]
    if dimension == 1:
        cells = ranges[0]
    else:
        mesh = np.meshgrid(*ranges, indexing="ij")
        cells = np.ravel_multi_index(
            tuple(axis.ravel() for axis in mesh), (1 << depth,) * dimension
        )
    cells = np.sort(cells)
    cells.setflags(write=False)
    return cells


@lru_cache(maxsize=256)
def _cube_map(dimension: int, depth: int, level: int) -> np.ndarray:
    shift = depth - level
    coords = np.unravel_index(np.arange(1 << (dimension * depth)), (1 << depth,) * dimension)
    mapped = np.ravel_multi_index(
        tuple(axis >> shift for axis in coords), (1 << level,) * dimension
    )
    mapped.setflags(write=False)
    return mapped


class DyadicGrid(BaseModel):
    """The dyadic system of the torus [0,1)^d down to depth L."""

    dimension: int = Field(default=1, ge=1, le=3, description="Torus dimension d")
    depth: int = Field(..., ge=0, le=MAX_GRID_DEPTH, description="Number of levels L")

    model_config = ConfigDict(frozen=True)

    # ------------------------------------------------------------------------
    # Sizes
    # ------------------------------------------------------------------------

    @property
    def side(self) -> int:
        """Number of cells along one axis."""
        return 1 << self.depth

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.side,) * self.dimension

    @property
    def n_cells(self) -> int:
        return 1 << (self.dimension * self.depth)

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.dimension * self.depth)

    def measure(self, cube: Cube) -> float:
        """Lebesgue measure 2^(-d*level) of a cube."""
        return 2.0 ** (-self.dimension * cube.level)

    def cubes_at(self, level: int) -> int:
        return 1 << (self.dimension * level)

    def midpoints(self) -> np.ndarray:
        """Cell midpoints as an array of shape (cells, d)."""
        coords = np.unravel_index(np.arange(self.n_cells), self.shape)
        return (np.stack(coords, axis=-1) + 0.5) / self.side

    # ------------------------------------------------------------------------
    # Cube relations
    # ------------------------------------------------------------------------

    def _validate_cube(self, cube: Cube) -> None:
        if cube.level > self.depth:
            raise ValueError(f"{cube} is below the grid depth {self.depth}")
        if len(cube.index) != self.dimension:
            raise DimensionMismatchError(
                f"{cube} has {len(cube.index)} coordinates, grid dimension is {self.dimension}"
            )
        limit = 1 << cube.level
        if any(k < 0 or k >= limit for k in cube.index):
            raise ValueError(f"{cube} index outside 0..{limit - 1}")

    def root(self) -> Cube:
        return Cube(level=0, index=(0,) * self.dimension)

    def cubes(self, level: int) -> List[Cube]:
        """All cubes of one level, in flat (row-major) order."""
        if not 0 <= level <= self.depth:
            raise ValueError(f"Level {level} outside 0..{self.depth}")
        return [
            Cube(level=level, index=index)
            for index in itertools.product(range(1 << level), repeat=self.dimension)
        ]

    def all_cubes(self) -> List[Cube]:
        return [cube for level in range(self.depth + 1) for cube in self.cubes(level)]

    def flat_index(self, cube: Cube) -> int:
        return int(np.ravel_multi_index(cube.index, (1 << cube.level,) * self.dimension))

    def cube_from_flat(self, level: int, flat: int) -> Cube:
        index = np.unravel_index(int(flat), (1 << level,) * self.dimension)
        return Cube(level=level, index=tuple(int(k) for k in index))

    def children(self, cube: Cube) -> List[Cube]:
        """The 2^d cubes of the next level partitioning ``cube``.

        Raises:
            ResolutionExhaustedError: If ``cube`` is already a leaf cell
        """
        self._validate_cube(cube)
        if cube.level == self.depth:
            raise ResolutionExhaustedError(
                f"{cube} is a leaf cell; the grid has depth {self.depth}"
            )
        return [
            Cube(level=cube.level + 1, index=tuple(2 * k + o for k, o in zip(cube.index, offset)))
            for offset in itertools.product((0, 1), repeat=self.dimension)
        ]

    def parent(self, cube: Cube) -> Optional[Cube]:
        self._validate_cube(cube)
        if cube.level == 0:
            return None
        return Cube(level=cube.level - 1, index=tuple(k >> 1 for k in cube.index))

    def contains(self, outer: Cube, inner: Cube) -> bool:
        """Whether ``inner`` is a (not necessarily strict) dyadic subcube of ``outer``."""
        if inner.level < outer.level:
            return False
        shift = inner.level - outer.level
        return all((ki >> shift) == ko for ki, ko in zip(inner.index, outer.index))

    def descendants(self, cube: Cube) -> List[Cube]:
        """All cubes of D(cube), ``cube`` included, ordered by level."""
        self._validate_cube(cube)
        found = []
        for level in range(cube.level, self.depth + 1):
            scale = 1 << (level - cube.level)
            ranges = [range(k * scale, (k + 1) * scale) for k in cube.index]
            found.extend(
                Cube(level=level, index=index) for index in itertools.product(*ranges)
            )
        return found

    def ancestors(self, cell: int) -> List[Cube]:
        """The chain of cubes containing a leaf cell, from the leaf up to the root."""
        leaf = self.cube_from_flat(self.depth, cell)
        chain = [leaf]
        while chain[-1].level > 0:
            chain.append(self.parent(chain[-1]))
        return chain

    def maximal_cubes(self, cube: Cube, predicate: Callable[[Cube], bool]) -> List[Cube]:
        """Maximal cubes of D(cube) satisfying ``predicate``.

        The result is an antichain and every cube of D(cube) satisfying the
        predicate lies inside one of the returned cubes.
        """
        self._validate_cube(cube)
        selected = []
        stack = [cube]
        while stack:
            current = stack.pop()
            if predicate(current):
                selected.append(current)
            elif current.level < self.depth:
                stack.extend(self.children(current))
        return sorted(selected, key=Cube.sort_key)

    def maximal_among(self, cubes: Sequence[Cube]) -> List[Cube]:
        """Members of ``cubes`` not strictly contained in another member."""
        members = set(cubes)
        result = []
        for cube in members:
            parent = self.parent(cube)
            covered = False
            while parent is not None:
                if parent in members:
                    covered = True
                    break
                parent = self.parent(parent)
            if not covered:
                result.append(cube)
        return sorted(result, key=Cube.sort_key)

    # ------------------------------------------------------------------------
    # Cells
    # ------------------------------------------------------------------------

    def cells(self, cube: Cube) -> np.ndarray:
        """Sorted flat indices of the leaf cells of ``cube``."""
        self._validate_cube(cube)
        return _cube_cells(self.dimension, self.depth, cube.level, cube.index)

    def cube_of_cells(self, level: int) -> np.ndarray:
        """Flat index of the level-``level`` cube containing each cell."""
        return _cube_map(self.dimension, self.depth, level)

    def triple_cells(self, cube: Cube) -> np.ndarray:
        """Cells of 3Q: Q and its adjacent equal-size cubes, wrapping around the torus."""
        self._validate_cube(cube)
        if cube.level == 0:
            return np.arange(self.n_cells)
        limit = 1 << cube.level
        neighbours = {
            tuple((k + o) % limit for k, o in zip(cube.index, offset))
            for offset in itertools.product((-1, 0, 1), repeat=self.dimension)
        }
        parts = [
            _cube_cells(self.dimension, self.depth, cube.level, index)
            for index in sorted(neighbours)
        ]
        return np.sort(np.concatenate(parts))

    def triple_measure(self, cube: Cube) -> float:
        return len(self.triple_cells(cube)) * self.cell_measure

    def indicator(self, cells: np.ndarray) -> np.ndarray:
        mask = np.zeros(self.n_cells)
        mask[cells] = 1.0
        return mask

    # ------------------------------------------------------------------------
    # Averages and maximal functions
    # ------------------------------------------------------------------------

    def level_averages(self, values: np.ndarray, level: int) -> np.ndarray:
        """Averages of a cellwise array over every cube of ``level``.

        ``values`` has shape (cells, ...); the result has shape
        (cubes at level, ...) in flat cube order.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_cells:
            raise DimensionMismatchError(
                f"Expected {self.n_cells} cells, got array of shape {values.shape}"
            )
        trail = values.shape[1:]
        count, block = 1 << level, 1 << (self.depth - level)
        split = []
        for _ in range(self.dimension):
            split.extend((count, block))
        blocks = values.reshape(tuple(split) + trail)
        averaged = blocks.mean(axis=tuple(range(1, 2 * self.dimension, 2)))
        return averaged.reshape((count**self.dimension,) + trail)

    def maximal_table(self, h: np.ndarray) -> np.ndarray:
        """Table T[l0, x] = max over levels l >= l0 of the level-l average at x.

        For a cube Q of level l0, T[l0, cells(Q)] is the dyadic maximal
        function of 1_Q h restricted to Q; T[0] is the torus maximal function.
        """
        h = np.asarray(h, dtype=float)
        table = np.empty((self.depth + 1, self.n_cells))
        running = h.copy()
        table[self.depth] = running
        for level in range(self.depth - 1, -1, -1):
            averages = self.level_averages(h, level)[self.cube_of_cells(level)]
            running = np.maximum(running, averages)
            table[level] = running
        return table

    def dyadic_maximal(
        self, h: np.ndarray, r: float = 1.0, cube: Optional[Cube] = None
    ) -> np.ndarray:
        """M_r h = (M |h|^r)^(1/r), over the torus or localized inside ``cube``.

        With ``cube`` the values are returned on ``cells(cube)`` only.
        """
        powered = np.abs(np.asarray(h, dtype=float)) ** r
        table = self.maximal_table(powered)
        if cube is None:
            result = table[0]
        else:
            result = table[cube.level][self.cells(cube)]
        return result ** (1.0 / r)


# ============================================================================
# Grid functions
# ============================================================================


class GridFunction(BaseModel):
    """Samples of an E^n valued function, E = (R^m, l^r), one block per cell."""

    grid: DyadicGrid
    values: np.ndarray = Field(..., description="Array of shape (cells, n, m)")
    r: float = Field(default=2.0, ge=1.0, description="Inner norm exponent of E")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("values", mode="before")
    @classmethod
    def _freeze_values(cls, value):
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_shape(self):
        if self.values.ndim != 3 or self.values.shape[0] != self.grid.n_cells:
            raise DimensionMismatchError(
                f"Values must have shape ({self.grid.n_cells}, n, m), got {self.values.shape}"
            )
        if min(self.values.shape[1:]) < 1:
            raise DimensionMismatchError("Outer and inner dimensions must be at least 1")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Grid function values must be finite")
        return self

    # ------------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------------

    @classmethod
    def scalar(cls, grid: DyadicGrid, values: Sequence[float]) -> "GridFunction":
        return cls(grid=grid, values=np.asarray(values, dtype=float).reshape(-1, 1, 1))

    @classmethod
    def vector(cls, grid: DyadicGrid, values: np.ndarray, r: float = 2.0) -> "GridFunction":
        """From an array of shape (cells, n); for E-valued data pass (cells, n, m)."""
        array = np.asarray(values, dtype=float)
        if array.ndim == 2:
            array = array[:, :, None]
        return cls(grid=grid, values=array, r=r)

    @classmethod
    def random(
        cls, grid: DyadicGrid, n: int, rng: np.random.Generator, m: int = 1, r: float = 2.0
    ) -> "GridFunction":
        """Independent standard normal samples on every cell."""
        return cls(grid=grid, values=rng.standard_normal((grid.n_cells, n, m)), r=r)

    @classmethod
    def stack(cls, components: Sequence["GridFunction"]) -> "GridFunction":
        """Join components with n = 1 (equal m, r, grid) into one E^n function."""
        first = components[0]
        for component in components:
            if component.grid != first.grid or component.m != first.m or component.r != first.r:
                raise DimensionMismatchError("Components disagree on grid or inner space")
        values = np.concatenate([component.values for component in components], axis=1)
        return cls(grid=first.grid, values=values, r=first.r)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(grid=self.grid, values=values, r=self.r)

    # ------------------------------------------------------------------------
    # Shape
    # ------------------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def m(self) -> int:
        return self.values.shape[2]

    @property
    def dual_r(self) -> float:
        return dual_exponent(self.r)

    # ------------------------------------------------------------------------
    # Algebra
    # ------------------------------------------------------------------------

    def component(self, i: int) -> "GridFunction":
        return self.with_values(self.values[:, i : i + 1, :])

    def apply_matrix(self, matrix: np.ndarray) -> "GridFunction":
        """Apply an (k x n) matrix to the outer index of every cell."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != self.n:
            raise DimensionMismatchError(
                f"Matrix of shape {matrix.shape} cannot act on outer dimension {self.n}"
            )
        return self.with_values(np.einsum("ij,cjm->cim", matrix, self.values))

    def restrict(self, cells: np.ndarray) -> "GridFunction":
        """Multiply by the indicator of a cell set."""
        return self.with_values(self.values * self.grid.indicator(cells)[:, None, None])

    def multiply(self, field: np.ndarray) -> "GridFunction":
        """Pointwise product with a scalar field of shape (cells,)."""
        field = np.asarray(field, dtype=float).reshape(-1)
        return self.with_values(self.values * field[:, None, None])

    def scale(self, factor: float) -> "GridFunction":
        return self.with_values(self.values * factor)

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return self.with_values(self.values - other.values)

    # ------------------------------------------------------------------------
    # Pointwise norms
    # ------------------------------------------------------------------------

    def inner_norms(self) -> np.ndarray:
        """||f_i(x)||_E for every cell and component, shape (cells, n)."""
        return np.linalg.norm(self.values, ord=self.r, axis=-1)

    def en_norms(self) -> np.ndarray:
        """||f(x)||_{E^n} = (sum_i ||f_i(x)||_E^2)^(1/2), shape (cells,)."""
        return np.sqrt(np.sum(self.inner_norms() ** 2, axis=1))

    def sup_norm(self) -> float:
        return float(np.max(self.en_norms()))

    # ------------------------------------------------------------------------
    # Serialization
    # ------------------------------------------------------------------------

    def header(self) -> Tuple[int, int, int, int, float]:
        return (self.grid.dimension, self.grid.depth, self.n, self.m, self.r)

    def to_csv(self) -> str:
        """CSV with a (d, L, n, m, r) header row followed by one row per cell."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["d", "L", "n", "m", "r"])
        writer.writerow([repr(v) for v in self.header()])
        for row in self.values.reshape(self.grid.n_cells, -1):
            writer.writerow([repr(float(v)) for v in row])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 2 or rows[0] != ["d", "L", "n", "m", "r"]:
            raise ValueError("Missing grid function header (d, L, n, m, r)")
        d, depth, n, m = (int(v) for v in rows[1][:4])
        r = float(rows[1][4])
        grid = DyadicGrid(dimension=d, depth=depth)
        values = np.array([[float(v) for v in row] for row in rows[2:]], dtype=float)
        return cls(grid=grid, values=values.reshape(grid.n_cells, n, m), r=r)

    def to_bytes(self) -> bytes:
        """Little-endian float64 header (d, L, n, m, r) followed by row-major values."""
        header = np.array(self.header(), dtype="<f8")
        return header.tobytes() + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridFunction":
        raw = np.frombuffer(data, dtype="<f8")
        d, depth, n, m = (int(v) for v in raw[:4])
        grid = DyadicGrid(dimension=d, depth=depth)
        return cls(grid=grid, values=raw[5:].reshape(grid.n_cells, n, m), r=float(raw[4]))


# ============================================================================
# Norms
# ============================================================================


def dual_exponent(r: float) -> float:
    """Hoelder conjugate r' of r in [1, inf]."""
    if r == 1.0:
        return math.inf
    if math.isinf(r):
        return 1.0
    return r / (r - 1.0)


def _validate_exponent(p: float) -> None:
    if not 1.0 <= p < math.inf:
        raise ValueError(f"Exponent p must lie in [1, inf), got {p}")


def local_norm_on(f: GridFunction, cells: np.ndarray, p: float) -> float:
    """Normalized norm (mean over ``cells`` of ||f(x)||_E^p)^(1/p) of a single component."""
    _validate_exponent(p)
    if f.n != 1:
        raise DimensionMismatchError(f"Local norms take one component, got n={f.n}")
    norms = f.inner_norms()[cells, 0]
    return float(np.mean(norms**p) ** (1.0 / p))


def local_norm(f: GridFunction, cube: Cube, p: float) -> float:
    """||f||_{avL^p(Q;E)}."""
    return local_norm_on(f, f.grid.cells(cube), p)


def lp_norm_on(f: GridFunction, cells: np.ndarray, p: float) -> float:
    """Un-normalized ||f||_{L^p(S;E)} over a cell set S."""
    _validate_exponent(p)
    if f.n != 1:
        raise DimensionMismatchError(f"L^p norms take one component, got n={f.n}")
    norms = f.inner_norms()[cells, 0]
    return float((f.grid.cell_measure * np.sum(norms**p)) ** (1.0 / p))
