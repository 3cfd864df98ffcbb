"""
Matrix weights on the dyadic torus: A_2 and A_infinity characteristics,
generators and weighted norms.
"""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from cbdlab.config import settings
from cbdlab.models.experiment import WeightKind, WeightSpec
from cbdlab.services.errors import DimensionMismatchError, InvalidWeightError
from cbdlab.services.grid import DyadicGrid, GridFunction
from cbdlab.services.linalg import direction_net, spd_power, spectral_norm

logger = logging.getLogger(__name__)


class MatrixWeight(BaseModel):
    """Cellwise symmetric positive definite n x n matrices W(x)."""

    grid: DyadicGrid
    matrices: np.ndarray = Field(..., description="Array of shape (cells, n, n)")
    label: str = Field(default="weight", description="Name used in reports")
    a2_admissible: bool = Field(default=True, description="Generator parameters lie in the A_2 range")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    _inverse: Optional[np.ndarray] = PrivateAttr(default=None)

    @field_validator("matrices", mode="before")
    @classmethod
    def _freeze_matrices(cls, value):
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_spd(self):
        shape = self.matrices.shape
        if len(shape) != 3 or shape[0] != self.grid.n_cells or shape[1] != shape[2]:
            raise DimensionMismatchError(
                f"Weight matrices must have shape ({self.grid.n_cells}, n, n), got {shape}"
            )
        scale = max(float(np.max(np.abs(self.matrices))), 1e-300)
        asymmetry = float(np.max(np.abs(self.matrices - np.swapaxes(self.matrices, 1, 2))))
        if asymmetry > 1e-10 * scale:
            raise InvalidWeightError(f"Weight '{self.label}' is not symmetric (deviation {asymmetry:.3g})")
        smallest = np.linalg.eigvalsh(self.matrices)[:, 0]
        if not np.all(smallest > 0):
            cell = int(np.argmin(smallest))
            raise InvalidWeightError(
                f"Weight '{self.label}' is not positive definite at cell {cell} "
                f"(smallest eigenvalue {smallest[cell]:.3g})"
            )
        return self

    # ------------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------------

    @classmethod
    def identity(cls, grid: DyadicGrid, n: int) -> "MatrixWeight":
        return cls(grid=grid, matrices=np.broadcast_to(np.eye(n), (grid.n_cells, n, n)), label="identity")

    @classmethod
    def from_scalar(
        cls, grid: DyadicGrid, w: np.ndarray, n: int = 1, label: str = "scalar"
    ) -> "MatrixWeight":
        """The weight w(x) I_n."""
        w = np.asarray(w, dtype=float).reshape(-1)
        return cls(grid=grid, matrices=w[:, None, None] * np.eye(n), label=label)

    # ------------------------------------------------------------------------
    # Derived fields
    # ------------------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    @property
    def inverse(self) -> np.ndarray:
        """Cellwise inverse W^-1(x)."""
        if self._inverse is None:
            inverse = np.linalg.inv(self.matrices)
            inverse = 0.5 * (inverse + np.swapaxes(inverse, 1, 2))
            inverse.setflags(write=False)
            self._inverse = inverse
        return self._inverse

    def inverse_weight(self) -> "MatrixWeight":
        return MatrixWeight(
            grid=self.grid,
            matrices=self.inverse,
            label=f"{self.label}^-1",
            a2_admissible=self.a2_admissible,
        )

    def power(self, exponent: float) -> np.ndarray:
        """W(x)^t for every cell."""
        return spd_power(self.matrices, exponent)

    def averages(self, level: int) -> np.ndarray:
        """<W>_Q for every cube of ``level``, shape (cubes, n, n)."""
        return self.grid.level_averages(self.matrices, level)

    def directional(self, direction: np.ndarray) -> np.ndarray:
        """The scalar weight x -> e . W(x) e."""
        return np.einsum("i,cij,j->c", direction, self.matrices, direction)

    def to_grid_function(self) -> GridFunction:
        """n x n blocks stored as an E^n function with m = n."""
        return GridFunction(grid=self.grid, values=self.matrices)


def _validate_pair(first: MatrixWeight, second: MatrixWeight) -> None:
    if first.grid != second.grid:
        raise DimensionMismatchError("Weights live on different grids")
    if first.n != second.n:
        raise DimensionMismatchError(f"Weights have sizes {first.n} and {second.n}")


# ============================================================================
# Characteristics
# ============================================================================


def a2_characteristic(weight: MatrixWeight, other: Optional[MatrixWeight] = None) -> float:
    """[W, V]_A2 = sup_Q |<W>_Q^(1/2) <V>_Q^(1/2)|^2 over all dyadic cubes.

    With ``other`` omitted, V = W^-1 and the result is [W]_A2.
    """
    other = weight.inverse_weight() if other is None else other
    _validate_pair(weight, other)
    best = 0.0
    for level in range(weight.grid.depth + 1):
        left = spd_power(weight.averages(level), 0.5)
        right = spd_power(other.averages(level), 0.5)
        best = max(best, float(np.max(spectral_norm(left @ right) ** 2)))
    return best


def ainfty_scalar(grid: DyadicGrid, w: np.ndarray) -> float:
    """[w]_Ainf = sup_Q (1/w(Q)) int_Q M(1_Q w), exact on the grid."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.all(w > 0):
        raise InvalidWeightError("Scalar weights must be positive on every cell")
    table = grid.maximal_table(w)
    best = 1.0
    for level in range(grid.depth + 1):
        local = grid.level_averages(table[level], level) / grid.level_averages(w, level)
        best = max(best, float(np.max(local)))
    return best


def ainfty_matrix(weight: MatrixWeight, direction_count: Optional[int] = None) -> float:
    """Lower estimate of [W]_Ainf: max of [e.We]_Ainf over a nested direction net."""
    count = settings.ainfty_direction_count if direction_count is None else direction_count
    if weight.n > 1 and count < 2 * weight.n:
        raise ValueError(f"direction_count must be at least 2n = {2 * weight.n}, got {count}")
    directions = direction_net(weight.n, count)
    return max(ainfty_scalar(weight.grid, weight.directional(e)) for e in directions)


def ainfty_net_curve(weight: MatrixWeight, counts: Sequence[int]) -> List[Tuple[int, float]]:
    """Sampled [W]_Ainf for increasing net sizes; nondecreasing since nets are nested."""
    counts = sorted(counts)
    directions = direction_net(weight.n, counts[-1])
    values = [ainfty_scalar(weight.grid, weight.directional(e)) for e in directions]
    curve = []
    for count in counts:
        curve.append((count, max(values[: max(count, weight.n)])))
    return curve


# ============================================================================
# Generators
# ============================================================================


def _torus_distance(grid: DyadicGrid, x0: float) -> np.ndarray:
    offsets = np.abs(grid.midpoints() - x0)
    offsets = np.minimum(offsets, 1.0 - offsets)
    # midpoints sit at least half a cell away from any cell corner
    return np.maximum(np.linalg.norm(offsets, axis=1), 0.25 / grid.side)


def _flag_exponents(label: str, exponents: Sequence[float], dimension: int) -> bool:
    admissible = all(-dimension < a < dimension for a in exponents)
    if not admissible:
        logger.warning(
            f"Weight '{label}': exponents {list(exponents)} leave (-{dimension}, {dimension}); "
            f"not in A_2, allowed but the characteristic may blow up with L"
        )
    return admissible


def _rotation(angles: np.ndarray, n: int) -> np.ndarray:
    """Rotations in the (e_0, e_1) plane, shape (cells, n, n)."""
    rotations = np.broadcast_to(np.eye(n), (len(angles), n, n)).copy()
    if n >= 2:
        cos, sin = np.cos(angles), np.sin(angles)
        rotations[:, 0, 0], rotations[:, 0, 1] = cos, -sin
        rotations[:, 1, 0], rotations[:, 1, 1] = sin, cos
    return rotations


def _log_field(grid: DyadicGrid, spec: WeightSpec, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    points = grid.midpoints()
    field = np.zeros((grid.n_cells, n, n))
    for mode in range(1, spec.modes + 1):
        frequency = rng.integers(-2, 3, size=grid.dimension)
        if not np.any(frequency):
            frequency[0] = 1
        phase = 2.0 * math.pi * mode * (points @ frequency)
        for wave in (np.cos(phase), np.sin(phase)):
            coefficient = rng.standard_normal((n, n))
            coefficient = 0.5 * (coefficient + coefficient.T)
            field += (spec.amplitude / mode) * wave[:, None, None] * coefficient
    eigenvalues, eigenvectors = np.linalg.eigh(field)
    return (eigenvectors * np.exp(eigenvalues)[:, None, :]) @ np.swapaxes(eigenvectors, 1, 2)


def make_weight(grid: DyadicGrid, spec: WeightSpec, n: int = 2, seed: int = 0) -> MatrixWeight:
    """Generate a matrix weight from its configuration.

    Args:
        grid: Grid carrying the weight
        spec: Generator kind and parameters
        n: Matrix size used when ``spec.n`` is not set
        seed: Seed used when ``spec.seed`` is not set

    Returns:
        MatrixWeight, SPD on every cell and deterministic for a fixed seed

    Raises:
        DimensionMismatchError: If exponent or scale lists do not have n entries
    """
    n = spec.n or n
    label = spec.label or spec.kind.value
    distance = _torus_distance(grid, spec.x0)

    if spec.kind == WeightKind.IDENTITY:
        return MatrixWeight.identity(grid, n).model_copy(update={"label": label})

    if spec.kind == WeightKind.SCALAR_POWER:
        admissible = _flag_exponents(label, [spec.alpha], grid.dimension)
        return MatrixWeight(
            grid=grid,
            matrices=(distance**spec.alpha)[:, None, None] * np.eye(n),
            label=label,
            a2_admissible=admissible,
        )

    if spec.kind in (WeightKind.DIAGONAL, WeightKind.BLOOM_ROTATED):
        default = [spec.alpha] * n if spec.kind == WeightKind.DIAGONAL else [spec.alpha] + [0.0] * (n - 1)
        alphas = spec.alphas or default
        scales = spec.scales or [1.0] * n
        if len(alphas) != n or len(scales) != n:
            raise DimensionMismatchError(
                f"Weight '{label}' needs {n} exponents and scales, got {len(alphas)} and {len(scales)}"
            )
        admissible = _flag_exponents(label, alphas, grid.dimension)
        diagonal = np.stack([s * distance**a for a, s in zip(alphas, scales)], axis=-1)
        matrices = diagonal[:, :, None] * np.eye(n)
        if spec.kind == WeightKind.BLOOM_ROTATED:
            rotation = _rotation(spec.theta + spec.theta_slope * grid.midpoints()[:, 0], n)
            matrices = np.swapaxes(rotation, 1, 2) @ matrices @ rotation
            matrices = 0.5 * (matrices + np.swapaxes(matrices, 1, 2))
        return MatrixWeight(grid=grid, matrices=matrices, label=label, a2_admissible=admissible)

    if spec.kind == WeightKind.RANDOM_LOGSMOOTH:
        seed = seed if spec.seed is None else spec.seed
        return MatrixWeight(grid=grid, matrices=_log_field(grid, spec, n, seed), label=label)

    raise ValueError(f"Unknown weight kind: {spec.kind}")


# ============================================================================
# Weighted norms
# ============================================================================


def weighted_norm(f: GridFunction, weight: MatrixWeight, p: float) -> float:
    """||W^(1/p) f||_{L^p(torus; E^n)} with the l^2 combination of E norms."""
    if f.n != weight.n or f.grid != weight.grid:
        raise DimensionMismatchError(
            f"Function with n={f.n} cannot be weighted by a {weight.n} x {weight.n} weight on this grid"
        )
    if not 1.0 <= p < math.inf:
        raise ValueError(f"Exponent p must lie in [1, inf), got {p}")
    weighted = f.with_values(np.einsum("cij,cjm->cim", weight.power(1.0 / p), f.values))
    norms = weighted.en_norms()
    return float((f.grid.cell_measure * np.sum(norms**p)) ** (1.0 / p))
