"""
Convex bodies of vector-valued grid functions.

The body of f on a cell set S with respect to X = (avL^p or L^p)(S; E) is the
image of the unit ball of X* under phi -> <f, phi>. It is stored by its atoms
(one weighted n x m block per cell) and every geometric question goes
through the closed-form support function

    h(u) = ||u . f||_X = (sum_x w_x ||u^T F_x||_r^p)^(1/p).
"""

import csv
import io
import itertools
import logging
import math
from typing import Optional

import numpy as np
import shapely
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from shapely.geometry import MultiPoint

from cbdlab.config import settings
from cbdlab.services.errors import DimensionMismatchError
from cbdlab.services.grid import GridFunction, dual_exponent
from cbdlab.services.linalg import direction_net, dual_unit_maximizer, sphere_sample

logger = logging.getLogger(__name__)


class ConvexBody(BaseModel):
    """Symmetric convex body in R^n held as weighted atoms."""

    blocks: np.ndarray = Field(..., description="Atom blocks F_x of shape (k, n, m)")
    weights: np.ndarray = Field(..., description="Atom weights w_x of shape (k,)")
    p: float = Field(default=1.0, ge=1.0, description="Exponent of X = L^p(S;E)")
    r: float = Field(default=2.0, ge=1.0, description="Inner norm exponent of E")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    _vertex_cache: Optional[np.ndarray] = PrivateAttr(default=None)
    _vertex_cached: bool = PrivateAttr(default=False)

    # ------------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------------

    @classmethod
    def from_function(
        cls, f: GridFunction, cells: np.ndarray, p: float, normalized: bool = True
    ) -> "ConvexBody":
        """Body of ``f`` over ``cells`` for avL^p (normalized) or L^p."""
        if not 1.0 <= p < math.inf:
            raise ValueError(f"Body exponent must lie in [1, inf), got {p}")
        cells = np.asarray(cells)
        if len(cells) == 0:
            raise ValueError("A body needs at least one cell")
        weight = 1.0 / len(cells) if normalized else f.grid.cell_measure
        return cls(
            blocks=np.array(f.values[cells], dtype=float),
            weights=np.full(len(cells), weight),
            p=p,
            r=f.r,
        )

    @property
    def n(self) -> int:
        return self.blocks.shape[1]

    @property
    def m(self) -> int:
        return self.blocks.shape[2]

    @property
    def atom_count(self) -> int:
        return self.blocks.shape[0]

    @property
    def is_polytope(self) -> bool:
        """p = 1 and every atom maps the dual ball of E onto a polytope."""
        return self.p == 1.0 and (self.m == 1 or self.r == 1.0 or math.isinf(self.r))

    def is_zero(self) -> bool:
        return not np.any(self.blocks)

    # ------------------------------------------------------------------------
    # Support function and maximizers
    # ------------------------------------------------------------------------

    def _projections(self, directions: np.ndarray) -> np.ndarray:
        return np.einsum("kim,di->dkm", self.blocks, directions)

    def _outer_norm(self, atom_norms: np.ndarray) -> np.ndarray:
        if self.p == 1.0:
            return atom_norms @ self.weights
        return (atom_norms**self.p @ self.weights) ** (1.0 / self.p)

    def support(self, u: np.ndarray):
        """h_K(u) for one direction (float) or a batch of shape (D, n) (array)."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        directions = u[None, :] if single else u
        if directions.shape[-1] != self.n:
            raise DimensionMismatchError(
                f"Direction of length {directions.shape[-1]} for a body in R^{self.n}"
            )
        atom_norms = np.linalg.norm(self._projections(directions), ord=self.r, axis=-1)
        values = self._outer_norm(atom_norms)
        return float(values[0]) if single else values

    def maximizer(self, u: np.ndarray) -> np.ndarray:
        """Point of K attaining h_K(u), via the Hoelder equality case per atom.

        Accepts one direction or a batch (D, n); ties go toward +1.
        """
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        directions = u[None, :] if single else u
        projections = self._projections(directions)
        psi = dual_unit_maximizer(projections, self.r)
        if self.p == 1.0:
            coefficients = np.ones(projections.shape[:2])
        else:
            atom_norms = np.linalg.norm(projections, ord=self.r, axis=-1)
            totals = self._outer_norm(atom_norms)
            safe = np.where(totals > 0, totals, 1.0)
            coefficients = (atom_norms / safe[:, None]) ** (self.p - 1.0)
            # h = 0: any unit element of the dual ball maximizes
            flat = np.sum(self.weights) ** (-1.0 / dual_exponent(self.p))
            coefficients = np.where(totals[:, None] > 0, coefficients, flat)
        points = np.einsum("dk,kim,dkm->di", coefficients * self.weights, self.blocks, psi)
        return points[0] if single else points

    # ------------------------------------------------------------------------
    # Transformations
    # ------------------------------------------------------------------------

    def linear_image(self, matrix: np.ndarray) -> "ConvexBody":
        """Image R K, R acting on the outer index of every atom (R may be k x n)."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != self.n:
            raise DimensionMismatchError(
                f"Matrix of shape {matrix.shape} cannot act on a body in R^{self.n}"
            )
        return ConvexBody(
            blocks=np.einsum("ij,kjm->kim", matrix, self.blocks),
            weights=self.weights,
            p=self.p,
            r=self.r,
        )

    def scaled(self, factor: float) -> "ConvexBody":
        return ConvexBody(blocks=self.blocks * factor, weights=self.weights, p=self.p, r=self.r)

    # ------------------------------------------------------------------------
    # Exact geometry of polytope bodies
    # ------------------------------------------------------------------------

    def atom_extreme_points(self) -> np.ndarray:
        """Extreme points of each atom's dual-ball image, shape (k, P, n), unweighted."""
        if not self.is_polytope:
            raise ValueError("Atom extreme points exist only for polytope bodies")
        if self.m == 1:
            column = self.blocks[:, :, 0]
            return np.stack([column, -column], axis=1)
        if self.r == 1.0:
            signs = np.array(list(itertools.product((1.0, -1.0), repeat=self.m)))
            return np.einsum("kim,pm->kpi", self.blocks, signs)
        columns = np.swapaxes(self.blocks, 1, 2)
        return np.concatenate([columns, -columns], axis=1)

    def exact_vertices(self) -> Optional[np.ndarray]:
        """A finite point set whose convex hull is K, or None when unavailable."""
        if self._vertex_cached:
            return self._vertex_cache
        vertices = self._compute_vertices()
        self._vertex_cache = vertices
        self._vertex_cached = True
        return vertices

    def _compute_vertices(self) -> Optional[np.ndarray]:
        if not self.is_polytope:
            return None
        atoms = self.weights[:, None, None] * self.atom_extreme_points()
        atoms = atoms[np.any(atoms != 0, axis=(1, 2))]
        if len(atoms) == 0:
            return np.zeros((1, self.n))
        if self.n == 1:
            extent = self.support(np.ones(1))
            return np.array([[extent], [-extent]])
        if self.n == 2:
            return _planar_vertices(atoms)
        count = atoms.shape[1] ** len(atoms)
        if count > settings.vertex_enumeration_limit:
            logger.debug(f"Skipping vertex enumeration of {count} extreme sums")
            return None
        return _extreme_sums(atoms)

    def as_polygon(self):
        """Shapely geometry of a planar polytope body (Polygon, or LineString/Point if flat)."""
        if self.n != 2:
            raise DimensionMismatchError("Only planar bodies convert to polygons")
        vertices = self.exact_vertices()
        if vertices is None:
            raise ValueError("Body has no exact vertex description")
        return MultiPoint([tuple(v) for v in vertices]).convex_hull

    def contains(self, points: np.ndarray, tolerance: float = 1e-9) -> np.ndarray:
        """Membership of planar points in a polytope body."""
        geometry = self.as_polygon().buffer(tolerance)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return shapely.covers(geometry, shapely.points(points))

    # ------------------------------------------------------------------------
    # Debugging
    # ------------------------------------------------------------------------

    def atom_table_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["atom", "weight"] + [f"f{i}_{j}" for i in range(self.n) for j in range(self.m)]
        )
        for index, (weight, block) in enumerate(zip(self.weights, self.blocks)):
            writer.writerow([index, repr(float(weight))] + [repr(float(v)) for v in block.ravel()])
        return buffer.getvalue()


# ============================================================================
# Vertex enumeration helpers
# ============================================================================


def _planar_vertices(atoms: np.ndarray) -> np.ndarray:
    """Vertices of a Minkowski sum of planar atom polytopes.

    The maximizing vertex of every atom is constant between consecutive
    critical angles (normals of differences of atom extreme points; for
    segments these are the generator angles), so one test direction per
    open arc recovers every vertex of the sum.
    """
    first, second = np.triu_indices(atoms.shape[1], k=1)
    differences = (atoms[:, first, :] - atoms[:, second, :]).reshape(-1, 2)
    differences = differences[np.any(differences != 0, axis=1)]
    normals = np.mod(np.arctan2(differences[:, 1], differences[:, 0]) + math.pi / 2, math.pi)
    critical = np.unique(np.concatenate([normals, normals + math.pi]))
    following = np.append(critical[1:], critical[0] + 2.0 * math.pi)
    midangles = 0.5 * (critical + following)
    directions = np.stack([np.cos(midangles), np.sin(midangles)], axis=-1)
    scores = np.einsum("dn,kpn->dkp", directions, atoms)
    winners = np.argmax(scores, axis=-1)
    vertices = atoms[np.arange(len(atoms))[None, :], winners].sum(axis=1)
    _, keep = np.unique(np.round(vertices, 14), axis=0, return_index=True)
    return vertices[np.sort(keep)]


def _extreme_sums(atoms: np.ndarray) -> np.ndarray:
    """All sums choosing one extreme point per atom."""
    points = np.zeros((1, atoms.shape[2]))
    for atom in atoms:
        points = (points[:, None, :] + atom[None, :, :]).reshape(-1, atoms.shape[2])
    return points


# ============================================================================
# Minkowski dot product
# ============================================================================


class DotEstimate(BaseModel):
    """Right end-point of A . B with the way it was obtained."""

    value: float = Field(..., ge=0.0)
    exact: bool = Field(..., description="True when computed by exact enumeration")
    method: str = Field(..., description="interval, vertices or ascent")


def _validate_pair(first: ConvexBody, second: ConvexBody) -> None:
    if first.n != second.n:
        raise DimensionMismatchError(
            f"Bodies live in R^{first.n} and R^{second.n}; dot needs equal dimensions"
        )


def ascent_dot(first: ConvexBody, second: ConvexBody) -> float:
    """Certified lower bound of max a.b by multi-start alternating ascent.

    Every start alternates exact maximizers a -> b(a) -> a(b); the value
    a.b of feasible points never decreases, and the sweep stops when it
    improves by less than the ascent tolerance.
    """
    _validate_pair(first, second)
    n = first.n
    axes = np.eye(n)
    starts = np.vstack(
        [
            axes,
            -axes,
            direction_net(n, 4 * n + 4),
            sphere_sample(n, settings.ascent_random_starts, np.random.default_rng(settings.ascent_seed)),
        ]
    )
    points = first.maximizer(starts)
    values = np.full(len(starts), -np.inf)
    for sweep in range(settings.ascent_max_sweeps):
        partners = second.maximizer(points)
        points = first.maximizer(partners)
        updated = np.einsum("di,di->d", points, partners)
        improvement = np.max(updated - values)
        values = np.maximum(values, updated)
        if improvement < settings.ascent_tolerance:
            break
    else:
        logger.debug(f"Dot ascent stopped after {settings.ascent_max_sweeps} sweeps")
    return max(float(np.max(values)), 0.0)


def estimate_dot(first: ConvexBody, second: ConvexBody, method: str = "auto") -> DotEstimate:
    """Minkowski dot product with an exactness flag.

    Args:
        first: Body A
        second: Body B
        method: "auto" (exact when possible, ascent otherwise), "exact" or "ascent"

    Returns:
        DotEstimate with the value of max{a.b : a in A, b in B}

    Raises:
        DimensionMismatchError: If the bodies live in different dimensions
        ValueError: If ``method="exact"`` and neither body has exact vertices
    """
    _validate_pair(first, second)
    if method not in ("auto", "exact", "ascent"):
        raise ValueError(f"Unknown dot method: {method}")
    if method != "ascent":
        if first.n == 1:
            value = first.support(np.ones(1)) * second.support(np.ones(1))
            return DotEstimate(value=value, exact=True, method="interval")
        for polytope, other in ((first, second), (second, first)):
            vertices = polytope.exact_vertices()
            if vertices is not None:
                value = max(float(np.max(other.support(vertices))), 0.0)
                return DotEstimate(value=value, exact=True, method="vertices")
        if method == "exact":
            raise ValueError("Neither body admits exact vertex enumeration")
    return DotEstimate(value=ascent_dot(first, second), exact=False, method="ascent")


def dot(first: ConvexBody, second: ConvexBody) -> float:
    """max{a.b : a in A, b in B}, the right end-point of the Minkowski dot product."""
    return estimate_dot(first, second).value


def dot_bruteforce(first: ConvexBody, second: ConvexBody, limit: int = 1 << 16) -> float:
    """Exhaustive dot over every extreme-point pattern of the body with fewer patterns."""
    _validate_pair(first, second)
    candidates = [body for body in (first, second) if body.is_polytope]
    if not candidates:
        raise ValueError("Brute force needs at least one polytope body")
    polytope = min(candidates, key=lambda body: body.atom_extreme_points().shape[1] ** body.atom_count)
    other = second if polytope is first else first
    atoms = polytope.weights[:, None, None] * polytope.atom_extreme_points()
    if atoms.shape[1] ** len(atoms) > limit:
        raise ValueError(f"{atoms.shape[1]}^{len(atoms)} patterns exceed the limit {limit}")
    return max(float(np.max(other.support(_extreme_sums(atoms)))), 0.0)


def support(body: ConvexBody, u: np.ndarray):
    return body.support(u)


def linear_image(body: ConvexBody, matrix: np.ndarray) -> ConvexBody:
    return body.linear_image(matrix)
