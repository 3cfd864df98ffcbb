"""
Ellipsoid rounding of symmetric convex bodies.

A symmetric point set representing K is reduced to its linear span and fed
to the centered Khachiyan iteration (with Todd-Yildirim away steps). For
the final design weights u the moment matrix X(u) = sum u_i y_i y_i^T gives

    L = {y : y^T (k X)^-1 y <= 1}   (minimum-volume enclosing ellipsoid)
    E = k^(-1/2) L = {y : y^T X^-1 y <= 1}

E always lies in the convex hull of the points, hence in K, and K lies in
sqrt(max leverage) E <= sqrt(k (1 + tol)) E whenever the point set is exact.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial import ConvexHull, QhullError

from cbdlab.config import RANK_TOLERANCE, settings
from cbdlab.models.reports import InequalityCheck
from cbdlab.services.bodies import ConvexBody, estimate_dot
from cbdlab.services.errors import DimensionMismatchError, ZeroBodyError
from cbdlab.services.linalg import direction_net, spd_power

logger = logging.getLogger(__name__)


# ============================================================================
# Ellipsoids
# ============================================================================


class Ellipsoid(BaseModel):
    """Centered ellipsoid {U C z : |z| <= 1} on the span of U."""

    dimension: int = Field(..., ge=1)
    basis: np.ndarray = Field(..., description="Orthonormal span basis U, shape (n, k)")
    axes: np.ndarray = Field(..., description="Symmetric semi-axis matrix C, shape (k, k)")
    outer_scale: float = Field(default=1.0, description="K is inside outer_scale * E")
    max_ratio: float = Field(default=1.0, description="Largest h_K/h_E seen on the check net")
    within_bound: bool = Field(default=True, description="max_ratio <= sqrt(rank)(1+tol)")
    exact_points: bool = Field(default=True, description="Point set was an exact vertex set")
    iterations: int = Field(default=0, ge=0)
    tolerance: float = Field(default=0.0, ge=0.0)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @classmethod
    def zero(cls, dimension: int) -> "Ellipsoid":
        return cls(
            dimension=dimension,
            basis=np.zeros((dimension, 0)),
            axes=np.zeros((0, 0)),
            outer_scale=0.0,
            max_ratio=0.0,
        )

    @classmethod
    def from_shape(cls, shape: np.ndarray) -> "Ellipsoid":
        """Full-rank ellipsoid {x : x^T P x <= 1}."""
        eigenvalues, eigenvectors = np.linalg.eigh(np.asarray(shape, dtype=float))
        if np.min(eigenvalues) <= 0:
            raise ValueError("Shape matrix must be positive definite")
        return cls(
            dimension=len(eigenvalues),
            basis=eigenvectors,
            axes=np.diag(eigenvalues ** -0.5),
        )

    @property
    def rank(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        """Orthogonal projector onto the span."""
        return self.basis @ self.basis.T

    @property
    def axes_matrix(self) -> np.ndarray:
        """G = U C U^T, so that E = G (unit ball)."""
        return self.basis @ self.axes @ self.basis.T

    @property
    def shape(self) -> np.ndarray:
        """Shape matrix P with E = {x in span : x^T P x <= 1} (pseudo-inverse off the span)."""
        if self.rank == 0:
            return np.zeros((self.dimension, self.dimension))
        return self.basis @ spd_power(self.axes, -2.0) @ self.basis.T

    def support(self, u: np.ndarray):
        u = np.asarray(u, dtype=float)
        return np.linalg.norm(u @ self.basis @ self.axes, axis=-1)

    def contains(self, points: np.ndarray, tolerance: float = 1e-9) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.rank == 0:
            return np.linalg.norm(points, axis=1) <= tolerance
        coordinates = points @ self.basis
        residual = np.linalg.norm(points - coordinates @ self.basis.T, axis=1)
        radius = np.linalg.norm(coordinates @ spd_power(self.axes, -1.0), axis=1)
        return (radius <= 1.0 + tolerance) & (residual <= tolerance)


class RoundingMap(BaseModel):
    """R_K = P^(1/2) on the span and the identity on its complement."""

    transform: np.ndarray = Field(..., description="R_K, shape (n, n)")
    inverse_transpose: np.ndarray = Field(..., description="R_K^(-T), shape (n, n)")
    projector: np.ndarray = Field(..., description="Orthogonal projector onto the span")
    basis: np.ndarray = Field(..., description="Span basis, shape (n, k)")
    rank: int = Field(..., ge=1)

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def degenerate(self) -> bool:
        return self.rank < self.transform.shape[0]


# ============================================================================
# Khachiyan iteration
# ============================================================================


class KhachiyanResult(BaseModel):
    weights: np.ndarray
    moment: np.ndarray
    iterations: int
    max_leverage: float
    converged: bool

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


def khachiyan(points: np.ndarray, tolerance: float, max_iterations: int) -> KhachiyanResult:
    """Centered minimum-volume ellipsoid design weights for a spanning point set.

    Stops once every leverage y_i^T X(u)^-1 y_i is at most k (1 + tolerance).
    """
    count, k = points.shape
    weights = np.full(count, 1.0 / count)
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        moment = np.einsum("ni,n,nj->ij", points, weights, points)
        inverse = np.linalg.inv(moment)
        leverage = np.einsum("ni,ij,nj->n", points, inverse, points)
        top = int(np.argmax(leverage))
        if leverage[top] <= k * (1.0 + tolerance):
            converged = True
            break
        active = np.flatnonzero(weights > 0)
        low = int(active[np.argmin(leverage[active])])
        toward = leverage[top] / k - 1.0
        away = 1.0 - leverage[low] / k
        if toward >= away or weights[low] >= 1.0 - 1e-12:
            step = (leverage[top] - k) / (k * (leverage[top] - 1.0))
            weights *= 1.0 - step
            weights[top] += step
        else:
            drop = -weights[low] / (1.0 - weights[low])
            if leverage[low] > 1.0:
                step = max((leverage[low] - k) / (k * (leverage[low] - 1.0)), drop)
            else:
                step = drop
            weights *= 1.0 - step
            weights[low] = 0.0 if step == drop else weights[low] + step
    moment = np.einsum("ni,n,nj->ij", points, weights, points)
    leverage = np.einsum("ni,ij,nj->n", points, np.linalg.inv(moment), points)
    return KhachiyanResult(
        weights=weights,
        moment=moment,
        iterations=iteration,
        max_leverage=float(np.max(leverage)),
        converged=converged,
    )


def _hull_points(points: np.ndarray) -> np.ndarray:
    """Drop points that are not hull vertices; the ellipsoid only sees the hull."""
    if points.shape[1] == 1:
        return np.array([[np.max(points)], [np.min(points)]])
    if len(points) <= points.shape[1] + 1:
        return points
    try:
        hull = ConvexHull(points)
    except QhullError:
        return points
    return points[hull.vertices]


def _validate_tolerance(tolerance: float) -> None:
    if not 0.0 < tolerance <= 0.1:
        raise ValueError(f"MVEE tolerance must lie in (0, 0.1], got {tolerance}")


def ellipsoid_of_points(
    points: np.ndarray, tolerance: Optional[float] = None, exact_points: bool = True
) -> Ellipsoid:
    """Inscribed ellipsoid E = k^(-1/2) L of a symmetric point cloud."""
    tolerance = settings.mvee_tolerance if tolerance is None else tolerance
    _validate_tolerance(tolerance)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dimension = points.shape[1]
    points = np.vstack([points, -points])
    eigenvalues, eigenvectors = np.linalg.eigh(points.T @ points)
    top = float(np.max(eigenvalues))
    if top <= 0.0:
        return Ellipsoid.zero(dimension)
    basis = eigenvectors[:, eigenvalues > RANK_TOLERANCE * top]
    rank = basis.shape[1]
    reduced = _hull_points(points @ basis)
    result = khachiyan(reduced, tolerance, settings.mvee_max_iterations)
    if not result.converged:
        logger.warning(
            f"MVEE iteration hit the cap of {settings.mvee_max_iterations} "
            f"(max leverage {result.max_leverage:.6g}, rank {rank})"
        )
    return Ellipsoid(
        dimension=dimension,
        basis=basis,
        axes=spd_power(result.moment, 0.5),
        outer_scale=math.sqrt(result.max_leverage),
        exact_points=exact_points,
        iterations=result.iterations,
        tolerance=tolerance,
    )


def sandwich_ratios(body: ConvexBody, ellipsoid: Ellipsoid, directions: np.ndarray) -> Tuple[float, float]:
    """(min, max) of h_K(u)/h_E(u) over directions with h_E(u) > 0."""
    if body.n != ellipsoid.dimension:
        raise DimensionMismatchError("Body and ellipsoid live in different dimensions")
    inner = ellipsoid.support(directions)
    outer = body.support(directions)
    visible = inner > 1e-12 * max(float(np.max(inner)), 1e-300)
    if not np.any(visible):
        return (1.0, 1.0)
    ratios = outer[visible] / inner[visible]
    return (float(np.min(ratios)), float(np.max(ratios)))


def mvee(body: ConvexBody, tolerance: Optional[float] = None) -> Ellipsoid:
    """John-type ellipsoid E with h_E <= h_K <= sqrt(rank)(1 + tol) h_E.

    Polytope bodies use their exact vertices; other bodies use the
    maximizers of a deterministic direction net of mvee_net_factor^n * n
    directions, in which case the upper sandwich is only checked on a net
    and flagged when it fails.
    """
    tolerance = settings.mvee_tolerance if tolerance is None else tolerance
    vertices = body.exact_vertices()
    exact = vertices is not None
    if not exact:
        count = settings.mvee_net_factor**body.n * body.n
        vertices = body.maximizer(direction_net(body.n, count))
    ellipsoid = ellipsoid_of_points(vertices, tolerance, exact_points=exact)
    if ellipsoid.rank == 0:
        return ellipsoid
    check = direction_net(body.n, max(256, 4 * settings.mvee_net_factor**body.n * body.n))
    _, worst = sandwich_ratios(body, ellipsoid, check)
    bound = math.sqrt(ellipsoid.rank) * (1.0 + tolerance)
    within = worst <= bound * (1.0 + 1e-9)
    if not within:
        logger.warning(
            f"Sandwich ratio {worst:.6g} exceeds sqrt({ellipsoid.rank})(1+{tolerance:g}) = {bound:.6g}"
        )
    return ellipsoid.model_copy(update={"max_ratio": worst, "within_bound": within})


def round_transform(ellipsoid: Ellipsoid) -> RoundingMap:
    """R_K with R_K E = unit ball of the span, plus the projector onto the span.

    Raises:
        ZeroBodyError: If the ellipsoid has rank 0 (zero body)
    """
    if ellipsoid.rank == 0:
        raise ZeroBodyError("Zero body: domination holds trivially with constant 0")
    basis = ellipsoid.basis
    projector = basis @ basis.T
    complement = np.eye(ellipsoid.dimension) - projector
    transform = basis @ spd_power(ellipsoid.axes, -1.0) @ basis.T + complement
    inverse_transpose = basis @ ellipsoid.axes @ basis.T + complement
    return RoundingMap(
        transform=transform,
        inverse_transpose=inverse_transpose,
        projector=projector,
        basis=basis,
        rank=ellipsoid.rank,
    )


# ============================================================================
# Checks
# ============================================================================


def sandwich_check(
    body: ConvexBody, direction_count: int = 720, tolerance: Optional[float] = None
) -> List[InequalityCheck]:
    """h_E <= h_K <= sqrt(rank)(1 + tol) h_E on a direction net."""
    tolerance = settings.mvee_tolerance if tolerance is None else tolerance
    ellipsoid = mvee(body, tolerance)
    if ellipsoid.rank == 0:
        return []
    low, high = sandwich_ratios(body, ellipsoid, direction_net(body.n, direction_count))
    return [
        InequalityCheck.compare(
            "ellipsoid.sandwich",
            "h_K(u) <= sqrt(rank) (1 + tol) h_E(u) on the direction net",
            high,
            math.sqrt(ellipsoid.rank) * (1.0 + tolerance),
            exact=ellipsoid.exact_points,
        ),
        InequalityCheck.compare(
            "ellipsoid.inscribed",
            "h_E(u) <= h_K(u) on the direction net",
            1.0,
            low,
            exact=ellipsoid.exact_points,
        ),
    ]


def coordinate_product_check(
    body_f: ConvexBody, body_g: ConvexBody, tolerance: Optional[float] = None
) -> List[InequalityCheck]:
    """Coordinates of the rounded bodies against the sandwich constant and the dot.

    With f_i = (C^-1 U^T f) . e_i and g_i = (C U^T g) . e_i in span
    coordinates, ||f_i||_X <= sqrt(n)(1 + tol) and
    sum_i ||f_i||_X ||g_i||_Y <= n^(3/2)(1 + tol) dot(<<f>>, <<g>>).
    """
    tolerance = settings.mvee_tolerance if tolerance is None else tolerance
    ellipsoid = mvee(body_f, tolerance)
    if ellipsoid.rank == 0:
        return []
    forward = spd_power(ellipsoid.axes, -1.0) @ ellipsoid.basis.T
    backward = ellipsoid.axes @ ellipsoid.basis.T
    f_norms = body_f.support(forward)
    g_norms = body_g.support(backward)
    estimate = estimate_dot(body_f, body_g)
    n = body_f.n
    return [
        InequalityCheck.compare(
            "ellipsoid.coordinate_norm",
            "||f_i||_X <= sqrt(n) (1 + tol) after rounding",
            float(np.max(f_norms)),
            math.sqrt(n) * (1.0 + tolerance),
            exact=ellipsoid.exact_points,
        ),
        InequalityCheck.compare(
            "ellipsoid.coordinate_product",
            "sum_i ||f_i||_X ||g_i||_Y <= n^(3/2) (1 + tol) dot(<<f>>, <<g>>)",
            float(np.sum(f_norms * g_norms)),
            n**1.5 * (1.0 + tolerance) * estimate.value,
            rtol=1e-7,
            exact=ellipsoid.exact_points and estimate.exact,
        ),
    ]
