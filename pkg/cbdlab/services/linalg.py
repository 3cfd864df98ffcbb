"""Small numerical helpers shared by the services: SPD matrix functions,
deterministic direction nets and Hoelder dual maximizers."""

import math

import numpy as np

from cbdlab.config import EIGENVALUE_FLOOR


def spd_power(matrices: np.ndarray, exponent: float, floor: float = EIGENVALUE_FLOOR) -> np.ndarray:
    """Power A^t of symmetric positive (semi)definite matrices via eigendecomposition.

    Works on a single (n, n) matrix or a stack (..., n, n). Eigenvalues below
    ``floor`` times the largest eigenvalue of each matrix are clamped to it.
    """
    matrices = np.asarray(matrices, dtype=float)
    symmetric = 0.5 * (matrices + np.swapaxes(matrices, -1, -2))
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    top = np.max(np.abs(eigenvalues), axis=-1, keepdims=True)
    clamped = np.maximum(eigenvalues, floor * np.where(top > 0, top, 1.0))
    scaled = eigenvectors * clamped[..., None, :] ** exponent
    return scaled @ np.swapaxes(eigenvectors, -1, -2)


def spectral_norm(matrices: np.ndarray) -> np.ndarray:
    """Largest singular value of a matrix or a stack of matrices."""
    return np.linalg.norm(np.asarray(matrices, dtype=float), ord=2, axis=(-2, -1))


# ============================================================================
# Direction nets
# ============================================================================


def _radical_inverse(index: np.ndarray, base: int) -> np.ndarray:
    result = np.zeros(index.shape, dtype=float)
    fraction = 1.0 / base
    remaining = index.astype(np.int64)
    while np.any(remaining > 0):
        result += (remaining % base) * fraction
        remaining //= base
        fraction /= base
    return result


def circle_net(count: int, half: bool = False) -> np.ndarray:
    """Equal-angle unit directions in the plane, over [0, 2pi) or [0, pi)."""
    span = math.pi if half else 2.0 * math.pi
    angles = span * np.arange(count) / count
    return np.stack([np.cos(angles), np.sin(angles)], axis=-1)


def direction_net(n: int, count: int) -> np.ndarray:
    """Deterministic unit directions in R^n whose prefixes are nested.

    The net starts with the coordinate axes; n = 2 continues with van der
    Corput angles in [0, pi), n = 3 with a Halton sphere sequence, larger n
    with a fixed-seed Gaussian stream. Growing ``count`` only appends
    directions, so maxima over the net are monotone in ``count``.
    """
    if n < 1:
        raise ValueError(f"Dimension must be positive, got {n}")
    if n == 1:
        return np.ones((1, 1))
    axes = np.eye(n)
    extra = max(count - n, 0)
    index = np.arange(1, extra + 1)
    if n == 2:
        angles = math.pi * _radical_inverse(index + 1, 2)
        rest = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    elif n == 3:
        z = 1.0 - 2.0 * _radical_inverse(index, 2)
        phi = 2.0 * math.pi * _radical_inverse(index, 3)
        rho = np.sqrt(np.maximum(1.0 - z**2, 0.0))
        rest = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    else:
        stream = np.random.default_rng(0).standard_normal((extra, n))
        rest = stream / np.linalg.norm(stream, axis=1, keepdims=True)
    return np.vstack([axes, rest])[: max(count, n)]


def sphere_sample(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random unit vectors in R^n."""
    samples = rng.standard_normal((count, n))
    norms = np.linalg.norm(samples, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return samples / norms


# ============================================================================
# Hoelder dual maximizers
# ============================================================================


def _sign(values: np.ndarray) -> np.ndarray:
    """Sign with ties broken toward +1."""
    return np.where(values < 0, -1.0, 1.0)


def dual_unit_maximizer(g: np.ndarray, r: float) -> np.ndarray:
    """Unit l^{r'} vectors psi along the last axis with <psi, g> = ||g||_r.

    Zero rows get the all-ones direction scaled to unit l^{r'} norm (r < inf)
    or the first basis vector (r = inf).
    """
    g = np.asarray(g, dtype=float)
    m = g.shape[-1]
    if r == 1.0:
        return _sign(g)
    if math.isinf(r):
        winner = np.argmax(np.abs(g), axis=-1)
        psi = np.zeros_like(g)
        chosen = np.take_along_axis(g, winner[..., None], axis=-1)
        np.put_along_axis(psi, winner[..., None], _sign(chosen), axis=-1)
        return psi
    norms = np.linalg.norm(g, ord=r, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    psi = _sign(g) * (np.abs(g) / safe) ** (r - 1.0)
    fallback = np.full_like(g, m ** (-(r - 1.0) / r))
    return np.where(norms > 0, psi, fallback)
