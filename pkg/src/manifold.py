"""Constant-curvature manifold {x ∈ R^{d+1} : ⟨x, x⟩ = 1/κ}.

κ > 0 gives the sphere of radius κ^{-1/2} under the Euclidean inner product;
κ < 0 gives the upper sheet of the hyperboloid under the Minkowski product
(last coordinate negated).
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.config import CcmSpec
from src.errors import DimensionError, UsageError

logger = logging.getLogger(__name__)


@dataclass
class DeviationSummary:
    mean: float
    max: float


def signature_inner(x: np.ndarray, y: np.ndarray, kappa: float) -> np.ndarray | float:
    """Inner product along the last axis; Minkowski signature when kappa < 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"length mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    if x.shape[-1] < 2:
        raise DimensionError("vectors need at least 2 coordinates")
    prod = x * y
    if kappa < 0:
        result = prod[..., :-1].sum(axis=-1) - prod[..., -1]
    else:
        result = prod.sum(axis=-1)
    return float(result) if np.ndim(result) == 0 else result


def membership(z: np.ndarray, spec: CcmSpec) -> np.ndarray | float:
    """μ(z): 1 exactly on the manifold, decaying with the deviation of ⟨z, z⟩ from 1/κ."""
    inner = signature_inner(z, z, spec.kappa)
    if spec.membership_form == "printed":
        value = np.exp((-inner - spec.target) / (2.0 * spec.zeta**2))
    else:
        value = np.exp(-((inner - spec.target) ** 2) / (2.0 * spec.zeta**2))
    return float(value) if np.ndim(value) == 0 else value


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def sample_prior(spec: CcmSpec, count: int, seed) -> np.ndarray:
    """count points exactly on the manifold, shape (count, d+1); deterministic given seed."""
    if count < 1:
        raise UsageError("count must be ≥ 1")
    rng = _rng(seed)
    dim = spec.ambient_dim
    radius = 1.0 / np.sqrt(abs(spec.kappa))
    if spec.kappa > 0:
        g = rng.standard_normal((count, dim))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return radius * g / norms

    # Exponential map at the base point (0, …, 0, r) of a Gaussian tangent vector.
    u = rng.standard_normal((count, dim - 1)) * spec.prior_scale
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    t = norm / radius
    direction = np.divide(u, norm, out=np.zeros_like(u), where=norm > 0)
    spatial = radius * np.sinh(t) * direction
    last = radius * np.cosh(t)
    return np.concatenate([spatial, last], axis=1)


def manifold_deviation(points, spec: CcmSpec) -> DeviationSummary:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise UsageError("manifold_deviation needs at least one point")
    pts = np.atleast_2d(pts)
    dev = np.abs(np.asarray(signature_inner(pts, pts, spec.kappa)) - spec.target)
    return DeviationSummary(mean=float(dev.mean()), max=float(dev.max()))


def project_to_manifold(z: np.ndarray, spec: CcmSpec) -> np.ndarray:
    """Nearest-by-construction point on the manifold; used for analysis only."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    radius = 1.0 / np.sqrt(abs(spec.kappa))
    if spec.kappa > 0:
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        projected = radius * z / safe
        projected[norms[:, 0] == 0] = np.eye(z.shape[1])[-1] * radius
        return projected
    spatial = z[:, :-1]
    last = np.sqrt(radius**2 + (spatial**2).sum(axis=1, keepdims=True))
    return np.concatenate([spatial, last], axis=1)
