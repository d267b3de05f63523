"""Exact t-SNE: per-point bandwidth search, early exaggeration, momentum with gains."""

import logging
from dataclasses import dataclass, field

import numpy as np

from src.errors import UsageError

logger = logging.getLogger(__name__)

EXAGGERATION = 12.0
EXAGGERATION_SHARE = 0.25
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
MIN_GAIN = 0.01
PERPLEXITY_TOL = 1e-5
MAX_SEARCH_STEPS = 200


@dataclass
class TsneResult:
    coords: np.ndarray  # N×2
    perplexity: float  # the value actually used (may be shrunk)
    row_perplexities: np.ndarray
    kl_history: list[float] = field(default_factory=list)  # KL against the true P, every iteration
    exaggeration_iters: int = 0


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def _row_affinities(d: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Conditional distribution for one point and its perplexity at precision beta."""
    shifted = d - d.min()
    p = np.exp(-shifted * beta)
    total = p.sum()
    p /= total
    entropy = float(beta * np.sum(shifted * p) + np.log(total))
    return p, float(np.exp(entropy))


def conditional_affinities(X: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic P_{j|i} with each row's perplexity matched by bisection.

    Returns (P, achieved per-row perplexities).
    """
    n = X.shape[0]
    D = _squared_distances(X)
    P = np.zeros((n, n))
    achieved = np.zeros(n)
    for i in range(n):
        d = np.delete(D[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        spread = d.max() - d.min()
        if spread > 0:
            beta = 1.0 / spread
        p, perp = _row_affinities(d, beta)
        for _ in range(MAX_SEARCH_STEPS):
            if abs(perp - perplexity) < PERPLEXITY_TOL:
                break
            if perp > perplexity:
                lo = beta
                beta = beta * 2.0 if np.isinf(hi) else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
            p, perp = _row_affinities(d, beta)
        else:
            logger.warning(f"t-SNE bandwidth search for point {i} stopped at perplexity {perp:.6f}")
        P[i, np.arange(n) != i] = p
        achieved[i] = perp
    return P, achieved


def _kl(P: np.ndarray, Q: np.ndarray) -> float:
    nz = P > 0
    return float(np.sum(P[nz] * np.log(P[nz] / np.maximum(Q[nz], 1e-300))))


def tsne_project(embeddings, perplexity: float = 30.0, iterations: int = 1000, seed: int = 0) -> TsneResult:
    """Exact 2-D t-SNE of the rows of ``embeddings``; deterministic given seed."""
    X = np.asarray(embeddings, dtype=np.float64)
    n = X.shape[0]
    if n < 5:
        raise UsageError(f"t-SNE needs at least 5 points, got {n}")
    if iterations < 1:
        raise UsageError("iterations must be ≥ 1")
    limit = (n - 1) / 3.0
    if perplexity >= limit:
        shrunk = 0.9 * limit
        logger.warning(f"perplexity {perplexity} too large for {n} points, using {shrunk:.3f}")
        perplexity = shrunk

    conditional, achieved = conditional_affinities(X, perplexity)
    P = conditional + conditional.T
    P /= P.sum()
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    learning_rate = max(n / EXAGGERATION / 4.0, 50.0)
    early = max(1, int(iterations * EXAGGERATION_SHARE))

    history: list[float] = []
    for it in range(iterations):
        exaggerate = it < early
        momentum = MOMENTUM_EARLY if exaggerate else MOMENTUM_LATE
        P_eff = P * EXAGGERATION if exaggerate else P

        num = 1.0 / (1.0 + _squared_distances(Y))
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        W = (P_eff - Q) * num
        grad = 4.0 * (np.diag(W.sum(axis=1)) - W) @ Y

        gains = np.where(update * grad < 0.0, gains + 0.2, gains * 0.8)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)

        history.append(_kl(P, Q))
        if (it + 1) % 250 == 0:
            logger.debug(f"t-SNE iteration {it + 1}: KL {history[-1]:.5f}")

    return TsneResult(
        coords=Y,
        perplexity=perplexity,
        row_perplexities=achieved,
        kl_history=history,
        exaggeration_iters=early,
    )
