"""Readout errors: confusion matrices and SPAM correction."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class SingularConfusionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Column-stochastic ``C[i, j] = P(report i | true state j)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
            raise ValueError("confusion matrix entries must lie in [0, 1]")
        if not np.allclose(m.sum(axis=0), 1.0, atol=1e-12, rtol=0):
            raise ValueError("confusion matrix columns must sum to 1")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    @classmethod
    def identity(cls, d: int) -> ConfusionMatrix:
        return cls(np.eye(d))

    @classmethod
    def symmetric(cls, d: int, error: float) -> ConfusionMatrix:
        """Each state is misread with total probability ``error``, spread evenly."""
        m = np.full((d, d), error / (d - 1))
        np.fill_diagonal(m, 1.0 - error)
        return cls(m)

    @classmethod
    def from_counts(cls, counts: np.ndarray) -> ConfusionMatrix:
        """Estimate from ``counts[i, j]`` = outcome ``i`` while preparing ``j``."""
        counts = np.asarray(counts, dtype=float)
        return cls(counts / counts.sum(axis=0, keepdims=True))

    def apply(self, probs: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(probs, dtype=float)

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> ConfusionMatrix:
        return cls(np.array(data["matrix"], dtype=float))


def _lstsq_on_face(c: np.ndarray, f: np.ndarray, support: tuple[int, ...]) -> np.ndarray | None:
    # min ||C_S x - f||^2 subject to sum x = 1, via the KKT system
    cs = c[:, support]
    k = len(support)
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2 * cs.T @ cs
    kkt[:k, k] = 1
    kkt[k, :k] = 1
    rhs = np.concatenate([2 * cs.T @ f, [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    x = np.zeros(c.shape[1])
    x[list(support)] = sol[:k]
    return x


def spam_correct(counts: np.ndarray, confusion: ConfusionMatrix) -> np.ndarray:
    """Invert readout errors by least squares on the probability simplex.

    Solves ``min ||C p - f||`` over ``p >= 0, sum p = 1`` where ``f`` are the
    observed frequencies. The problem is small, so every face of the simplex
    is tried and the best feasible solution returned (exact KKT solution).
    """
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("counts are empty")
    c = confusion.matrix
    if counts.shape != (c.shape[0],):
        raise ValueError("counts length does not match confusion matrix")
    cond = confusion.condition_number
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularConfusionError(f"confusion matrix is singular (condition number {cond:.3g})")
    if cond > 1e6:
        logger.warning("ill-conditioned confusion matrix (condition number %.3g)", cond)
    f = counts / total
    x = np.linalg.solve(c, f)
    if np.all(x >= 0):
        return x / x.sum()
    d = c.shape[1]
    best, best_cost = None, np.inf
    for size in range(1, d + 1):
        for support in itertools.combinations(range(d), size):
            cand = _lstsq_on_face(c, f, support)
            if cand is None or np.any(cand < -1e-14):
                continue
            cost = np.sum((c @ cand - f) ** 2)
            if cost < best_cost - 1e-15:
                best, best_cost = cand, cost
    best = np.clip(best, 0, None)
    return best / best.sum()


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial outcome counts for the given outcome probabilities."""
    p = np.clip(np.asarray(probs, dtype=float), 0, None)
    p = p / p.sum()
    return rng.multinomial(int(shots), p)
