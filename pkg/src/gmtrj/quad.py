"""Second-order expansion of a log target, used to build cheap selection
weights (the GMTM-quad / GMTRJ-quad family)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DimensionError


@dataclass(frozen=True)
class LocalExpansion:
    """Gradient ``score`` and Hessian ``curvature`` of log pi at ``anchor``."""

    anchor: np.ndarray
    score: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        d = len(self.anchor)
        if self.score.shape != (d,) or self.curvature.shape != (d, d):
            raise DimensionError("score/curvature do not match the anchor dimension")


def log_A(expansion: LocalExpansion, candidate) -> float:
    """log of exp[s'D + 0.5 D'HD] with D = candidate - anchor."""
    candidate = np.asarray(candidate, dtype=float)
    if candidate.shape != expansion.anchor.shape:
        raise DimensionError(
            f"candidate has dimension {candidate.shape}, anchor {expansion.anchor.shape}"
        )
    delta = candidate - expansion.anchor
    return float(expansion.score @ delta + 0.5 * delta @ expansion.curvature @ delta)


def log_A_many(expansion: LocalExpansion, candidates: np.ndarray) -> np.ndarray:
    """Row-wise :func:`log_A` for an ``(n, d)`` array of candidates."""
    candidates = np.asarray(candidates, dtype=float)
    if candidates.ndim != 2 or candidates.shape[1] != len(expansion.anchor):
        raise DimensionError("candidates must be an (n, d) array matching the anchor")
    delta = candidates - expansion.anchor
    return delta @ expansion.score + 0.5 * np.einsum("ni,ij,nj->n", delta, expansion.curvature, delta)


def quad_weight(expansion: LocalExpansion, candidate, log_T_fwd: float) -> float:
    """Log selection weight pi*(candidate) / T(anchor, candidate).

    The factor pi(anchor) shared by every candidate expanded around the same
    anchor is left out; it cancels when weights are normalised.
    """
    return log_A(expansion, candidate) - log_T_fwd
