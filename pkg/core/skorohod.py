"""One-dimensional Skorohod map at a barrier alpha (alpha may be +inf).

pushing(t_j) is the running maximum of (f - alpha)^+ and constrained = f - pushing.
Steps where pushing grows set constrained to alpha exactly, so the discrete
complementarity sum is exactly zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from core.paths import SampledPath
from utils.config import INPUT_TOLERANCE


@dataclass(frozen=True)
class ReflectionOutput:
    constrained: SampledPath
    pushing: SampledPath


def _reflect_values(f: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    if math.isinf(alpha):
        return f.copy(), np.zeros_like(f)
    pushing = np.maximum.accumulate(np.maximum(f - alpha, 0.0))
    previous = np.concatenate(([0.0], pushing[:-1]))
    new_max = pushing > previous
    constrained = np.where(new_max, alpha, np.minimum(f - pushing, alpha))
    return constrained, pushing


def reflect(f: SampledPath, alpha: float) -> ReflectionOutput:
    if f.values.shape[0] != 1:
        raise ValueError(f"reflect takes a single coordinate, got {f.values.shape[0]}")
    if alpha == -math.inf or math.isnan(alpha):
        raise ValueError(f"barrier must be a real number or +inf, got {alpha}")
    values = f.values[0]
    if values[0] > alpha + INPUT_TOLERANCE:
        raise ValueError(f"path starts at {values[0]} above the barrier {alpha}")
    constrained, pushing = _reflect_values(values, alpha)
    return ReflectionOutput(
        constrained=SampledPath(f.times, constrained[None, :], f.coords),
        pushing=SampledPath(f.times, pushing[None, :], f.coords),
    )


class ReflectionState:
    """Running maximum of (f - alpha)^+; elementwise over an array of paths."""

    def __init__(self, alpha: float, shape=()):
        if alpha == -math.inf or math.isnan(alpha):
            raise ValueError(f"barrier must be a real number or +inf, got {alpha}")
        self.alpha = float(alpha)
        self.pushing = np.zeros(shape)


def reflect_incremental(state: ReflectionState, f_next):
    """Advance the map by one grid point; returns (constrained, pushing, state)."""
    f_next = np.asarray(f_next, dtype=float)
    if math.isinf(state.alpha):
        return f_next, state.pushing, state
    excess = f_next - state.alpha
    new_max = excess > state.pushing
    pushing = np.where(new_max, excess, state.pushing)
    constrained = np.where(new_max, state.alpha, np.minimum(f_next - pushing, state.alpha))
    state.pushing = pushing
    return constrained, pushing, state


def complementarity(constrained: np.ndarray, pushing: np.ndarray, alpha: float) -> float:
    """sum_j (alpha - constrained_j) * (pushing_j - pushing_{j-1})."""
    if math.isinf(alpha):
        return 0.0
    increments = np.diff(np.concatenate(([0.0], pushing)))
    return float(np.sum((alpha - constrained) * increments))
