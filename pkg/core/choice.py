"""Choice probability beta_n of the JSQ(d) model and its surrogates.

beta_n(x) is the probability that d servers drawn without replacement all lie in
a fixed set holding a fraction x of the n servers; gamma_n(x) = x^d is the
with-replacement version.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from utils.config import (
    ASYMPTOTIC_GRID_POINTS,
    INPUT_TOLERANCE,
    LOG_BOUND_CONSTANT,
    LOG_SPACE_MIN_D,
)


@dataclass(frozen=True)
class SystemParams:
    """One prelimit system: n servers, d choices, per-server arrival rate lam."""

    n: int
    d: int
    lam: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if int(self.d) != self.d or not 1 <= self.d <= self.n:
            raise ValueError(f"d must be an integer in [1, n={self.n}], got {self.d}")
        # lam = 0 is kept for pure-death runs and oracle checks
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be a nonnegative real, got {self.lam}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def scale(self) -> float:
        """d / sqrt(n), the quantity that separates the three fluctuation regimes."""
        return self.d / math.sqrt(self.n)

    @property
    def alpha_n(self) -> float:
        root = math.sqrt(self.n)
        return root * (1.0 - self.lam) - root * math.log(self.d) / self.d


@dataclass(frozen=True)
class ChoiceEval:
    x: float
    beta: float
    beta_prime: float
    gamma: float


def _checked(x: float) -> float:
    if not (-INPUT_TOLERANCE <= x <= 1.0 + INPUT_TOLERANCE):
        raise ValueError(f"x must lie in [0, 1], got {x}")
    return min(max(float(x), 0.0), 1.0)


def _factors(params: SystemParams, x: float) -> np.ndarray:
    i = np.arange(params.d, dtype=float) / params.n
    return (x - i) / (1.0 - i)


def beta_ext(params: SystemParams, x: float) -> float:
    """beta_n as the product formula on the whole real line, 0 at and below (d-1)/n."""
    n, d = params.n, params.d
    if x - (d - 1) / n <= 0.0:
        return 0.0
    if d <= LOG_SPACE_MIN_D:
        value = 1.0
        for i in range(d):
            factor = (x - i / n) / (1.0 - i / n)
            if factor <= 0.0:
                return 0.0
            value *= factor
        return value
    return float(np.exp(np.sum(np.log(_factors(params, x)))))


def beta_prime_ext(params: SystemParams, x: float) -> float:
    """Derivative of beta_ext; 0 at and below the kink (d-1)/n."""
    n, d = params.n, params.d
    if x - (d - 1) / n <= 0.0:
        return 0.0
    # beta' = beta * sum_j 1/(x - j/n) whenever every factor is positive
    poles = x - np.arange(d, dtype=float) / n
    total = float(np.sum(1.0 / poles))
    if d <= LOG_SPACE_MIN_D:
        return beta_ext(params, x) * total
    log_beta = float(np.sum(np.log(_factors(params, x))))
    return math.exp(log_beta + math.log(total))


def beta(params: SystemParams, x: float) -> float:
    return beta_ext(params, _checked(x))


def beta_prime(params: SystemParams, x: float) -> float:
    return beta_prime_ext(params, _checked(x))


def gamma(params: SystemParams, x: float) -> float:
    x = _checked(x)
    if x == 0.0:
        return 0.0
    return math.exp(params.d * math.log(x))


def gamma_prime(params: SystemParams, x: float) -> float:
    x = _checked(x)
    if params.d == 1:
        return 1.0
    if x == 0.0:
        return 0.0
    return params.d * math.exp((params.d - 1) * math.log(x))


def evaluate(params: SystemParams, x: float) -> ChoiceEval:
    x = _checked(x)
    return ChoiceEval(x=x, beta=beta(params, x), beta_prime=beta_prime(params, x), gamma=gamma(params, x))


@lru_cache(maxsize=8)
def _lattice_table(n: int, d: int) -> tuple:
    j = np.arange(n + 1, dtype=float)
    log_table = np.full(n + 1, -np.inf)
    # walk down from beta(1) = 1 with log beta(j/n) - log beta((j-1)/n) = log(j / (j - d))
    steps = np.log(j[d + 1:] / (j[d + 1:] - d))
    log_table[d:n] = -np.cumsum(steps[::-1])[::-1]
    log_table[n] = 0.0
    table = np.exp(log_table)
    table[:d] = 0.0
    return tuple(table.tolist())


def lattice_table(params: SystemParams) -> tuple:
    """beta_n(j/n) for j = 0..n, the only values a simulated occupancy can reach."""
    return _lattice_table(params.n, params.d)


@dataclass(frozen=True)
class AsymptoticReport:
    epsilon: float
    sup_ratio_error: float
    sup_prime_ratio_error: float
    sup_log_diff: float
    sup_log_derivative_error: float
    log_bound: float
    small_region_end: float
    sup_beta_small: float
    sup_beta_prime_small: float
    gamma_at_small_end: float


def asymptotic_report(params: SystemParams, epsilon: float) -> AsymptoticReport:
    """Finite-n view of how close beta_n is to gamma_n, on a fixed 1001-point grid."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    grid = np.linspace(epsilon, 1.0, ASYMPTOTIC_GRID_POINTS)
    b = np.array([beta(params, x) for x in grid])
    bp = np.array([beta_prime(params, x) for x in grid])
    g = np.array([gamma(params, x) for x in grid])
    gp = np.array([gamma_prime(params, x) for x in grid])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(b / g - 1.0)
        prime_ratio = np.abs(bp / gp - 1.0)
        log_diff = np.abs(np.log(b) - np.log(g))
        log_deriv = np.abs((bp / b) / (gp / g) - 1.0)
    d = params.d
    small_end = max(1.0 - 2.0 * math.log(d) / d, 0.0)
    small = np.linspace(0.0, small_end, ASYMPTOTIC_GRID_POINTS)
    return AsymptoticReport(
        epsilon=epsilon,
        sup_ratio_error=float(np.nanmax(ratio)),
        sup_prime_ratio_error=float(np.nanmax(prime_ratio)),
        sup_log_diff=float(np.nanmax(log_diff)),
        sup_log_derivative_error=float(np.nanmax(log_deriv)),
        log_bound=LOG_BOUND_CONSTANT * d * d / (params.n * epsilon),
        small_region_end=small_end,
        sup_beta_small=max(beta(params, x) for x in small),
        sup_beta_prime_small=max(beta_prime(params, x) for x in small),
        gamma_at_small_end=gamma(params, small_end),
    )
