"""Near fixed point mu_n, the drift maps a_n and b, the scaled drift t_{n,i},
the fluid fixed points f_k^gamma and the finite-n regime classifier."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from core.choice import SystemParams, beta, beta_ext, beta_prime
from core.rules import ParameterRule
from utils import config
from utils.config import DEFAULT_FLOOR, MAX_MU_TERMS


@dataclass(frozen=True)
class NearFixedPoint:
    params: SystemParams
    mu: tuple
    floor: float

    def __len__(self):
        return len(self.mu)

    def at(self, i: int) -> float:
        """mu_{n,i} (1-based), 0 past the truncation."""
        if i < 1:
            raise ValueError(f"coordinates are 1-based, got {i}")
        return self.mu[i - 1] if i <= len(self.mu) else 0.0

    def vector(self, length: int) -> np.ndarray:
        out = np.zeros(length)
        m = min(length, len(self.mu))
        out[:m] = self.mu[:m]
        return out


def mu_sequence(params: SystemParams, floor: float = DEFAULT_FLOOR) -> NearFixedPoint:
    if not 0.0 < params.lam < 1.0:
        raise ValueError(f"the near fixed point needs 0 < lambda < 1, got {params.lam}")
    if not 0.0 < floor <= 1e-6:
        raise ValueError(f"floor must lie in (0, 1e-6], got {floor}")
    mu = [params.lam]
    while len(mu) < MAX_MU_TERMS:
        nxt = params.lam * beta(params, mu[-1])
        if nxt < floor:
            break
        mu.append(nxt)
    else:
        raise ValueError(f"mu did not fall below {floor} within {MAX_MU_TERMS} terms")
    return NearFixedPoint(params=params, mu=tuple(mu), floor=floor)


def _occupancy(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("an occupancy must be a one-dimensional vector")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("occupancy values must lie in [0, 1]")
    if np.any(np.diff(x) > 0.0):
        raise ValueError("occupancy must be nonincreasing")
    return x


def drift_a(params: SystemParams, x) -> np.ndarray:
    """a(x)_i = lam (beta(x_{i-1}) - beta(x_i)), x_0 = 1, over the support plus one."""
    x = _occupancy(x)
    padded = np.concatenate(([1.0], x, [0.0]))
    b = np.array([beta_ext(params, v) for v in padded])
    return params.lam * (b[:-1] - b[1:])


def drift_b(x) -> np.ndarray:
    x = _occupancy(x)
    padded = np.concatenate((x, [0.0, 0.0]))
    return padded[:-1] - padded[1:]


def drift_residual(params: SystemParams, x) -> tuple[np.ndarray, float]:
    residual = drift_a(params, x) - drift_b(x)
    return residual, float(np.sum(np.abs(residual)))


def t_drift(params: SystemParams, mu: NearFixedPoint, i: int, z: float) -> float:
    """Scaled drift t_{n,i}(z) = lam sqrt(n) (beta(mu_i + z/sqrt(n)) - beta(mu_i))."""
    if i == 0:
        return 0.0
    root = math.sqrt(params.n)
    m = mu.at(i)
    return params.lam * root * (beta_ext(params, m + z / root) - beta_ext(params, m))


@dataclass(frozen=True)
class SurrogateReport:
    alpha_n: float
    max_relative_error: float
    max_relative_error_unscaled: float
    worst_z: float


def exponential_surrogate_check(params: SystemParams, z_grid) -> SurrogateReport:
    """Compare t_{n,1} with (sqrt(n)/d)(exp((d/sqrt(n))(z - alpha_n)) - exp(-(d/sqrt(n)) alpha_n)).

    The surrogate carries no lambda factor, so the error is also reported for
    t_{n,1} / lambda_n.
    """
    mu = mu_sequence(params)
    root = math.sqrt(params.n)
    c = params.d / root
    alpha = params.alpha_n
    worst, worst_unscaled, worst_z = 0.0, 0.0, 0.0
    for z in np.asarray(z_grid, dtype=float):
        if z == 0.0:
            continue
        t = t_drift(params, mu, 1, z)
        surrogate = (math.exp(c * (z - alpha)) - math.exp(-c * alpha)) / c
        err = abs(surrogate / t - 1.0)
        err_unscaled = abs(surrogate / (t / params.lam) - 1.0)
        if err > worst:
            worst, worst_z = err, float(z)
        worst_unscaled = max(worst_unscaled, err_unscaled)
    return SurrogateReport(alpha, worst, worst_unscaled, worst_z)


@dataclass(frozen=True)
class FluidFixedPoint:
    """f_k^gamma = (1, ..., 1, gamma, 0, ...) with k ones."""

    k: int
    gamma_coeff: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")
        if not 0.0 <= self.gamma_coeff < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma_coeff}")

    def vector(self, length: int) -> np.ndarray:
        if length < self.k + 1:
            raise ValueError(f"length {length} cannot hold f_{self.k}^gamma")
        out = np.zeros(length)
        out[: self.k] = 1.0
        out[self.k] = self.gamma_coeff
        return out

    @property
    def m(self) -> int:
        return self.k


@dataclass(frozen=True)
class LimitRegime:
    """kind is 'sub', 'critical', 'super' or 'ambiguous'; alpha may be math.inf."""

    kind: str
    k: int | None = None
    alpha: float | None = None
    c: float | None = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    def describe(self) -> str:
        if self.kind == "sub":
            return f"SubRootN(k={self.k}, alpha={self.alpha:.6g})"
        if self.kind == "critical":
            return f"CriticalRootN(c={self.c:.6g}, alpha={self.alpha:.6g})"
        if self.kind == "super":
            return f"SuperRootN(alpha={self.alpha:.6g})"
        return "ambiguous"


@dataclass(frozen=True)
class RegimeThresholds:
    critical_lower: float = config.CRITICAL_LOWER
    critical_upper: float = config.CRITICAL_UPPER
    dead_band: float = config.DEAD_BAND
    k_max: int = config.K_MAX
    beta_prime_cap: float = config.SUB_BETA_PRIME_CAP
    mu_min: float = config.SUB_MU_MIN
    alpha_infinity: float = config.ALPHA_INFINITY_CUTOFF


def _near(value: float, cutoff: float, band: float) -> bool:
    return cutoff / (1.0 + band) < value < cutoff * (1.0 + band)


def classify_regime(rule: ParameterRule, n: int, thresholds: RegimeThresholds | None = None) -> LimitRegime:
    """Finite-n proxy for the three regimes, with every measured quantity attached."""
    th = thresholds or RegimeThresholds()
    params = rule.params_at(n)
    mu = mu_sequence(params)
    root = math.sqrt(n)
    mus = [mu.at(k) for k in range(1, th.k_max + 1)]
    primes = [beta_prime(params, m) for m in mus]
    diagnostics = {
        "n": n,
        "d": params.d,
        "lambda": params.lam,
        "d_over_sqrt_n": params.scale,
        "halfin_whitt": root * (1.0 - params.lam),
        "alpha_n": params.alpha_n,
        "mu": mus,
        "beta_prime_mu": primes,
    }
    scale = params.scale
    band = th.dead_band
    if _near(scale, th.critical_lower, band) or _near(scale, th.critical_upper, band):
        return LimitRegime("ambiguous", diagnostics=diagnostics)
    alpha_n = params.alpha_n
    if scale >= th.critical_upper:
        if alpha_n < 0:
            return LimitRegime("ambiguous", diagnostics=diagnostics)
        alpha = math.inf if alpha_n >= th.alpha_infinity else alpha_n
        return LimitRegime("super", alpha=alpha, diagnostics=diagnostics)
    if scale >= th.critical_lower:
        alpha = math.inf if alpha_n >= th.alpha_infinity else alpha_n
        return LimitRegime("critical", c=scale, alpha=alpha, diagnostics=diagnostics)
    # k is the first coordinate whose derivative stays bounded; earlier ones blow up
    for k, (m, p) in enumerate(zip(mus, primes), start=1):
        if p <= th.beta_prime_cap:
            if m < th.mu_min or _near(p, th.beta_prime_cap, band):
                return LimitRegime("ambiguous", diagnostics=diagnostics)
            return LimitRegime("sub", k=k, alpha=p, diagnostics=diagnostics)
    return LimitRegime("ambiguous", diagnostics=diagnostics)


@dataclass(frozen=True)
class MuApproxReport:
    k: int
    log_error: float
    bound_shape: float
    derivative_ratios: tuple
    ratios_to_first: tuple


def mu_log_approx_check(params: SystemParams, k: int) -> MuApproxReport:
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    mu = mu_sequence(params)
    if mu.at(k) < 0.5:
        raise ValueError(f"mu_{k} = {mu.at(k):.6g} < 0.5, the approximation does not apply")
    n, d, lam = params.n, params.d, params.lam
    # mu_{k+1} is recomputed so truncation below the floor does not hide it
    chain = [mu.at(i) for i in range(1, k + 1)]
    chain.append(lam * beta(params, chain[-1]))
    log_error = abs(math.log(chain[k]) - math.log(lam) * sum(d ** i for i in range(k + 1)))
    bound_shape = sum(d ** (i + 1) for i in range(1, k + 1)) / n
    derivative_ratios = []
    for i in range(1, k + 1):
        m, nxt = chain[i - 1], chain[i]
        derivative_ratios.append(lam * m * beta_prime(params, m) / (d * nxt) if nxt > 0 else math.inf)
    first = beta_prime(params, chain[0])
    ratios_to_first = tuple(beta_prime(params, chain[i - 1]) / first for i in range(1, k))
    return MuApproxReport(k, log_error, bound_shape, tuple(derivative_ratios), ratios_to_first)


@dataclass(frozen=True)
class FluidPointDiagnostic:
    k: int
    a: float
    mu_next: float
    target: float


def fluid_fixed_point_diagnostic(params: SystemParams, k: int) -> FluidPointDiagnostic:
    """With 1 - lambda = a/d^k the near fixed point approaches f_k^gamma, gamma = e^{-a}."""
    mu = mu_sequence(params)
    a = (1.0 - params.lam) * params.d ** k
    chain = params.lam
    for _ in range(k):
        chain = params.lam * beta(params, chain)
    return FluidPointDiagnostic(k=k, a=a, mu_next=chain if chain >= mu.floor else 0.0, target=math.exp(-a))
