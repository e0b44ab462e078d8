"""Euler-Maruyama for the three fluctuation limits.

All systems are driven by one Brownian motion entering coordinate 1. Replicates
are simulated together as rows of an array; each replicate draws its Gaussian
increments from its own counter-based stream, so a path depends only on
(seed, replicate) and not on the system being simulated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from core.fixed_point import LimitRegime
from core.paths import SampledPath, uniform_grid
from core.skorohod import ReflectionState, reflect_incremental
from utils.config import DEFAULT_DT, EXP_ARGUMENT_CAP, EXP_DRIFT_CLIP, NOISE_CHUNK
from utils.rng import make_generator, open_uniforms

REGIMES = ("sub", "critical", "super")


@dataclass(frozen=True)
class LimitSystemSpec:
    regime: str
    r: int
    z: tuple = ()
    k: int = 1
    alpha: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.r < 2:
            raise ValueError(f"r must be at least 2, got {self.r}")
        if len(self.z) > self.r:
            raise ValueError(f"{len(self.z)} initial values for r={self.r} coordinates")
        if math.isnan(self.alpha):
            raise ValueError("alpha must be a number or inf")
        if self.regime == "sub":
            if self.k < 1 or self.r <= self.k:
                raise ValueError(f"the subcritical system needs 1 <= k < r, got k={self.k}, r={self.r}")
            if self.alpha < 0 or math.isinf(self.alpha):
                raise ValueError(f"subcritical alpha must be a finite nonnegative real, got {self.alpha}")
        if self.regime == "critical" and not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.regime == "super":
            if self.alpha < 0:
                raise ValueError(f"supercritical alpha must be nonnegative, got {self.alpha}")
            if self.initial()[0] > self.alpha:
                raise ValueError(f"z_1 = {self.initial()[0]} lies above the barrier {self.alpha}")

    def initial(self) -> np.ndarray:
        z = np.zeros(self.r)
        z[: len(self.z)] = self.z
        return z

    @property
    def dimension(self) -> int:
        """Simulated coordinates: r - k + 1 for the Y system, r otherwise."""
        return self.r - self.k + 1 if self.regime == "sub" else self.r

    def start(self) -> np.ndarray:
        z = self.initial()
        if self.regime == "sub":
            return np.concatenate(([z[: self.k].sum()], z[self.k:]))
        return z

    @classmethod
    def from_regime(cls, regime: LimitRegime, r: int, z=()) -> "LimitSystemSpec":
        if regime.kind == "sub":
            return cls("sub", r=r, z=tuple(z), k=regime.k, alpha=regime.alpha)
        if regime.kind == "critical":
            return cls("critical", r=r, z=tuple(z), alpha=regime.alpha, c=regime.c)
        if regime.kind == "super":
            return cls("super", r=r, z=tuple(z), alpha=regime.alpha)
        raise ValueError("an ambiguous regime has no limit system")


@dataclass(frozen=True)
class SdePath:
    """values[replicate, coord, time]; eta[replicate, time] for the reflected system."""

    spec: LimitSystemSpec
    times: np.ndarray
    values: np.ndarray
    eta: np.ndarray | None
    clip_events: int
    steps: int

    def path(self, replicate: int) -> SampledPath:
        values = self.values[replicate]
        if self.eta is None:
            return SampledPath(self.times, values)
        rows = np.vstack((self.eta[replicate][None, :], values))
        return SampledPath(self.times, rows, tuple(range(values.shape[0] + 1)))

    def sample(self, coord: int, t: float) -> np.ndarray:
        """Values of a 1-based coordinate across replicates at time t."""
        idx = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.values[:, coord - 1, idx]

    @property
    def clip_rate(self) -> float:
        return self.clip_events / (self.steps * self.values.shape[0]) if self.steps else 0.0


class NoiseStream:
    """Standard normal increments by inversion, one counter-based stream per replicate."""

    def __init__(self, seed: int, replicates: int, enabled: bool = True, chunk: int = NOISE_CHUNK):
        self.replicates = replicates
        self.enabled = enabled
        self.chunk = chunk
        self.generators = [make_generator(seed, rep, "sde") for rep in range(replicates)] if enabled else []
        self._block = None
        self._pos = chunk

    def next(self) -> np.ndarray:
        if not self.enabled:
            return np.zeros(self.replicates)
        if self._pos == self.chunk:
            self._block = np.stack([ndtri(open_uniforms(g, self.chunk)) for g in self.generators])
            self._pos = 0
        column = self._block[:, self._pos]
        self._pos += 1
        return column


def _record_steps(grid, dt: float, steps: int) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    idx = np.rint(grid / dt).astype(np.int64)
    if np.any(np.abs(idx * dt - grid) > 1e-9) or idx[0] != 0 or idx[-1] > steps or np.any(np.diff(idx) <= 0):
        raise ValueError("output grid must be a strictly increasing set of step multiples starting at 0")
    return idx


def _linear_drift(x: np.ndarray) -> np.ndarray:
    below = np.zeros_like(x)
    below[:, :-1] = x[:, 1:]
    return -(x - below)


class _System:
    """One limit system stepped against externally supplied noise."""

    def __init__(self, spec: LimitSystemSpec, replicates: int):
        self.spec = spec
        self.x = np.tile(spec.start(), (replicates, 1))
        self.clip_events = 0
        self.reflection = None
        self.free = None
        self.eta = None
        if spec.regime == "super":
            self.reflection = ReflectionState(spec.alpha, (replicates,))
            self.free = self.x[:, 0].copy()
            self.eta = np.zeros(replicates)
        if spec.regime == "critical" and not math.isinf(spec.alpha):
            self.kappa = 1.0 / (spec.c * math.exp(spec.c * spec.alpha))
        else:
            self.kappa = 0.0

    def drift(self, x: np.ndarray) -> np.ndarray:
        spec = self.spec
        if spec.regime != "sub":
            return _linear_drift(x)
        drift = _linear_drift(x)
        rate = spec.alpha + (1.0 if spec.k == 1 else 0.0)
        drift[:, 0] = -rate * x[:, 0] + x[:, 1]
        if spec.alpha != 0.0:
            drift[:, 1] = spec.alpha * x[:, 0] - x[:, 1] + (x[:, 2] if x.shape[1] > 2 else 0.0)
        return drift

    def step(self, dt: float, dw: np.ndarray):
        x = self.x
        drift = self.drift(x)
        new = x + drift * dt
        if self.kappa != 0.0:
            arg = np.minimum(self.spec.c * x[:, 0], EXP_ARGUMENT_CAP)
            push = self.kappa * (np.exp(arg) - 1.0) * dt
            clipped = np.abs(push) > EXP_DRIFT_CLIP
            self.clip_events += int(np.count_nonzero(clipped))
            push = np.clip(push, -EXP_DRIFT_CLIP, EXP_DRIFT_CLIP)
            new[:, 0] -= push
            new[:, 1] += push
        if self.reflection is None:
            new[:, 0] += dw
        else:
            # while nothing has been pushed the free path equals Z_1 bit for bit
            self.free = (self.free + drift[:, 0] * dt) + dw
            constrained, pushing, _ = reflect_incremental(self.reflection, self.free)
            increment = pushing - self.eta
            new[:, 0] = constrained
            new[:, 1] += increment
            self.eta = pushing
        self.x = new


def _run(specs, t_end: float, dt: float, seed: int, replicates: int, grid, noise: bool):
    if dt <= 0 or t_end <= 0:
        raise ValueError(f"t_end and dt must be positive, got {t_end}, {dt}")
    if replicates < 1:
        raise ValueError(f"replicates must be positive, got {replicates}")
    steps = int(round(t_end / dt))
    grid = uniform_grid(steps * dt, dt) if grid is None else np.asarray(grid, dtype=float)
    record = _record_steps(grid, dt, steps)
    systems = [_System(spec, replicates) for spec in specs]
    stream = NoiseStream(seed, replicates, enabled=noise)
    scale = math.sqrt(2.0 * dt)
    values = [np.zeros((replicates, s.spec.dimension, record.size)) for s in systems]
    etas = [np.zeros((replicates, record.size)) if s.eta is not None else None for s in systems]
    col = 0
    for step in range(record[-1] + 1):
        if step > 0:
            dw = stream.next() * scale
            for s in systems:
                s.step(dt, dw)
        if step == record[col]:
            for s, out, eta in zip(systems, values, etas):
                out[:, :, col] = s.x
                if eta is not None:
                    eta[:, col] = s.eta
            col += 1
    results = []
    for s, out, eta in zip(systems, values, etas):
        if s.clip_events:
            logging.warning(f"exponential drift clipped on {s.clip_events} replicate-steps")
        results.append(SdePath(s.spec, grid, out, eta, s.clip_events, int(record[-1])))
    return results


def simulate_subcritical(spec: LimitSystemSpec, t_end: float, dt: float = DEFAULT_DT, seed: int = 0,
                         replicates: int = 1, grid=None, noise: bool = True) -> SdePath:
    """Y system: noise in Y_1, coupling through alpha between Y_1 and Y_2."""
    if spec.regime != "sub":
        raise ValueError(f"expected a subcritical spec, got {spec.regime!r}")
    return _run([spec], t_end, dt, seed, replicates, grid, noise)[0]


def simulate_critical(spec: LimitSystemSpec, t_end: float, dt: float = DEFAULT_DT, seed: int = 0,
                      replicates: int = 1, grid=None, noise: bool = True) -> SdePath:
    if spec.regime != "critical":
        raise ValueError(f"expected a critical spec, got {spec.regime!r}")
    return _run([spec], t_end, dt, seed, replicates, grid, noise)[0]


def simulate_supercritical(spec: LimitSystemSpec, t_end: float, dt: float = DEFAULT_DT, seed: int = 0,
                           replicates: int = 1, grid=None, noise: bool = True) -> SdePath:
    """Z_1 reflected below alpha; the pushing process is added to Z_2 in the same step."""
    if spec.regime != "super":
        raise ValueError(f"expected a supercritical spec, got {spec.regime!r}")
    return _run([spec], t_end, dt, seed, replicates, grid, noise)[0]


def simulate_limit(spec: LimitSystemSpec, t_end: float, dt: float = DEFAULT_DT, seed: int = 0,
                   replicates: int = 1, grid=None, noise: bool = True) -> SdePath:
    return _run([spec], t_end, dt, seed, replicates, grid, noise)[0]


def shared_noise_pair(spec_a: LimitSystemSpec, spec_b: LimitSystemSpec, t_end: float, dt: float = DEFAULT_DT,
                      seed: int = 0, replicates: int = 1, grid=None) -> tuple[SdePath, SdePath]:
    """Both systems stepped with the same Gaussian increments."""
    first, second = _run([spec_a, spec_b], t_end, dt, seed, replicates, grid, True)
    return first, second


def reflection_at_zero(path: SdePath) -> np.ndarray:
    """Y = Z - alpha e_1: the reflected system rewritten with barrier 0 and drift -alpha in Y_1."""
    if path.spec.regime != "super" or math.isinf(path.spec.alpha):
        raise ValueError("the shift needs a supercritical path with a finite barrier")
    shifted = path.values.copy()
    shifted[:, 0, :] -= path.spec.alpha
    return shifted


def to_z_coordinates(y_path: SampledPath, k: int) -> SampledPath:
    """Place Y back at coordinates k, k+1, ... of Z; the first k-1 coordinates of the limit vanish."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    rows = y_path.values.shape[0]
    values = np.zeros((rows + k - 1, y_path.times.size))
    values[k - 1:] = y_path.values
    return SampledPath(y_path.times, values)


@dataclass(frozen=True)
class SelfConvergence:
    coarse_mean: float
    fine_mean: float
    coarse_se: float
    fine_se: float

    @property
    def within(self) -> float:
        """Difference in units of the combined Monte-Carlo standard error."""
        return abs(self.coarse_mean - self.fine_mean) / math.hypot(self.coarse_se, self.fine_se)


def self_convergence(spec: LimitSystemSpec, t_end: float, dt: float, seed: int, replicates: int,
                     coord: int = 1) -> SelfConvergence:
    """Mean of a coordinate at t_end with steps dt and dt/2, on independent noise."""
    grid = np.array([0.0, t_end])
    coarse = simulate_limit(spec, t_end, dt, seed, replicates, grid).sample(coord, t_end)
    fine = simulate_limit(spec, t_end, dt / 2.0, seed + 1, replicates, grid).sample(coord, t_end)
    root = math.sqrt(replicates)
    return SelfConvergence(float(coarse.mean()), float(fine.mean()),
                           float(coarse.std(ddof=1) / root), float(fine.std(ddof=1) / root))
