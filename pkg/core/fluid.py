"""Fluid limit of the occupancy process, truncated to I coordinates.

Two forms of the same constrained ODE are integrated with forward Euler: the
reflected recursion g_i = Gamma_1(r_i - int (g_i - g_{i+1}) + v_{i-1}) with
v_0 = lam t, and the explicit form g_i' = -(g_i - g_{i+1}) + p_{i-1}(g).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from core.fixed_point import FluidFixedPoint
from core.paths import SampledPath
from core.skorohod import ReflectionState, reflect_incremental
from utils.config import BARRIER_TOLERANCE_FACTOR, DEFAULT_DT


def fluid_init(text: str) -> np.ndarray:
    """zero | fixed:K[:G] | file:PATH | comma-separated values."""
    text = text.strip()
    if text in ("zero", "empty"):
        return np.zeros(0)
    if text.startswith("fixed:"):
        parts = text.split(":")[1:]
        g = float(parts[1]) if len(parts) > 1 else 0.0
        k = int(parts[0])
        return FluidFixedPoint(k, g).vector(k + 1)
    if text.startswith("file:"):
        path = text[len("file:"):]
        try:
            with open(path) as handle:
                return np.array([float(v) for v in handle.read().replace(",", " ").split()])
        except OSError as e:
            logging.error(f"Error reading fluid initial condition from {path}: {e}")
            raise
    return np.array([float(v) for v in text.split(",")])


def _prepare(init, coords: int | None) -> np.ndarray:
    init = np.asarray(init, dtype=float)
    if init.ndim != 1:
        raise ValueError("initial condition must be a vector")
    if np.any(init < 0.0) or np.any(init > 1.0):
        raise ValueError("initial condition must lie in [0, 1]")
    if np.any(np.diff(init) > 0.0):
        raise ValueError("initial condition must be nonincreasing")
    positive = np.flatnonzero(init > 0.0)
    default = 2 + (int(positive[-1]) + 1 if positive.size else 0)
    coords = coords or default
    if init.size > coords and np.any(init[coords:] > 0.0):
        raise ValueError(f"initial condition has mass beyond the {coords} tracked coordinates")
    out = np.zeros(coords)
    m = min(coords, init.size)
    out[:m] = init[:m]
    return out


def _steps(t_end: float, dt: float) -> int:
    if dt <= 0 or t_end <= 0:
        raise ValueError(f"t_end and dt must be positive, got {t_end}, {dt}")
    return int(round(t_end / dt))


@dataclass(frozen=True)
class FluidSolution:
    """g over coordinates 1..I and v over 0..I, on the step grid."""

    lam: float
    dt: float
    g: SampledPath
    v: SampledPath
    complementarity: float


def integrate_reflected(lam: float, init, t_end: float, dt: float = DEFAULT_DT, coords: int | None = None) -> FluidSolution:
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    g = _prepare(init, coords)
    size = g.size
    steps = _steps(t_end, dt)
    free = g.copy()
    states = [ReflectionState(1.0) for _ in range(size)]
    v = np.zeros(size + 1)
    g_out = np.zeros((size, steps + 1))
    v_out = np.zeros((size + 1, steps + 1))
    g_out[:, 0] = g
    slack = 0.0
    for step in range(1, steps + 1):
        current = g.copy()
        dv_prev = lam * dt
        v[0] += dv_prev
        for i in range(size):
            below = current[i + 1] if i + 1 < size else 0.0
            free[i] += -(current[i] - below) * dt + dv_prev
            constrained, pushing, _ = reflect_incremental(states[i], free[i])
            dv_prev = float(pushing) - v[i + 1]
            slack += (1.0 - float(constrained)) * dv_prev
            v[i + 1] = float(pushing)
            g[i] = float(constrained)
        g_out[:, step] = g
        v_out[:, step] = v
    times = np.arange(steps + 1) * dt
    return FluidSolution(
        lam=lam, dt=dt,
        g=SampledPath(times, g_out),
        v=SampledPath(times, v_out, tuple(range(size + 1))),
        complementarity=slack,
    )


def barrier_level(g: np.ndarray, tol: float = 0.0) -> int:
    """m(g) = inf{i : g_{i+1} < 1}, coordinates within tol of 1 count as full."""
    m = 0
    while m < g.size and g[m] >= 1.0 - tol:
        m += 1
    return m


def p_terms(lam: float, g: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """p_j(g) for j = 0..I-1, cases taken in the listed order."""
    size = g.size
    m = barrier_level(g, tol)

    def at(i: int) -> float:
        # 1-based coordinate, zero past the truncation
        return g[i - 1] if 1 <= i <= size else 0.0

    p = np.zeros(size)
    for j in range(size):
        if j == m - 1:
            p[j] = lam - max(lam - 1.0 + at(j + 2), 0.0)
        elif j == m and m > 0:
            p[j] = max(lam - 1.0 + at(j + 1), 0.0)
        elif j == m == 0:
            p[j] = lam
    return p


def explicit_rhs(lam: float, g: np.ndarray, tol: float = 0.0) -> np.ndarray:
    below = np.concatenate((g[1:], [0.0]))
    return -(g - below) + p_terms(lam, g, tol)


def pushing_rates(lam: float, g: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """dv_i/dt for i = 0..I by the case formula; p_j = dv_j/dt - dv_{j+1}/dt."""
    size = g.size
    m = barrier_level(g, tol)
    rates = np.zeros(size + 1)
    rates[0] = lam
    for i in range(1, size + 1):
        if i < m:
            rates[i] = rates[i - 1]
        elif i == m:
            below = g[i] if i < size else 0.0
            rates[i] = max(rates[i - 1] - 1.0 + below, 0.0)
    return rates


def integrate_explicit(lam: float, init, t_end: float, dt: float = DEFAULT_DT, coords: int | None = None,
                       barrier_tol: float | None = None) -> SampledPath:
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    g = _prepare(init, coords)
    steps = _steps(t_end, dt)
    tol = BARRIER_TOLERANCE_FACTOR * dt if barrier_tol is None else barrier_tol
    out = np.zeros((g.size, steps + 1))
    out[:, 0] = g
    for step in range(1, steps + 1):
        g = g + dt * explicit_rhs(lam, g, tol)
        out[:, step] = g
    return SampledPath(np.arange(steps + 1) * dt, out)


@dataclass(frozen=True)
class CrossCheckReport:
    dt: float
    sup_l1_difference: float


def cross_check(lam: float, init, t_end: float, dt: float = DEFAULT_DT, coords: int | None = None) -> CrossCheckReport:
    reflected = integrate_reflected(lam, init, t_end, dt, coords)
    explicit = integrate_explicit(lam, init, t_end, dt, coords)
    diff = np.sum(np.abs(reflected.g.values - explicit.values), axis=0)
    return CrossCheckReport(dt=dt, sup_l1_difference=float(np.max(diff)))


def convergence_ratio(lam: float, init, t_end: float, dt: float = DEFAULT_DT, coords: int | None = None) -> float:
    """sup-difference at dt/2 over sup-difference at dt; near 1/2 for a first-order pair."""
    coarse = cross_check(lam, init, t_end, dt, coords).sup_l1_difference
    fine = cross_check(lam, init, t_end, dt / 2.0, coords).sup_l1_difference
    if coarse == 0.0:
        raise ValueError("the two forms coincide at this step size; the ratio is undefined")
    return fine / coarse


def sample_on_grid(path: SampledPath, grid) -> np.ndarray:
    """Values of a step-grid solution at the points of a coarser grid."""
    return np.stack([path.at(t) for t in np.asarray(grid, dtype=float)], axis=1)
