"""Exact simulation of the JSQ(d) occupancy chain.

State is the integer vector c_i = n G_{n,i}. Coordinate i gains one at rate
n lam (beta(G_{i-1}) - beta(G_i)) and loses one at rate n (G_i - G_{i+1}), so the
whole system needs only the active levels per event. A per-queue backend and a
generator-matrix oracle cross-check it.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from core.choice import SystemParams, lattice_table
from core.fixed_point import FluidFixedPoint, NearFixedPoint, mu_sequence
from core.paths import SampledPath
from utils.config import DEFAULT_FLOOR
from utils.rng import UniformStream, make_generator

MAX_GENERATOR_STATES = 20_000
MAX_GENERATOR_N = 4


@dataclass(frozen=True)
class InitSpec:
    """Initial occupancy: 'empty', 'fixed' (f_k^gamma), 'mu' (rounded mu_n) or 'explicit'."""

    kind: str = "empty"
    k: int = 0
    gamma_coeff: float = 0.0
    vector: tuple = ()

    def __post_init__(self):
        if self.kind not in ("empty", "fixed", "mu", "explicit"):
            raise ValueError(f"unknown init kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "InitSpec":
        """empty | zero | mu | fixed:K[:G] | file:PATH | comma-separated values."""
        text = text.strip()
        if text in ("empty", "zero"):
            return cls("empty")
        if text == "mu":
            return cls("mu")
        if text.startswith("fixed:"):
            parts = text.split(":")[1:]
            if not 1 <= len(parts) <= 2:
                raise ValueError(f"expected fixed:K[:G], got {text!r}")
            g = float(parts[1]) if len(parts) == 2 else 0.0
            return cls("fixed", k=int(parts[0]), gamma_coeff=g)
        if text.startswith("file:"):
            path = text[len("file:"):]
            try:
                with open(path) as handle:
                    raw = handle.read().replace(",", " ").split()
            except OSError as e:
                logging.error(f"Error reading initial occupancy from {path}: {e}")
                raise
            return cls("explicit", vector=tuple(float(v) for v in raw))
        try:
            return cls("explicit", vector=tuple(float(v) for v in text.split(",")))
        except ValueError as e:
            raise ValueError(f"cannot read init spec {text!r}") from e

    def target(self, params: SystemParams | None = None, floor: float = DEFAULT_FLOOR) -> np.ndarray:
        """Unrounded occupancy vector this spec describes."""
        if self.kind == "empty":
            return np.zeros(0)
        if self.kind == "fixed":
            f = FluidFixedPoint(self.k, self.gamma_coeff)
            return f.vector(self.k + 1)
        if self.kind == "mu":
            if params is None:
                raise ValueError("the mu initial condition needs system parameters")
            return np.array(mu_sequence(params, floor).mu)
        return np.array(self.vector, dtype=float)

    def counts(self, params: SystemParams, floor: float = DEFAULT_FLOOR) -> np.ndarray:
        return lattice_counts(self.target(params, floor), params.n)


def lattice_counts(target, n: int) -> np.ndarray:
    """Round an occupancy to the 1/n lattice: nearest multiple, then a backward cummax pass."""
    target = np.asarray(target, dtype=float)
    if np.any(target < -1e-12) or np.any(target > 1.0 + 1e-12):
        raise ValueError("occupancy values must lie in [0, 1]")
    counts = np.clip(np.rint(target * n), 0, n).astype(np.int64)
    if counts.size:
        counts = np.maximum.accumulate(counts[::-1])[::-1]
    while counts.size and counts[-1] == 0:
        counts = counts[:-1]
    return counts


class OccupancyChain:
    """Next-event simulator on the occupancy counts with lazy rate integration."""

    def __init__(self, params: SystemParams, counts, stream: UniformStream):
        counts = [int(c) for c in counts]
        if any(c < 0 or c > params.n for c in counts) or any(a < b for a, b in zip(counts, counts[1:])):
            raise ValueError("initial counts must be nonincreasing and within [0, n]")
        self.params = params
        self.n = params.n
        self.arrival_total = params.n * params.lam
        self.table = lattice_table(params)
        self.stream = stream
        self.time = 0.0
        # counts[0] = n stands for G_0 = 1; the list always ends with a zero level
        self.counts = [params.n] + counts + [0]
        size = len(self.counts)
        self.arrivals = [0] * size
        self.departures = [0] * size
        self.arrival_integral = [0.0] * size
        self.departure_integral = [0.0] * size
        self.arrival_rate = [0.0] * size
        self.departure_rate = [0.0] * size
        self.updated = [0.0] * size
        self.total_arrivals = 0
        self.total_departures = 0
        self.max_level = len(counts)
        self._next_time = None
        for i in range(1, size):
            self._refresh(i)

    def _grow(self, t: float):
        for seq in (self.counts, self.arrivals, self.departures):
            seq.append(0)
        for seq in (self.arrival_integral, self.departure_integral, self.arrival_rate, self.departure_rate):
            seq.append(0.0)
        self.updated.append(t)

    def _refresh(self, i: int):
        c = self.counts
        self.arrival_rate[i] = self.arrival_total * (self.table[c[i - 1]] - self.table[c[i]])
        self.departure_rate[i] = c[i] - (c[i + 1] if i + 1 < len(c) else 0)

    def _flush(self, i: int, t: float):
        elapsed = t - self.updated[i]
        if elapsed > 0.0:
            self.arrival_integral[i] += self.arrival_rate[i] * elapsed
            self.departure_integral[i] += self.departure_rate[i] * elapsed
        self.updated[i] = t

    def flush_all(self, t: float):
        for i in range(1, len(self.counts)):
            self._flush(i, t)

    def peek(self) -> float:
        """Time of the next event; inf when the chain is frozen."""
        if self._next_time is None:
            total = self.arrival_total + self.counts[1]
            if total <= 0.0:
                self._next_time = math.inf
            else:
                self._next_time = self.time - math.log(self.stream.next()) / total
        return self._next_time

    def fire(self) -> tuple[str, int]:
        """Apply the pending event; returns ('arrival' | 'departure', level)."""
        t = self.peek()
        if math.isinf(t):
            raise ValueError("no event pending: arrival rate is zero and the system is empty")
        c, table = self.counts, self.table
        total = self.arrival_total + c[1]
        if self.stream.next() * total < self.arrival_total:
            kind = "arrival"
            w = self.stream.next()
            i = 1
            while table[c[i]] >= w:
                i += 1
        else:
            kind = "departure"
            w = self.stream.next() * c[1]
            i = 1
            while c[1] - c[i + 1] <= w:
                i += 1
        for j in (i - 1, i, i + 1):
            if 1 <= j < len(c):
                self._flush(j, t)
        if kind == "arrival":
            c[i] += 1
            self.arrivals[i] += 1
            self.total_arrivals += 1
            if i == len(c) - 1:
                self._grow(t)
            self.max_level = max(self.max_level, i)
        else:
            c[i] -= 1
            self.departures[i] += 1
            self.total_departures += 1
        for j in (i - 1, i, i + 1):
            if 1 <= j < len(c):
                self._refresh(j)
        self.time = t
        self._next_time = None
        return kind, i

    def level(self, seq, i: int):
        return seq[i] if i < len(seq) else 0

    def jobs(self) -> int:
        return sum(self.counts[1:])


@dataclass(frozen=True)
class EventLog:
    """Per-coordinate arrival/departure counts and integrated rates on the output grid."""

    n: int
    lam: float
    times: np.ndarray
    initial_counts: np.ndarray
    counts: np.ndarray
    arrivals: np.ndarray
    departures: np.ndarray
    arrival_integral: np.ndarray
    departure_integral: np.ndarray
    jobs: np.ndarray
    initial_jobs: int
    total_arrivals: np.ndarray
    total_departures: np.ndarray
    tail: np.ndarray
    max_level: int

    def gad_residual(self) -> np.ndarray:
        """n G_i(t) - n G_i(0) - A_i(t) + D_i(t), in integers."""
        return self.counts - self.initial_counts[:, None] - self.arrivals + self.departures

    def conservation_residual(self) -> np.ndarray:
        return self.jobs - self.initial_jobs - self.total_arrivals + self.total_departures


@dataclass(frozen=True)
class MartingaleDiag:
    n: int
    lam: float
    times: np.ndarray
    martingale: np.ndarray
    quadratic_variation: np.ndarray


def _martingale(log: EventLog) -> MartingaleDiag:
    n = log.n
    plus = (log.arrivals - log.arrival_integral) / n
    minus = (log.departures - log.departure_integral) / n
    qv = (log.arrival_integral + log.departure_integral) / (n * n)
    return MartingaleDiag(n, log.lam, log.times, plus - minus, qv)


def _check_grid(grid, t_end: float) -> np.ndarray:
    if t_end <= 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] < 0 or grid[-1] > t_end + 1e-12:
        raise ValueError(f"output grid must lie in [0, {t_end}]")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("output grid must be strictly increasing")
    return grid


def simulate_path(params: SystemParams, init: InitSpec, t_end: float, grid, seed: int,
                  coords: int, replicate: int = 0):
    """One exact sample path; returns (SampledPath of G, EventLog, MartingaleDiag)."""
    grid = _check_grid(grid, t_end)
    if coords < 1:
        raise ValueError(f"coords must be positive, got {coords}")
    initial = init.counts(params)
    chain = OccupancyChain(params, initial, UniformStream(make_generator(seed, replicate, "ctmc")))
    width = len(grid)
    counts = np.zeros((coords, width), dtype=np.int64)
    arrivals = np.zeros((coords, width), dtype=np.int64)
    departures = np.zeros((coords, width), dtype=np.int64)
    arr_int = np.zeros((coords, width))
    dep_int = np.zeros((coords, width))
    jobs = np.zeros(width, dtype=np.int64)
    tot_a = np.zeros(width, dtype=np.int64)
    tot_d = np.zeros(width, dtype=np.int64)
    tail = np.zeros(width, dtype=np.int64)

    def record(col: int, t: float):
        chain.flush_all(t)
        for i in range(1, coords + 1):
            counts[i - 1, col] = chain.level(chain.counts, i)
            arrivals[i - 1, col] = chain.level(chain.arrivals, i)
            departures[i - 1, col] = chain.level(chain.departures, i)
            arr_int[i - 1, col] = chain.level(chain.arrival_integral, i)
            dep_int[i - 1, col] = chain.level(chain.departure_integral, i)
        jobs[col] = chain.jobs()
        tot_a[col] = chain.total_arrivals
        tot_d[col] = chain.total_departures
        tail[col] = sum(chain.counts[coords + 1:])

    col = 0
    while col < width:
        t_next = chain.peek()
        while col < width and grid[col] < t_next:
            record(col, grid[col])
            col += 1
        if col < width:
            chain.fire()
    if chain.max_level > coords:
        logging.warning(f"occupancy reached level {chain.max_level} above the {coords} tracked coordinates")
    initial_padded = np.zeros(coords, dtype=np.int64)
    m = min(coords, len(initial))
    initial_padded[:m] = initial[:m]
    log = EventLog(
        n=params.n, lam=params.lam, times=grid, initial_counts=initial_padded, counts=counts,
        arrivals=arrivals, departures=departures, arrival_integral=arr_int, departure_integral=dep_int,
        jobs=jobs, initial_jobs=int(np.sum(initial)), total_arrivals=tot_a, total_departures=tot_d,
        tail=tail, max_level=chain.max_level,
    )
    path = SampledPath(grid, counts / params.n)
    return path, log, _martingale(log)


def per_queue_simulate(params: SystemParams, init: InitSpec, t_end: float, grid, seed: int,
                       coords: int, replicate: int = 0) -> SampledPath:
    """Direct simulation of n queues: each arrival samples d distinct queues and joins a shortest."""
    grid = _check_grid(grid, t_end)
    rng = make_generator(seed, replicate, "perqueue")
    n, d = params.n, params.d
    initial = init.counts(params)
    # queue j holds #{i : c_i > j} jobs
    queues = np.array([int(np.sum(initial > j)) for j in range(n)], dtype=np.int64)
    values = np.zeros((coords, len(grid)))
    levels = np.arange(1, coords + 1)
    arrival_total = n * params.lam
    t, col = 0.0, 0
    while col < len(grid):
        busy = np.flatnonzero(queues > 0)
        total = arrival_total + busy.size
        t_next = t - math.log(1.0 - rng.random()) / total if total > 0 else math.inf
        while col < len(grid) and grid[col] < t_next:
            values[:, col] = np.sum(queues[None, :] >= levels[:, None], axis=1) / n
            col += 1
        if col == len(grid):
            break
        t = t_next
        if rng.random() * total < arrival_total:
            sampled = rng.choice(n, size=d, replace=False)
            lengths = queues[sampled]
            shortest = sampled[lengths == lengths.min()]
            queues[shortest[rng.integers(shortest.size)]] += 1
        else:
            queues[busy[rng.integers(busy.size)]] -= 1
    return SampledPath(grid, values)


def scaled_path(g_path: SampledPath, mu: NearFixedPoint) -> SampledPath:
    """Z_n = sqrt(n) (G_n - mu_n)."""
    coords = g_path.values.shape[0]
    if len(mu) > coords:
        raise ValueError(f"mu has {len(mu)} coordinates above the floor, path tracks only {coords}")
    root = math.sqrt(mu.params.n)
    centre = mu.vector(coords)
    return SampledPath(g_path.times, root * (g_path.values - centre[:, None]), g_path.coords)


def shift_to_y(z_path: SampledPath, k: int) -> SampledPath:
    """Y_n = (Z_1 + ... + Z_k, Z_{k+1}, ...)."""
    coords = z_path.values.shape[0]
    if not 1 <= k <= coords:
        raise ValueError(f"k must lie in [1, {coords}], got {k}")
    head = np.sum(z_path.values[:k], axis=0, keepdims=True)
    values = np.vstack((head, z_path.values[k:]))
    return SampledPath(z_path.times, values)


def relative_to_f1(g_path: SampledPath, n: int) -> SampledPath:
    """sqrt(n) (G_n - f_1), whose growth shows the missing tightness when d >> sqrt(n)."""
    centre = np.zeros(g_path.values.shape[0])
    centre[0] = 1.0
    return SampledPath(g_path.times, math.sqrt(n) * (g_path.values - centre[:, None]), g_path.coords)


@dataclass(frozen=True)
class MartingaleReport:
    horizon: float
    mean_sup_norm: float
    standard_error: float
    bound: float
    mean_terminal_qv: float
    qv_bound: float
    violated: bool


def martingale_check(diags, T: float) -> MartingaleReport:
    """Replicate mean of sup_{t <= T} ||M_n(t)||_2^2 against 4 T (1 + lam) / n."""
    diags = list(diags)
    if not diags:
        raise ValueError("martingale_check needs at least one run")
    sups, qvs = [], []
    for diag in diags:
        upto = diag.times <= T + 1e-12
        sups.append(float(np.max(np.sum(diag.martingale[:, upto] ** 2, axis=0))))
        qvs.append(float(np.sum(diag.quadratic_variation[:, upto][:, -1])))
    sups = np.array(sups)
    n, lam = diags[0].n, diags[0].lam
    se = float(np.std(sups, ddof=1) / math.sqrt(len(sups))) if len(sups) > 1 else 0.0
    bound = 4.0 * T * (1.0 + lam) / n
    mean = float(np.mean(sups))
    return MartingaleReport(
        horizon=T, mean_sup_norm=mean, standard_error=se, bound=bound,
        mean_terminal_qv=float(np.mean(qvs)), qv_bound=T * (1.0 + lam) / n,
        violated=mean - 3.0 * se > bound,
    )


@dataclass(frozen=True)
class GeneratorOracle:
    states: list
    rates: np.ndarray
    stationary: np.ndarray

    def residual(self) -> float:
        return float(np.max(np.abs(self.stationary @ self.rates)))


def brute_force_generator(params: SystemParams, level_cap: int) -> GeneratorOracle:
    """Dense generator on occupancies with at most level_cap levels; arrivals above the cap are dropped."""
    n = params.n
    if n > MAX_GENERATOR_N:
        raise ValueError(f"the generator oracle handles n <= {MAX_GENERATOR_N}, got {n}")
    if level_cap < 1:
        raise ValueError(f"level_cap must be positive, got {level_cap}")
    size = math.comb(n + level_cap, level_cap)
    if size > MAX_GENERATOR_STATES:
        raise ValueError(f"{size} states exceed the cap of {MAX_GENERATOR_STATES}")
    states = sorted(tuple(sorted(combo, reverse=True))
                    for combo in itertools.combinations_with_replacement(range(n + 1), level_cap))
    index = {s: j for j, s in enumerate(states)}
    table = lattice_table(params)
    q = np.zeros((size, size))
    for s in states:
        full = (n,) + s + (0,)
        row = index[s]
        for i in range(1, level_cap + 1):
            up = n * params.lam * (table[full[i - 1]] - table[full[i]])
            if up > 0.0:
                target = list(s)
                target[i - 1] += 1
                q[row, index[tuple(target)]] += up
            down = full[i] - full[i + 1]
            if down > 0:
                target = list(s)
                target[i - 1] -= 1
                q[row, index[tuple(target)]] += down
    np.fill_diagonal(q, -q.sum(axis=1))
    system = q.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    pi = linalg.solve(system, rhs)
    return GeneratorOracle(states=states, rates=q, stationary=pi)


@dataclass(frozen=True)
class StationaryEstimate:
    fractions: dict
    overflow: float
    busy_fraction: float
    mean_queue_length: float
    horizon: float


def occupancy_time_fractions(params: SystemParams, init: InitSpec, t_end: float, seed: int,
                             level_cap: int, replicate: int = 0) -> StationaryEstimate:
    """Time-weighted law of the occupancy over [0, t_end], states keyed like the oracle."""
    if t_end <= 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    chain = OccupancyChain(params, init.counts(params), UniformStream(make_generator(seed, replicate, "ctmc")))
    holding: dict = {}
    overflow = busy = jobs = 0.0
    while True:
        t_next = min(chain.peek(), t_end)
        held = t_next - chain.time
        c = chain.counts
        if chain.level(c, level_cap + 1) > 0:
            overflow += held
        else:
            key = tuple(chain.level(c, i) for i in range(1, level_cap + 1))
            holding[key] = holding.get(key, 0.0) + held
        busy += held * c[1]
        jobs += held * chain.jobs()
        if t_next >= t_end:
            break
        chain.fire()
    fractions = {key: value / t_end for key, value in holding.items()}
    n = params.n
    return StationaryEstimate(fractions, overflow / t_end, busy / (n * t_end), jobs / (n * t_end), t_end)


def total_variation(estimate: StationaryEstimate, oracle: GeneratorOracle) -> float:
    diff = estimate.overflow
    for state, p in zip(oracle.states, oracle.stationary):
        diff += abs(estimate.fractions.get(state, 0.0) - p)
    return 0.5 * diff
