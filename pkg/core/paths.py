"""SampledPath, the common carrier of every time-indexed output, and its CSV form."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

CSV_HEADER = ("replicate", "time", "coord", "value")


@dataclass(frozen=True)
class SampledPath:
    """values[j, t] is coordinate coords[j] at times[t]."""

    times: np.ndarray
    values: np.ndarray
    coords: tuple = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a nonempty one-dimensional grid")
        if times[0] < 0.0 or np.any(np.diff(times) <= 0.0):
            raise ValueError("times must be nonnegative and strictly increasing")
        if values.shape[1] != times.size:
            raise ValueError(f"values have {values.shape[1]} columns for {times.size} grid points")
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        coords = tuple(self.coords) or tuple(range(1, values.shape[0] + 1))
        if len(coords) != values.shape[0]:
            raise ValueError(f"{len(coords)} coordinate labels for {values.shape[0]} rows")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "coords", coords)

    def index_at(self, t: float) -> int:
        """Grid index of the last grid point <= t (cadlag lookup)."""
        idx = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        if idx < 0:
            raise ValueError(f"time {t} precedes the grid")
        return idx

    def at(self, t: float) -> np.ndarray:
        return self.values[:, self.index_at(t)]

    def row(self, coord: int) -> np.ndarray:
        return self.values[self.coords.index(coord)]


def uniform_grid(t_end: float, dt: float) -> np.ndarray:
    """0, dt, 2dt, ... up to t_end inclusive (t_end snapped to the grid)."""
    if t_end <= 0 or dt <= 0:
        raise ValueError(f"t_end and dt must be positive, got {t_end}, {dt}")
    steps = int(round(t_end / dt))
    if steps < 1:
        raise ValueError(f"dt={dt} is larger than t_end={t_end}")
    return np.arange(steps + 1) * dt


def write_long_csv(path, paths) -> None:
    """Write replicate-indexed paths as `replicate,time,coord,value` rows."""
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for replicate, p in enumerate(paths):
                for t_idx, t in enumerate(p.times):
                    for row, coord in enumerate(p.coords):
                        writer.writerow((replicate, f"{t:.12g}", coord, f"{p.values[row, t_idx]:.12g}"))
    except OSError as e:
        logging.error(f"Error writing paths to {path}: {e}")
        raise
    logging.info(f"Wrote {len(paths)} path(s) to {path}")
