"""Uniform 1-D grids, cell-average densities and time-indexed stacks of them."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Cells of width h = 2L / n_cells on [-L, L], time step dt, n_steps steps."""

    half_width: float
    n_cells: int
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.n_cells < 16:
            raise ValueError("n_cells must be at least 16")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")

    @classmethod
    def from_horizon(cls, half_width: float, n_cells: int, dt: float, T: float) -> "GridSpec":
        n_steps = int(round(T / dt))
        if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
            raise ValueError("T must be an integer multiple of dt")
        return cls(float(half_width), int(n_cells), float(dt), n_steps)

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n_cells

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def centers(self) -> np.ndarray:
        return -self.half_width + (np.arange(self.n_cells) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return -self.half_width + np.arange(self.n_cells + 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def refined(self, factor: int = 2, time_factor: int | None = None) -> "GridSpec":
        """Same domain and horizon with h / factor and dt / time_factor."""
        tf = factor if time_factor is None else time_factor
        return GridSpec(self.half_width, self.n_cells * factor, self.dt / tf, self.n_steps * tf)

    def cfl_ok(self, sup_alpha: float) -> bool:
        """Explicit-scheme stability: dt <= h^2 / (2 sup alpha)."""
        return self.dt <= self.h**2 / (2.0 * sup_alpha)


@dataclass
class DensityField:
    """Piecewise-constant density (cell averages) on ``grid``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_cells,):
            raise ValueError("values do not match grid")

    @property
    def mass(self) -> float:
        return float(self.grid.h * self.values.sum())

    @property
    def sup(self) -> float:
        return float(self.values.max())

    def l2_sq(self) -> float:
        return float(self.grid.h * np.dot(self.values, self.values))

    def cdf_at_faces(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.values) * self.grid.h])


@dataclass
class PathField:
    """Snapshots u(t_k, .) at times ``times`` on a common grid; shape (n_t, n_cells)."""

    snapshots: np.ndarray
    times: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.snapshots = np.asarray(self.snapshots, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.snapshots.ndim != 2 or self.snapshots.shape[1] != self.grid.n_cells:
            raise ValueError("snapshots must be (n_t, n_cells)")
        if self.snapshots.shape[0] != self.times.shape[0]:
            raise ValueError("one time per snapshot")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else self.grid.dt

    def __len__(self) -> int:
        return self.snapshots.shape[0]

    def at(self, k: int) -> DensityField:
        return DensityField(self.snapshots[k], self.grid)

    @property
    def final(self) -> DensityField:
        return self.at(-1)

    def interpolate(self, t: float, x: np.ndarray) -> np.ndarray:
        """Linear interpolation in time and space (flat extension past the edges)."""
        k = np.searchsorted(self.times, t, side="right") - 1
        k = int(np.clip(k, 0, len(self.times) - 1))
        if k == len(self.times) - 1:
            row = self.snapshots[k]
        else:
            w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
            row = (1.0 - w) * self.snapshots[k] + w * self.snapshots[k + 1]
        return np.interp(x, self.grid.centers, row, left=row[0], right=row[-1])


def l2_spacetime(a: PathField, b: PathField | None = None) -> float:
    """L^2((0,T) x grid) norm of a - b (trapezoid in time, midpoint in space)."""
    diff = a.snapshots if b is None else a.snapshots - b.snapshots
    if b is not None and (a.snapshots.shape != b.snapshots.shape or not np.allclose(a.times, b.times)):
        raise ValueError("paths live on different lattices")
    per_time = a.grid.h * np.sum(diff * diff, axis=1)
    if len(a.times) == 1:
        return float(np.sqrt(per_time[0]))
    return float(np.sqrt(np.trapezoid(per_time, a.times)))


def write_path_csv(path: PathField, filename, stride: int = 1) -> None:
    """Long-format CSV with columns t, x, u."""
    filename = Path(filename)
    x = path.grid.centers
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "u"])
        for k in range(0, len(path.times), stride):
            for xi, ui in zip(x, path.snapshots[k]):
                writer.writerow([repr(float(path.times[k])), repr(float(xi)), repr(float(ui))])


def read_path_csv(filename, dt: float | None = None) -> PathField:
    """Inverse of :func:`write_path_csv`; the grid is rebuilt from cell centres."""
    data = np.loadtxt(filename, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    n_t = len(times)
    n_cells = data.shape[0] // n_t
    xs = data[:n_cells, 1]
    h = xs[1] - xs[0]
    half_width = -(xs[0] - 0.5 * h)
    step = dt if dt is not None else (times[1] - times[0] if n_t > 1 else 1.0)
    grid = GridSpec(float(half_width), int(n_cells), float(step), max(int(round(times[-1] / step)), 0))
    snaps = data[:, 2].reshape(n_t, n_cells)
    return PathField(snaps, times, grid)
