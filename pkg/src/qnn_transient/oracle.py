"""Fixed-step RK4 reference solver, trajectories, CSV round-tripping and MSE."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .systems import DaeSystem

__all__ = [
    "OracleDivergence",
    "SchemaError",
    "Trajectory",
    "mse",
    "mse_table",
    "rk4_solve",
    "solve_oracle",
    "uniform_grid",
]

_TIME_TOL = 1e-9


class OracleDivergence(ArithmeticError):
    def __init__(self, t: float):
        super().__init__(f"integration produced a non-finite state at t = {t:.6g} s")
        self.t = t


class SchemaError(ValueError):
    """Two trajectories cannot be compared (different variables or grids)."""


def format_float(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (V, N)
    names: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float).reshape(len(self.names), -1)
        if values.shape[1] != times.size:
            raise ValueError("every variable needs one value per time")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown variable {name!r}; have {list(self.names)}") from None

    def final_state(self) -> np.ndarray:
        return self.values[:, -1].copy()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t",) + self.names)
            for i, t in enumerate(self.times):
                w.writerow([format_float(t)] + [format_float(v) for v in self.values[:, i]])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][0] != "t":
            raise SchemaError(f"{path}: first column must be 't'")
        data = np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(data[:, 0], data[:, 1:].T, tuple(rows[0][1:]))


def uniform_grid(t0: float, t1: float, step: float) -> np.ndarray:
    """Points t0, t0 + step, ... up to and including t1 (snapped)."""
    n = int(math.floor((t1 - t0) / step + 1e-9))
    grid = t0 + step * np.arange(n + 1)
    if t1 - grid[-1] > _TIME_TOL:
        grid = np.append(grid, t1)
    return grid


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_solve(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    step: float,
    y0,
    names: Optional[Sequence[str]] = None,
    output_times: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Classic RK4 on y' = f(t, y).

    Without ``output_times`` the state is recorded after every step.  With
    them, each gap between consecutive output times is covered by equal
    substeps no longer than ``step`` and only the requested times are kept.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    y = np.array(y0, dtype=float)
    names = tuple(names) if names is not None else tuple(f"y{i}" for i in range(y.size))

    if output_times is None:
        knots = np.linspace(t0, t1, int(math.ceil((t1 - t0) / step - 1e-9)) + 1)
        record = np.ones(knots.size, dtype=bool)
    else:
        out = np.asarray(output_times, dtype=float)
        if np.any(out < t0 - _TIME_TOL) or np.any(out > t1 + _TIME_TOL):
            raise ValueError("output times must lie in [t0, t1]")
        knots = np.unique(np.concatenate([[t0, t1], np.clip(out, t0, t1)]))
        record = np.isin(knots, out)

    times, states = [], []
    if record[0]:
        times.append(knots[0])
        states.append(y.copy())
    t = knots[0]
    for k in range(1, knots.size):
        gap = knots[k] - t
        n = max(1, int(math.ceil(gap / step - 1e-9)))
        h = gap / n
        for i in range(n):
            y = _rk4_step(f, t + i * h, y, h)
        t = knots[k]
        if not np.all(np.isfinite(y)):
            raise OracleDivergence(t)
        if record[k]:
            times.append(t)
            states.append(y.copy())
    return Trajectory(np.array(times), np.array(states).T, names)


def solve_oracle(
    system: DaeSystem,
    t_end: float,
    step: float = 1e-4,
    fault_step: float = 1e-5,
    output_times: Optional[Sequence[float]] = None,
    initial_state=None,
) -> Trajectory:
    """Integrate ``system`` from t = 0, segmenting at network switches.

    Machine states carry across each switch unchanged; only the network
    (and, in the fault window, the step size) changes.
    """
    if t_end > system.t_max + _TIME_TOL:
        raise ValueError(f"span {t_end} exceeds the system horizon {system.t_max}")
    y = system.initial_state() if initial_state is None else np.asarray(initial_state, dtype=float)
    edges = [0.0] + [b for b in system.breakpoints if 0.0 < b < t_end] + [t_end]
    out = None if output_times is None else np.asarray(output_times, dtype=float)

    times, values = [], []
    for a, b in zip(edges, edges[1:]):
        phase = system.phase_at(0.5 * (a + b))
        h = system.oracle_step(phase, step, fault_step)
        wanted = None
        if out is not None:
            last = b >= t_end
            wanted = out[(out >= a - _TIME_TOL) & ((out < b - _TIME_TOL) | last)]
            knots = np.unique(np.append(wanted, b))
        traj = rk4_solve(lambda t, s: system.rhs(t, s, phase), a, b, h, y, system.variables,
                         None if out is None else knots)
        y = traj.values[:, -1].copy()
        keep = np.ones(traj.times.size, dtype=bool)
        if wanted is not None:
            keep = np.isin(traj.times, wanted)
        if times and times[-1].size and keep.any() and abs(traj.times[keep][0] - times[-1][-1]) < _TIME_TOL:
            keep[np.argmax(keep)] = False
        times.append(traj.times[keep])
        values.append(traj.values[:, keep])
    return Trajectory(np.concatenate(times), np.concatenate(values, axis=1), system.variables)


def mse(qnn: Trajectory, reference: Trajectory, variable: str) -> float:
    """Mean squared pointwise difference of one variable on a shared grid."""
    if qnn.times.shape != reference.times.shape or np.max(np.abs(qnn.times - reference.times), initial=0.0) > 1e-9:
        raise SchemaError("trajectories are sampled on different time grids")
    diff = qnn[variable] - reference[variable]
    return float(np.mean(diff * diff))


def mse_table(qnn: Trajectory, reference: Trajectory) -> dict:
    """Per-variable MSE plus the plain average, keyed like the result tables."""
    missing = sorted(set(reference.names) ^ set(qnn.names))
    if missing:
        raise SchemaError(f"variable sets differ; unmatched: {', '.join(missing)}")
    table = {name: mse(qnn, reference, name) for name in reference.names}
    table["Average"] = float(np.mean(list(table.values())))
    return table
