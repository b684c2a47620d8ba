"""Physics-informed collocation training and window stitching.

Each window trains one surrogate per unknown function jointly against

    total = lambda1 * sum(boundary mismatch**2) + lambda2 * sum(residual**2)

with inputs in window-local time, then hands its terminal state to the next
window as boundary values.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bfgs import OptimizeResult, bfgs_minimize
from .models import Embedding, PfqModel, QnnModel, SfqModel, evaluate
from .oracle import Trajectory, uniform_grid
from .quantum import ArcsinDomainError, GateKind
from .systems import BoundaryTarget, DaeSystem

log = logging.getLogger(__name__)

__all__ = [
    "LossBreakdown",
    "ModelSpec",
    "TrainingConfig",
    "TrainingWindow",
    "WindowFailure",
    "WindowResult",
    "assemble_loss",
    "collocation_points",
    "initial_parameters",
    "make_window",
    "sample_windows",
    "plan_windows",
    "solve_trajectory",
    "solve_window",
]

_EDGE_TOL = 1e-9


class WindowFailure(RuntimeError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"window {index}: {reason}")
        self.index = index


@dataclass(frozen=True)
class TrainingConfig:
    time_span: float = 0.5
    num_points: int = 20
    lambda1: float = 1000.0
    lambda2: float = 1.0
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-10
    restarts: int = 3
    seed: int = 0
    init_angle_range: float = 0.1

    def __post_init__(self):
        if self.num_points < 2:
            raise ValueError("num_points must be at least 2")
        if not self.time_span > 0:
            raise ValueError("time_span must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0 or (self.lambda1 == 0 and self.lambda2 == 0):
            raise ValueError("loss weights must be non-negative and not both zero")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class ModelSpec:
    """Which circuit family to instantiate for every modelled function."""

    kind: str = "sfq-ry"  # sfq-ry | sfq-arcsin | pfq
    layers: int = 2
    num_qubits: int = 1
    rotations: tuple = ("RotY", "RotZ", "RotY")
    train_scale: bool = True

    KINDS = ("sfq-ry", "sfq-arcsin", "pfq")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown model {self.kind!r}; expected one of {', '.join(self.KINDS)}")

    def build(self) -> QnnModel:
        if self.kind == "pfq":
            return PfqModel(self.num_qubits, tuple(GateKind(r) for r in self.rotations))
        emb = Embedding.ARCSIN if self.kind == "sfq-arcsin" else Embedding.RY
        return SfqModel(emb, self.layers)

    def trainable_mask(self, model: QnnModel) -> np.ndarray:
        mask = np.ones(model.num_parameters, dtype=bool)
        if isinstance(model, PfqModel) and not self.train_scale:
            mask[model.num_quantum] = False
        return mask


@dataclass(frozen=True)
class LossBreakdown:
    loss_boundary: float
    loss_points: float
    total: float
    gradient: np.ndarray


@dataclass(frozen=True)
class TrainingWindow:
    """One time interval; collocation points are in window-local time."""

    t_start: float
    t_end: float
    boundary: tuple
    collocation: np.ndarray
    models: tuple
    phase: object = None
    index: int = 0

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    def parameters(self) -> np.ndarray:
        return np.concatenate([m.parameters() for m in self.models])

    def with_parameters(self, vec) -> "TrainingWindow":
        models, k = [], 0
        for m in self.models:
            models.append(m.with_parameters(vec[k : k + m.num_parameters]))
            k += m.num_parameters
        return TrainingWindow(self.t_start, self.t_end, self.boundary, self.collocation, tuple(models), self.phase, self.index)


@dataclass
class WindowResult:
    window: TrainingWindow
    loss: LossBreakdown
    terminal_state: np.ndarray
    iterations: int
    status: str
    restart_losses: list
    wall_time: float
    log: list = field(default_factory=list)


def collocation_points(window_length: float, n_p: int) -> np.ndarray:
    """``n_p`` uniformly spaced points on [0, window_length], endpoints included."""
    if n_p < 2:
        raise ValueError("need at least two collocation points")
    return np.linspace(0.0, window_length, n_p)


def plan_windows(total_span: float, time_span: float, breakpoints: Sequence[float] = ()) -> list:
    """Partition [0, total_span] into windows of ``time_span``, also cut at every breakpoint."""
    if not total_span > 0 or not time_span > 0:
        raise ValueError("spans must be positive")
    edges = list(uniform_grid(0.0, total_span, time_span))
    edges += [b for b in breakpoints if 0.0 < b < total_span]
    edges.sort()
    merged = [edges[0]]
    for e in edges[1:]:
        if e - merged[-1] > _EDGE_TOL:
            merged.append(e)
    merged[-1] = total_span
    return list(zip(merged, merged[1:]))


def _stack_outputs(window: TrainingWindow, x: np.ndarray):
    outs = [evaluate(m, x) for m in window.models]
    return outs, np.stack([o.jet for o in outs])


def assemble_loss(window: TrainingWindow, system: DaeSystem, config: TrainingConfig) -> LossBreakdown:
    """Boundary + squared-residual loss and its exact gradient over all model parameters."""
    if len(window.models) != len(system.model_names):
        raise ValueError(f"{system.name} needs {len(system.model_names)} models, window has {len(window.models)}")
    required = {(m, k) for m, order in enumerate(system.orders) for k in range(order)}
    missing = required - {(bt.model, bt.order) for bt in window.boundary}
    if missing:
        names = ", ".join(f"{system.model_names[m]}" + "'" * k for m, k in sorted(missing))
        raise ValueError(f"missing boundary value for {names}")
    x = window.collocation
    if not np.isclose(x[0], 0.0):
        x = np.concatenate([[0.0], x])
        res_slice = slice(1, None)
    else:
        res_slice = slice(None)
    outs, jets = _stack_outputs(window, x)
    t = window.t_start + x[res_slice]
    res, jac = system.residuals(t, jets[:, :, res_slice], window.phase)
    loss_p = float(np.sum(res * res))

    bres = []
    for bt in window.boundary:
        if not math.isfinite(bt.value):
            raise ValueError(f"boundary value for model {bt.model} is not finite")
        bres.append(jets[bt.model, bt.order, 0] - bt.value)
    bres = np.asarray(bres)
    loss_b = float(np.sum(bres * bres))

    grads = []
    for m, out in enumerate(outs):
        g_res = 2 * np.einsum("eb,ekb,kpb->p", res, jac[:, m], out.grad[:, :, res_slice])
        g_bnd = np.zeros(out.grad.shape[1])
        for r, bt in zip(bres, window.boundary):
            if bt.model == m:
                g_bnd += 2 * r * out.grad[bt.order, :, 0]
        grads.append(config.lambda1 * g_bnd + config.lambda2 * g_res)
    total = config.lambda1 * loss_b + config.lambda2 * loss_p
    return LossBreakdown(loss_b, loss_p, total, np.concatenate(grads))


def initial_parameters(model: QnnModel, boundary_value: float, rng: np.random.Generator, angle_range: float = 0.1) -> np.ndarray:
    """Small random angles; classical coefficients chosen so that f(0) equals ``boundary_value``."""
    q = model.num_quantum
    vec = model.parameters().copy()
    vec[:q] = rng.uniform(-angle_range, angle_range, size=q)
    if isinstance(model, SfqModel):
        vec[q:] = [0.0, 1.0, 0.0]
    else:
        vec[q:] = [1.0, 0.0]
    probe = model.with_parameters(vec)
    f0 = float(evaluate(probe, [0.0]).f[0])
    # the offset enters f additively in both families
    offset = q if isinstance(model, SfqModel) else q + 1
    vec[offset] += boundary_value - f0
    return vec


def _value_targets(boundary: Sequence[BoundaryTarget], num_models: int) -> list:
    vals = [0.0] * num_models
    for bt in boundary:
        if bt.order == 0:
            vals[bt.model] = bt.value
    return vals


def make_window(system: DaeSystem, spec: ModelSpec, config: TrainingConfig, t_start: float, t_end: float,
                state, index: int = 0) -> TrainingWindow:
    boundary = tuple(system.boundary_targets(state))
    missing = set(range(len(system.model_names))) - {bt.model for bt in boundary}
    if missing:
        raise ValueError(f"no boundary value for models {sorted(missing)}")
    models = tuple(spec.build() for _ in system.model_names)
    phase = system.phase_at(0.5 * (t_start + t_end))
    return TrainingWindow(t_start, t_end, boundary, collocation_points(t_end - t_start, config.num_points),
                          models, phase, index)


def solve_window(
    system: DaeSystem,
    window: TrainingWindow,
    config: TrainingConfig,
    spec: ModelSpec = ModelSpec(),
    rng: Optional[np.random.Generator] = None,
    on_iteration: Optional[Callable[[dict], None]] = None,
) -> WindowResult:
    """Train the window's models (best of ``config.restarts`` seeded starts)."""
    started = time.perf_counter()
    if rng is None:
        rng = np.random.default_rng([config.seed, window.index])
    for m in window.models:
        m.build_circuit(window.collocation)  # surfaces ArcsinDomainError before any training

    mask = np.concatenate([spec.trainable_mask(m) for m in window.models])
    targets = _value_targets(window.boundary, len(window.models))
    cache: dict = {}
    records: list = []

    best = None
    restart_losses = []
    for restart in range(config.restarts):
        full0 = np.concatenate([
            initial_parameters(m, targets[i], rng, config.init_angle_range) for i, m in enumerate(window.models)
        ])

        def objective(free, full0=full0):
            full = full0.copy()
            full[mask] = free
            lb = assemble_loss(window.with_parameters(full), system, config)
            if len(cache) > 8:
                cache.clear()
            cache[free.tobytes()] = lb
            return lb.total, lb.gradient[mask]

        def callback(it, free, f, g, restart=restart):
            lb = cache.get(free.tobytes())
            rec = {
                "window": window.index,
                "restart": restart,
                "iteration": it,
                "loss_boundary": lb.loss_boundary if lb else None,
                "loss_points": lb.loss_points if lb else None,
                "total": f,
                "grad_norm": float(np.max(np.abs(g), initial=0.0)),
            }
            records.append(rec)
            if on_iteration is not None:
                on_iteration(rec)

        try:
            res: OptimizeResult = bfgs_minimize(
                objective, full0[mask], max_iterations=config.max_iterations,
                gradient_tolerance=config.gradient_tolerance, callback=callback,
            )
        except (ValueError, FloatingPointError) as exc:
            log.warning("window %d restart %d failed: %s", window.index, restart, exc)
            restart_losses.append(math.inf)
            continue
        restart_losses.append(res.fun)
        if math.isfinite(res.fun) and (best is None or res.fun < best[0].fun):
            full = full0.copy()
            full[mask] = res.x
            best = (res, full)

    if best is None:
        raise WindowFailure(window.index, "no restart produced a finite loss")
    res, full = best
    trained = window.with_parameters(full)
    loss = assemble_loss(trained, system, config)
    _, jets = _stack_outputs(trained, np.array([trained.length]))
    terminal = system.outputs(jets)[:, 0]
    return WindowResult(trained, loss, terminal, res.iterations, res.status, restart_losses,
                        time.perf_counter() - started, records)


@dataclass
class TrajectoryResult:
    trajectory: Trajectory
    windows: list


def sample_windows(system: DaeSystem, windows: Sequence[TrainingWindow], times) -> Trajectory:
    """Evaluate trained windows on ``times``; a seam instant goes to the later window."""
    times = np.asarray(times, dtype=float)
    values = np.full((len(system.variables), times.size), np.nan)
    for k, w in enumerate(windows):
        last = k == len(windows) - 1
        sel = (times >= w.t_start - _EDGE_TOL) & ((times < w.t_end - _EDGE_TOL) | (last & (times <= w.t_end + _EDGE_TOL)))
        if not sel.any():
            continue
        _, jets = _stack_outputs(w, times[sel] - w.t_start)
        values[:, sel] = system.outputs(jets)
    return Trajectory(times, values, system.variables)


def solve_trajectory(
    system: DaeSystem,
    total_span: float,
    config: TrainingConfig,
    spec: ModelSpec = ModelSpec(),
    output_times=None,
    on_window: Optional[Callable[[WindowResult], None]] = None,
    on_iteration: Optional[Callable[[dict], None]] = None,
) -> TrajectoryResult:
    """Solve window after window from the system's initial state and stitch the result."""
    if total_span > system.t_max + _EDGE_TOL:
        raise ValueError(f"span {total_span} exceeds the system horizon {system.t_max}")
    plan = plan_windows(total_span, config.time_span, system.breakpoints)
    state = system.initial_state()
    results = []
    for k, (a, b) in enumerate(plan):
        window = make_window(system, spec, config, a, b, state, index=k)
        try:
            res = solve_window(system, window, config, spec, on_iteration=on_iteration)
        except ArcsinDomainError as exc:
            raise ArcsinDomainError(f"window {k}: {exc}") from exc
        except WindowFailure:
            raise
        except (ValueError, ArithmeticError) as exc:
            raise WindowFailure(k, str(exc)) from exc
        if not np.all(np.isfinite(res.terminal_state)):
            raise WindowFailure(k, "terminal state is not finite")
        log.info("window %d [%.4g, %.4g] total loss %.3e (%s, %d its)", k, a, b, res.loss.total, res.status, res.iterations)
        results.append(res)
        if on_window is not None:
            on_window(res)
        state = res.terminal_state
    if output_times is None:
        output_times = uniform_grid(0.0, total_span, 0.01)
    traj = sample_windows(system, [r.window for r in results], output_times)
    return TrajectoryResult(traj, results)
