"""Benchmark power systems as residual/boundary problems.

A :class:`DaeSystem` is what the trainer and the oracle need to know about a
system: one surrogate model per unknown function, the residual equations in
terms of model jets (value, first and second time derivative), the initial
state, and a first-order right-hand side for time stepping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

__all__ = [
    "DaeSystem",
    "MachineParams",
    "NetworkPhase",
    "SmibParams",
    "SmibSystem",
    "SystemConfigError",
    "WsccData",
    "WsccSystem",
    "load_wscc",
    "make_system",
    "phase_schedule",
    "smib_residual",
    "wscc_algebraic",
    "wscc_residuals",
]


class SystemConfigError(ValueError):
    """A system definition is malformed or fails its consistency gate."""


# -- SMIB ----------------------------------------------------------------------


@dataclass(frozen=True)
class SmibParams:
    """Swing-equation constants; ``domega0`` is the initial speed deviation."""

    k1: float = 5.0
    k2: float = 10.0
    k3: float = 1.7
    delta0: float = -1.0
    domega0: float = 7.0

    def __post_init__(self):
        vals = (self.k1, self.k2, self.k3, self.delta0, self.domega0)
        if not all(math.isfinite(v) for v in vals):
            raise SystemConfigError("SMIB parameters must be finite")
        if self.k2 <= 0:
            raise SystemConfigError("SMIB k2 must be positive")


def smib_residual(t, delta, ddelta, d2delta, params: SmibParams = SmibParams()):
    """delta'' - (K1 - K2 sin(delta) - K3 delta'); zero on a solution."""
    return np.asarray(d2delta) - (params.k1 - params.k2 * np.sin(delta) - params.k3 * np.asarray(ddelta))


# -- WSCC ----------------------------------------------------------------------


@dataclass(frozen=True)
class MachineParams:
    name: str
    h: float
    d: float
    ra: float
    xd_prime: float
    pm: float
    eq_prime: float
    delta_init: float
    domega_init: float = 0.0
    delta_table: Optional[float] = None
    it_real: Optional[float] = None
    it_imag: Optional[float] = None

    def __post_init__(self):
        if not self.h > 0:
            raise SystemConfigError(f"machine {self.name}: inertia h must be positive")


@dataclass(frozen=True)
class NetworkPhase:
    label: str
    y_matrix: np.ndarray
    t_start: float
    t_end: float


@dataclass(frozen=True)
class AlgebraicSolution:
    e_prime: np.ndarray
    currents: np.ndarray
    pe: np.ndarray


@dataclass(frozen=True)
class WsccData:
    machines: tuple
    phases: tuple
    omega_s: float = 2 * math.pi * 60
    equilibrium_tolerance: float = 2e-2

    @property
    def pm(self) -> np.ndarray:
        return np.array([m.pm for m in self.machines])

    @property
    def h(self) -> np.ndarray:
        return np.array([m.h for m in self.machines])

    @property
    def d(self) -> np.ndarray:
        return np.array([m.d for m in self.machines])

    @property
    def eq_prime(self) -> np.ndarray:
        return np.array([m.eq_prime for m in self.machines])

    @property
    def ra(self) -> np.ndarray:
        return np.array([m.ra for m in self.machines])

    @property
    def delta_init(self) -> np.ndarray:
        return np.array([m.delta_init for m in self.machines])

    @property
    def domega_init(self) -> np.ndarray:
        return np.array([m.domega_init for m in self.machines])

    @property
    def t_end(self) -> float:
        return self.phases[-1].t_end

    def equilibrium_mismatch(self) -> np.ndarray:
        sol = wscc_algebraic(self.delta_init, self.machines, self.phases[0].y_matrix)
        return self.pm - sol.pe


def _complex_matrix(rows, where: str) -> np.ndarray:
    try:
        arr = np.asarray(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SystemConfigError(f"{where}: admittance entries must be [real, imag] pairs") from exc
    if arr.shape != (3, 3, 2):
        raise SystemConfigError(f"{where}: expected a 3x3 matrix of [real, imag] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def load_wscc(path: Optional[Path] = None, omega_s: Optional[float] = None) -> WsccData:
    """Load a WSCC system file (default: the shipped data) and gate it on equilibrium."""
    if path is None:
        text = resources.files("qnn_transient.data").joinpath("wscc9.yaml").read_text()
    else:
        text = Path(path).read_text()
    raw = yaml.safe_load(text)
    try:
        machines = tuple(MachineParams(**m) for m in raw["machines"])
        phases = tuple(
            NetworkPhase(
                p["label"], _complex_matrix(p["y"], f"phases[{i}].y"), float(p["t_start"]), float(p["t_end"])
            )
            for i, p in enumerate(raw["phases"])
        )
    except KeyError as exc:
        raise SystemConfigError(f"system file is missing key {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise SystemConfigError(f"bad machine entry: {exc}") from exc
    if len(machines) != 3:
        raise SystemConfigError("the WSCC model expects exactly three machines")
    labels = [p.label for p in phases]
    if labels != ["PreFault", "FaultOn", "PostFault"]:
        raise SystemConfigError(f"phases must be PreFault, FaultOn, PostFault in order, got {labels}")
    if phases[0].t_start != 0.0:
        raise SystemConfigError("the first phase must start at t = 0")
    for a, b in zip(phases, phases[1:]):
        if a.t_end != b.t_start:
            raise SystemConfigError(f"phases {a.label} and {b.label} leave a gap or overlap")
    data = WsccData(
        machines=machines,
        phases=phases,
        omega_s=float(omega_s if omega_s is not None else raw.get("omega_s", 2 * math.pi * 60)),
        equilibrium_tolerance=float(raw.get("equilibrium_tolerance", 2e-2)),
    )
    mismatch = np.max(np.abs(data.equilibrium_mismatch()))
    if not mismatch < data.equilibrium_tolerance:
        raise SystemConfigError(
            f"pre-fault network is not in equilibrium at the initial angles: max |Pm - Pe| = {mismatch:.3g} pu"
        )
    return data


def wscc_algebraic(deltas, params: Sequence[MachineParams], y) -> AlgebraicSolution:
    """Internal voltages, injected currents I = Y E' and electrical power.

    ``deltas`` may carry trailing batch axes (shape (3, ...)).
    """
    deltas = np.asarray(deltas, dtype=float)
    y = np.asarray(y, dtype=complex)
    n = len(params)
    if deltas.shape[0] != n or y.shape != (n, n):
        raise ValueError(f"dimension mismatch: {deltas.shape[0]} angles, {n} machines, Y of shape {y.shape}")
    eq = np.array([m.eq_prime for m in params]).reshape((n,) + (1,) * (deltas.ndim - 1))
    ra = np.array([m.ra for m in params]).reshape(eq.shape)
    e = eq * np.exp(1j * deltas)
    cur = np.tensordot(y, e, axes=(1, 0))
    # terminal voltage e_t = E' - (Ra + jX'd) I, so Pe = Re(E' conj I) - Ra |I|^2
    pe = np.real(e * np.conj(cur)) - ra * np.abs(cur) ** 2
    return AlgebraicSolution(e, cur, pe)


def _pe_jacobian(e: np.ndarray, cur: np.ndarray, y: np.ndarray, ra: np.ndarray) -> np.ndarray:
    """dPe_i/d delta_k with shape (3, 3, B) for batched e, cur of shape (3, B)."""
    # dE_k/d delta_k = j E_k ; dI_i/d delta_k = Y_ik j E_k
    di = 1j * y[:, :, None] * e[None, :, :]
    jac = np.real(e[:, None, :] * np.conj(di))
    n = e.shape[0]
    idx = np.arange(n)
    jac[idx, idx] += np.real(1j * e * np.conj(cur))
    jac -= 2 * ra[:, None, None] * np.real(np.conj(cur)[:, None, :] * di)
    return jac


def phase_schedule(t, phases: Sequence[NetworkPhase]) -> NetworkPhase:
    """The network phase in force at time ``t``; switch instants belong to the later phase."""
    t = float(t)
    if not phases[0].t_start <= t <= phases[-1].t_end:
        raise ValueError(f"t = {t} outside the simulated span [{phases[0].t_start}, {phases[-1].t_end}]")
    for ph in reversed(phases):
        if t >= ph.t_start:
            return ph
    return phases[0]


def wscc_residuals(t, deltas, ddeltas, domegas, ddomegas, data: WsccData, phase: Optional[NetworkPhase] = None):
    """Six residuals [d delta_i/dt - ws dw_i, d dw_i/dt - (Pm - Pe - D dw)/2H]."""
    if phase is None:
        phase = phase_schedule(t, data.phases)
    deltas = np.asarray(deltas, dtype=float)
    domegas = np.asarray(domegas, dtype=float)
    pe = wscc_algebraic(deltas, data.machines, phase.y_matrix).pe
    shape = (3,) + (1,) * (deltas.ndim - 1)
    pm, d, h = data.pm.reshape(shape), data.d.reshape(shape), data.h.reshape(shape)
    r1 = np.asarray(ddeltas) - data.omega_s * domegas
    r2 = np.asarray(ddomegas) - (pm - pe - d * domegas) / (2 * h)
    return np.concatenate([r1, r2], axis=0)


# -- generic interface -----------------------------------------------------------


@dataclass(frozen=True)
class BoundaryTarget:
    model: int
    order: int
    value: float


class DaeSystem:
    """Common interface consumed by the trainer and the oracle.

    ``jets`` arguments have shape (M, 3, B): for each of the M modelled
    functions its value and first and second time derivatives at B points.
    """

    name: str
    model_names: tuple
    orders: tuple
    variables: tuple
    t_max: float = math.inf

    @property
    def breakpoints(self) -> tuple:
        return ()

    def phase_at(self, t: float):
        return None

    def oracle_step(self, phase, default: float, fault_step: float) -> float:
        return default

    def initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def boundary_targets(self, state) -> list[BoundaryTarget]:
        raise NotImplementedError

    def outputs(self, jets: np.ndarray) -> np.ndarray:
        """Map model jets (M, 3, B) to trajectory variables (V, B)."""
        raise NotImplementedError

    def residuals(self, t, jets: np.ndarray, phase=None) -> tuple[np.ndarray, np.ndarray]:
        """Residuals (E, B) and their partials d r_e / d jets[m, k], shape (E, M, 3, B)."""
        raise NotImplementedError

    def rhs(self, t: float, y: np.ndarray, phase=None) -> np.ndarray:
        """First-order right-hand side over the trajectory variables."""
        raise NotImplementedError

    def jets_from_state(self, t: float, y: np.ndarray, phase=None) -> np.ndarray:
        """Model jets implied by an exact state (for residual checks on oracle data)."""
        raise NotImplementedError


@dataclass(frozen=True)
class SmibSystem(DaeSystem):
    params: SmibParams = field(default_factory=SmibParams)

    name = "smib"
    model_names = ("delta",)
    orders = (2,)
    variables = ("delta", "domega")

    def initial_state(self) -> np.ndarray:
        return np.array([self.params.delta0, self.params.domega0])

    def boundary_targets(self, state) -> list[BoundaryTarget]:
        return [BoundaryTarget(0, 0, float(state[0])), BoundaryTarget(0, 1, float(state[1]))]

    def outputs(self, jets):
        return np.stack([jets[0, 0], jets[0, 1]])

    def residuals(self, t, jets, phase=None):
        p = self.params
        d0, d1, d2 = jets[0]
        res = smib_residual(t, d0, d1, d2, p)[None, :]
        jac = np.zeros((1, 1, 3, d0.size))
        jac[0, 0, 0] = p.k2 * np.cos(d0)
        jac[0, 0, 1] = p.k3
        jac[0, 0, 2] = 1.0
        return res, jac

    def rhs(self, t, y, phase=None):
        p = self.params
        return np.array([y[1], p.k1 - p.k2 * math.sin(y[0]) - p.k3 * y[1]])

    def jets_from_state(self, t, y, phase=None):
        dy = self.rhs(t, y)
        return np.array([[[y[0]], [y[1]], [dy[1]]]])


@dataclass(frozen=True)
class WsccSystem(DaeSystem):
    data: WsccData = field(default_factory=load_wscc)

    name = "wscc"
    model_names = ("delta1", "delta2", "delta3", "domega1", "domega2", "domega3")
    orders = (1, 1, 1, 1, 1, 1)
    variables = model_names

    @property
    def t_max(self) -> float:
        return self.data.t_end

    @property
    def breakpoints(self) -> tuple:
        return tuple(ph.t_start for ph in self.data.phases[1:])

    def phase_at(self, t: float) -> NetworkPhase:
        return phase_schedule(t, self.data.phases)

    def oracle_step(self, phase, default, fault_step):
        return fault_step if phase is not None and phase.label == "FaultOn" else default

    def initial_state(self):
        return np.concatenate([self.data.delta_init, self.data.domega_init])

    def boundary_targets(self, state):
        return [BoundaryTarget(i, 0, float(v)) for i, v in enumerate(state)]

    def outputs(self, jets):
        return jets[:, 0].copy()

    def residuals(self, t, jets, phase=None):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if phase is None:
            phases = {phase_schedule(ti, self.data.phases).label for ti in t}
            if len(phases) != 1:
                raise ValueError("collocation points straddle a network switch; pass the phase explicitly")
            phase = phase_schedule(t[0], self.data.phases)
        elif np.any((t < self.data.phases[0].t_start) | (t > self.data.t_end)):
            raise ValueError(f"times outside [0, {self.data.t_end}]")
        data = self.data
        deltas, domegas = jets[:3, 0], jets[3:, 0]
        res = wscc_residuals(t, deltas, jets[:3, 1], domegas, jets[3:, 1], data, phase)
        sol = wscc_algebraic(deltas, data.machines, phase.y_matrix)
        dpe = _pe_jacobian(sol.e_prime, sol.currents, phase.y_matrix, data.ra)

        B = deltas.shape[1]
        jac = np.zeros((6, 6, 3, B))
        two_h = 2 * data.h
        for i in range(3):
            jac[i, i, 1] = 1.0
            jac[i, 3 + i, 0] = -data.omega_s
            jac[3 + i, 3 + i, 1] = 1.0
            jac[3 + i, 3 + i, 0] = data.d[i] / two_h[i]
            for k in range(3):
                jac[3 + i, k, 0] = dpe[i, k] / two_h[i]
        return res, jac

    def rhs(self, t, y, phase=None):
        if phase is None:
            phase = self.phase_at(t)
        # scalar arithmetic: this sits in the oracle's inner loop
        g, b = self._network_lists[phase.label]
        eq, ra, pm, damp, h, omega_s = self._machine_lists
        ex = [eq[i] * math.cos(y[i]) for i in range(3)]
        ey = [eq[i] * math.sin(y[i]) for i in range(3)]
        out = [0.0] * 6
        for i in range(3):
            gi, bi = g[i], b[i]
            ix = gi[0] * ex[0] + gi[1] * ex[1] + gi[2] * ex[2] - bi[0] * ey[0] - bi[1] * ey[1] - bi[2] * ey[2]
            iy = gi[0] * ey[0] + gi[1] * ey[1] + gi[2] * ey[2] + bi[0] * ex[0] + bi[1] * ex[1] + bi[2] * ex[2]
            pe = ex[i] * ix + ey[i] * iy - ra[i] * (ix * ix + iy * iy)
            w = y[3 + i]
            out[i] = omega_s * w
            out[3 + i] = (pm[i] - pe - damp[i] * w) / (2.0 * h[i])
        return np.array(out)

    @cached_property
    def _machine_lists(self):
        d = self.data
        return d.eq_prime.tolist(), d.ra.tolist(), d.pm.tolist(), d.d.tolist(), d.h.tolist(), d.omega_s

    @cached_property
    def _network_lists(self):
        return {ph.label: (ph.y_matrix.real.tolist(), ph.y_matrix.imag.tolist()) for ph in self.data.phases}

    def jets_from_state(self, t, y, phase=None):
        dy = self.rhs(t, y, phase)
        jets = np.zeros((6, 3, 1))
        jets[:, 0, 0] = y
        jets[:, 1, 0] = dy
        return jets


def make_system(name: str, wscc_file: Optional[Path] = None, omega_s: Optional[float] = None, smib: Optional[dict] = None) -> DaeSystem:
    if name == "smib":
        return SmibSystem(SmibParams(**(smib or {})))
    if name == "wscc":
        return WsccSystem(load_wscc(wscc_file, omega_s=omega_s))
    raise SystemConfigError(f"unknown system {name!r}; expected 'smib' or 'wscc'")
