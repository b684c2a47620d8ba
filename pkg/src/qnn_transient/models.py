"""SFQ and PFQ circuit families with classical post-processing.

Both families expose the same small surface: ``build_circuit(x)``,
``parameters()`` / ``with_parameters(vec)`` over a flat vector laid out as
quantum angles followed by classical coefficients, and :func:`evaluate`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .quantum import (
    ArcsinDomainError,
    Encoding,
    GateKind,
    GateOp,
    expectation_z_with_tangents,
    run_circuit,
)

__all__ = [
    "ArcsinDomainError",
    "Embedding",
    "ModelOutput",
    "PfqModel",
    "SfqModel",
    "evaluate",
    "pfq_build_circuit",
    "sfq_build_circuit",
]


class Embedding(str, enum.Enum):
    RY = "ry"
    ARCSIN = "arcsin"


@dataclass(frozen=True)
class ModelOutput:
    """Surrogate value, x-derivatives and parameter gradients over a batch.

    ``grad`` has shape (3, P, B): gradients of (f, f', f'') with respect to
    every trainable parameter, quantum ones first.
    """

    f: np.ndarray
    df_dx: np.ndarray
    d2f_dx2: np.ndarray
    grad: np.ndarray
    num_quantum: int
    expectation: np.ndarray

    @property
    def grad_quantum(self) -> np.ndarray:
        return self.grad[0, : self.num_quantum]

    @property
    def grad_classical(self) -> np.ndarray:
        return self.grad[0, self.num_quantum :]

    @property
    def jet(self) -> np.ndarray:
        """(3, B) stack of f, f', f''."""
        return np.stack([self.f, self.df_dx, self.d2f_dx2])


@dataclass(frozen=True)
class SfqModel:
    """Two-qubit layered circuit, f = tau0 + tau1 <Z0> + tau2 <Z0>**2.

    ``theta[i, j]`` is the Ry angle on qubit i in layer j.
    """

    embedding: Embedding = Embedding.RY
    num_layers: int = 2
    theta: np.ndarray = None
    tau: np.ndarray = None

    num_qubits = 2

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("SFQ needs at least one layer")
        object.__setattr__(self, "embedding", Embedding(self.embedding))
        theta = np.zeros((2, self.num_layers)) if self.theta is None else np.asarray(self.theta, dtype=float)
        tau = np.array([0.0, 1.0, 0.0]) if self.tau is None else np.asarray(self.tau, dtype=float)
        if theta.shape != (2, self.num_layers):
            raise ValueError(f"theta must have shape (2, {self.num_layers}), got {theta.shape}")
        if tau.shape != (3,):
            raise ValueError("SFQ takes three post-processing coefficients")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau", tau)

    @property
    def num_quantum(self) -> int:
        return 2 * self.num_layers

    @property
    def num_parameters(self) -> int:
        return self.num_quantum + 3

    def parameters(self) -> np.ndarray:
        return np.concatenate([self.theta.ravel(), self.tau])

    def with_parameters(self, vec) -> "SfqModel":
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.num_parameters:
            raise ValueError(f"expected {self.num_parameters} parameters, got {vec.size}")
        q = self.num_quantum
        return replace(self, theta=vec[:q].reshape(2, self.num_layers).copy(), tau=vec[q:].copy())

    def build_circuit(self, x=None) -> list[GateOp]:
        return sfq_build_circuit(self, x)


def sfq_build_circuit(model: SfqModel, x=None) -> list[GateOp]:
    """Embedding, then per layer H(q0), Ry(q0), Ry(q1), CNOT(q0 -> q1); final H(q0).

    ``x`` is only used for the arcsin domain check.
    """
    if model.embedding is Embedding.ARCSIN:
        if x is not None and np.any(np.abs(np.asarray(x, dtype=float)) >= 1.0):
            raise ArcsinDomainError(
                "arcsin embedding requires |x| < 1; got max |x| = %r" % float(np.max(np.abs(x)))
            )
        gates = [
            GateOp(GateKind.RY, target=0, encoding=Encoding.ARCSIN),
            GateOp(GateKind.RY, target=1, encoding=Encoding.TWO_PI),
        ]
    else:
        gates = [GateOp(GateKind.RY, target=1, encoding=Encoding.IDENTITY)]
    L = model.num_layers
    for j in range(L):
        gates += [
            GateOp(GateKind.H, target=0),
            GateOp(GateKind.RY, target=0, param=j),
            GateOp(GateKind.RY, target=1, param=L + j),
            GateOp(GateKind.CNOT, target=1, control=0),
        ]
    gates.append(GateOp(GateKind.H, target=0))
    return gates


DEFAULT_ROTATIONS = (GateKind.RY, GateKind.RZ, GateKind.RY)


@dataclass(frozen=True)
class PfqModel:
    """Amplitude-encoded polynomial circuit, f = tau3 <Z> + tau4.

    Rotations act on qubit 0 with independent angles.  ``tau`` is
    (scale, offset).
    """

    num_qubits: int = 1
    rotations: tuple = DEFAULT_ROTATIONS
    theta: np.ndarray = None
    tau: np.ndarray = None

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("PFQ needs at least one qubit")
        rotations = tuple(GateKind(r) if not isinstance(r, GateKind) else r for r in self.rotations)
        if not rotations or any(r not in (GateKind.RY, GateKind.RZ) for r in rotations):
            raise ValueError("PFQ rotations must be a non-empty sequence of RotY/RotZ")
        theta = np.zeros(len(rotations)) if self.theta is None else np.asarray(self.theta, dtype=float).ravel()
        tau = np.array([1.0, 0.0]) if self.tau is None else np.asarray(self.tau, dtype=float)
        if theta.size != len(rotations):
            raise ValueError("PFQ needs one angle per rotation")
        if tau.shape != (2,):
            raise ValueError("PFQ takes two post-processing coefficients")
        object.__setattr__(self, "rotations", rotations)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "tau", tau)

    @property
    def num_quantum(self) -> int:
        return len(self.rotations)

    @property
    def num_parameters(self) -> int:
        return self.num_quantum + 2

    def parameters(self) -> np.ndarray:
        return np.concatenate([self.theta, self.tau])

    def with_parameters(self, vec) -> "PfqModel":
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.num_parameters:
            raise ValueError(f"expected {self.num_parameters} parameters, got {vec.size}")
        q = self.num_quantum
        return replace(self, theta=vec[:q].copy(), tau=vec[q:].copy())

    def build_circuit(self, x=None) -> list[GateOp]:
        return pfq_build_circuit(self, x)


def pfq_build_circuit(model: PfqModel, x=None) -> list[GateOp]:
    gates = [GateOp(GateKind.PREP, target=0, encoding=Encoding.MONOMIAL)]
    gates += [GateOp(kind, target=0, param=k) for k, kind in enumerate(model.rotations)]
    return gates


QnnModel = Union[SfqModel, PfqModel]


def evaluate(model: QnnModel, x) -> ModelOutput:
    """Evaluate the surrogate and all its derivatives at the inputs ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    circuit = model.build_circuit(x)
    bundle = run_circuit(circuit, model.num_qubits, x, model.theta.ravel())
    ez = expectation_z_with_tangents(bundle, qubit=0)
    e, e1, e2 = ez.value, ez.d_dx, ez.d2_dx2
    gq = ez.grad  # (3, Q, B)

    B = x.size
    Q = model.num_quantum
    grad = np.zeros((3, model.num_parameters, B))

    if isinstance(model, SfqModel):
        t0, t1, t2 = model.tau
        # f = g(E) with g quadratic; chain rule through the x-jet
        g1 = t1 + 2 * t2 * e
        f = t0 + t1 * e + t2 * e * e
        df = g1 * e1
        d2f = g1 * e2 + 2 * t2 * e1 * e1
        grad[0, :Q] = g1 * gq[0]
        grad[1, :Q] = 2 * t2 * gq[0] * e1 + g1 * gq[1]
        grad[2, :Q] = 2 * t2 * gq[0] * e2 + g1 * gq[2] + 4 * t2 * e1 * gq[1]
        ones, zeros = np.ones(B), np.zeros(B)
        grad[0, Q:] = [ones, e, e * e]
        grad[1, Q:] = [zeros, e1, 2 * e * e1]
        grad[2, Q:] = [zeros, e2, 2 * e * e2 + 2 * e1 * e1]
    else:
        scale, offset = model.tau
        f = scale * e + offset
        df = scale * e1
        d2f = scale * e2
        grad[:, :Q] = scale * gq
        grad[0, Q:] = [e, np.ones(B)]
        grad[1, Q:] = [e1, np.zeros(B)]
        grad[2, Q:] = [e2, np.zeros(B)]

    return ModelOutput(f=f, df_dx=df, d2f_dx2=d2f, grad=grad, num_quantum=Q, expectation=e)
