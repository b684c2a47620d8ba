"""Dense statevector simulation with forward-mode tangents.

Every state is carried as a jet in the circuit input ``x``: the amplitudes
together with their first and second x-derivatives.  Each trainable angle
additionally gets the derivative of that whole jet, so a single pass yields
f, f', f'' and the gradient of all three with respect to the parameters.

Inputs are batched: ``x`` is a 1-D array and every amplitude array carries a
batch axis in front of the ``2**n`` amplitude axis.  Qubit 0 is the most
significant bit of the basis index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ArcsinDomainError",
    "Encoding",
    "ExpectationJet",
    "GateKind",
    "GateOp",
    "StateVector",
    "TangentBundle",
    "amplitude_encode",
    "apply_gate",
    "expectation_z",
    "expectation_z_with_tangents",
    "initial_bundle",
    "run_circuit",
]

NORM_TOL = 1e-12


class ArcsinDomainError(ValueError):
    """Raised when an arcsin embedding receives an input with |x| >= 1."""


class GateKind(str, enum.Enum):
    RY = "RotY"
    RZ = "RotZ"
    H = "Hadamard"
    CNOT = "ControlledNot"
    PREP = "AmplitudePrep"


class Encoding(str, enum.Enum):
    """Encoding functions q(x) for gates driven by the circuit input."""

    IDENTITY = "identity"
    ARCSIN = "arcsin"
    TWO_PI = "two_pi"
    MONOMIAL = "monomial"  # amplitude prep only: [1, x, x**2, ...]


@dataclass(frozen=True)
class GateOp:
    """One circuit instruction.

    Exactly one of ``angle``, ``param`` or ``encoding`` is set for rotations.
    ``param`` indexes the flat parameter vector passed to :func:`run_circuit`.
    """

    kind: GateKind
    target: int = 0
    control: Optional[int] = None
    angle: Optional[float] = None
    param: Optional[int] = None
    encoding: Optional[Encoding] = None
    prep_coefficients: Optional[tuple] = None

    def __post_init__(self):
        sources = sum(s is not None for s in (self.angle, self.param, self.encoding))
        if self.kind in (GateKind.RY, GateKind.RZ):
            if sources != 1:
                raise ValueError(f"{self.kind.value} needs exactly one angle source, got {sources}")
        elif self.kind in (GateKind.H, GateKind.CNOT):
            if sources:
                raise ValueError(f"{self.kind.value} takes no angle")
            if self.kind is GateKind.CNOT and (self.control is None or self.control == self.target):
                raise ValueError("ControlledNot needs a control distinct from its target")
        elif self.kind is GateKind.PREP:
            if (self.encoding is None) == (self.prep_coefficients is None):
                raise ValueError("AmplitudePrep needs either encoding=MONOMIAL or prep_coefficients")
            if self.encoding is not None and self.encoding is not Encoding.MONOMIAL:
                raise ValueError("AmplitudePrep only supports the monomial input encoding")

    @property
    def depends_on_input(self) -> bool:
        return self.encoding is not None


@dataclass(frozen=True)
class StateVector:
    """A single normalized n-qubit state."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.num_qubits,):
            raise ValueError(f"expected {2**self.num_qubits} amplitudes, got shape {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class TangentBundle:
    """Batched state jets.

    Attributes:
        num_qubits: register size n.
        jet: complex array (3, B, 2**n); rows are psi, d psi/dx, d2 psi/dx2.
        param_jet: complex array (P, 3, B, 2**n); d(jet)/d theta_k.
    """

    num_qubits: int
    jet: np.ndarray
    param_jet: np.ndarray

    @property
    def batch_size(self) -> int:
        return self.jet.shape[1]

    @property
    def num_params(self) -> int:
        return self.param_jet.shape[0]

    @property
    def value(self) -> np.ndarray:
        return self.jet[0]

    @property
    def d_dx(self) -> np.ndarray:
        return self.jet[1]

    @property
    def d2_dx2(self) -> np.ndarray:
        return self.jet[2]

    @property
    def d_dtheta(self) -> np.ndarray:
        return self.param_jet[:, 0]

    def state(self, index: int = 0) -> StateVector:
        return StateVector(self.num_qubits, self.jet[0, index].copy())


@dataclass(frozen=True)
class ExpectationJet:
    """<Z> and its derivatives for a batch of inputs.

    ``grad`` has shape (3, P, B): derivative of (<Z>, d<Z>/dx, d2<Z>/dx2)
    with respect to each parameter.
    """

    value: np.ndarray
    d_dx: np.ndarray
    d2_dx2: np.ndarray
    grad: np.ndarray

    @property
    def d_dtheta(self) -> np.ndarray:
        return self.grad[0]


# -- gate matrices ---------------------------------------------------------

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


def ry_matrix(angle) -> np.ndarray:
    """Ry with the global-phase-free convention [[c, -s], [s, c]]; batched over ``angle``."""
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a / 2), np.sin(a / 2)
    out = np.empty(a.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def rz_matrix(angle) -> np.ndarray:
    """Rz = diag(exp(-i a/2), exp(i a/2)); batched over ``angle``."""
    a = np.asarray(angle, dtype=float)
    out = np.zeros(a.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-0.5j * a)
    out[..., 1, 1] = np.exp(0.5j * a)
    return out


def _rotation_derivatives(kind: GateKind, a):
    """Return (R(a), R'(a), R''(a)) for a rotation angle (batched)."""
    if kind is GateKind.RY:
        r = ry_matrix(a)
        # d/da of a rotation by a is half a rotation by a + pi
        return r, 0.5 * ry_matrix(np.asarray(a) + np.pi), -0.25 * r
    r = rz_matrix(a)
    gen = np.diag([-0.5j, 0.5j])
    return r, gen @ r, -0.25 * r


def _encoding_jet(encoding: Encoding, x: np.ndarray):
    """Return (q, q', q'') of the encoding function at ``x``."""
    if encoding is Encoding.IDENTITY:
        return x, np.ones_like(x), np.zeros_like(x)
    if encoding is Encoding.TWO_PI:
        return 2 * np.pi * x, np.full_like(x, 2 * np.pi), np.zeros_like(x)
    if encoding is Encoding.ARCSIN:
        if np.any(np.abs(x) >= 1.0):
            bad = float(x[np.argmax(np.abs(x))])
            raise ArcsinDomainError(f"arcsin embedding requires |x| < 1, got x = {bad!r}")
        w = 1.0 - x * x
        return np.arcsin(x), 1.0 / np.sqrt(w), x / w**1.5
    raise ValueError(f"encoding {encoding} is not an angle encoding")


# -- single-qubit / CNOT kernels ---------------------------------------------


def _apply_1q(mat: np.ndarray, psi: np.ndarray, target: int, n: int) -> np.ndarray:
    """Apply 2x2 ``mat`` (shape (2,2) or (B,2,2)) to ``psi`` of shape (..., B, 2**n)."""
    lead = psi.shape[:-1]
    view = psi.reshape(lead + (2**target, 2, 2 ** (n - target - 1)))
    if mat.ndim == 3:
        out = np.einsum("bij,...bajc->...baic", mat, view)
    else:
        out = np.einsum("ij,...ajc->...aic", mat, view)
    return out.reshape(psi.shape)


def _cnot_permutation(control: int, target: int, n: int) -> np.ndarray:
    idx = np.arange(2**n)
    cbit = (idx >> (n - 1 - control)) & 1
    return np.where(cbit == 1, idx ^ (1 << (n - 1 - target)), idx)


def _check_qubit(q: Optional[int], n: int, what: str) -> None:
    if q is None or not 0 <= q < n:
        raise IndexError(f"{what} qubit {q} out of range for a {n}-qubit register")


def _jet_apply(u: Sequence[np.ndarray], jet: np.ndarray, target: int, n: int) -> np.ndarray:
    """Product rule for an x-dependent gate with matrix jet (U, U', U'').

    ``jet`` has the derivative order on axis -3 (shape (..., 3, B, D)).
    """
    p0, p1, p2 = jet[..., 0, :, :], jet[..., 1, :, :], jet[..., 2, :, :]
    u0, u1, u2 = u
    out = np.empty_like(jet)
    out[..., 0, :, :] = _apply_1q(u0, p0, target, n)
    out[..., 1, :, :] = _apply_1q(u1, p0, target, n) + _apply_1q(u0, p1, target, n)
    out[..., 2, :, :] = (
        _apply_1q(u2, p0, target, n) + 2 * _apply_1q(u1, p1, target, n) + _apply_1q(u0, p2, target, n)
    )
    return out


# -- public operations -------------------------------------------------------


def initial_bundle(num_qubits: int, batch_size: int, num_params: int) -> TangentBundle:
    """|0...0> for every batch entry, with zero tangents."""
    dim = 2**num_qubits
    jet = np.zeros((3, batch_size, dim), dtype=complex)
    jet[0, :, 0] = 1.0
    return TangentBundle(num_qubits, jet, np.zeros((num_params, 3, batch_size, dim), dtype=complex))


def amplitude_encode(x, num_qubits: int, num_params: int = 0) -> TangentBundle:
    """Normalized monomial state [1, x, ..., x**(2**n - 1)] / norm with exact x-derivatives."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("amplitude encoding needs finite inputs")
    dim = 2**num_qubits
    k = np.arange(dim)
    # v = x**k and its derivatives, written to avoid 0**negative
    v = x[:, None] ** k
    dv = np.zeros_like(v)
    d2v = np.zeros_like(v)
    dv[:, 1:] = k[1:] * x[:, None] ** (k[1:] - 1)
    if dim > 2:
        d2v[:, 2:] = k[2:] * (k[2:] - 1) * x[:, None] ** (k[2:] - 2)

    s = np.sum(v * v, axis=1, keepdims=True)  # squared norm
    ds = 2 * np.sum(v * dv, axis=1, keepdims=True)
    d2s = 2 * np.sum(dv * dv + v * d2v, axis=1, keepdims=True)
    r = s**-0.5
    dr = -0.5 * s**-1.5 * ds
    d2r = 0.75 * s**-2.5 * ds**2 - 0.5 * s**-1.5 * d2s

    jet = np.empty((3, x.size, dim), dtype=complex)
    jet[0] = v * r
    jet[1] = dv * r + v * dr
    jet[2] = d2v * r + 2 * dv * dr + v * d2r
    return TangentBundle(num_qubits, jet, np.zeros((num_params, 3, x.size, dim), dtype=complex))


def _prepare(bundle: TangentBundle, gate: GateOp, x: np.ndarray) -> TangentBundle:
    n = bundle.num_qubits
    if gate.encoding is Encoding.MONOMIAL:
        return amplitude_encode(x, n, bundle.num_params)
    coeffs = np.asarray(gate.prep_coefficients, dtype=complex)
    if coeffs.shape != (2**n,):
        raise ValueError(f"prep_coefficients must have {2**n} entries")
    norm = np.linalg.norm(coeffs)
    if norm == 0:
        raise ValueError("prep_coefficients must not all vanish")
    jet = np.zeros_like(bundle.jet)
    jet[0] = coeffs / norm
    return TangentBundle(n, jet, np.zeros_like(bundle.param_jet))


def apply_gate(bundle: TangentBundle, gate: GateOp, x, theta) -> TangentBundle:
    """Apply one gate to a bundle, propagating every tangent by the product rule."""
    n = bundle.num_qubits
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != bundle.batch_size:
        raise ValueError(f"got {x.size} inputs for a batch of {bundle.batch_size}")
    if gate.kind is GateKind.PREP:
        return _prepare(bundle, gate, x)

    _check_qubit(gate.target, n, "target")
    if gate.kind is GateKind.CNOT:
        _check_qubit(gate.control, n, "control")
        perm = _cnot_permutation(gate.control, gate.target, n)
        return TangentBundle(n, bundle.jet[..., perm], bundle.param_jet[..., perm])
    if gate.kind is GateKind.H:
        return TangentBundle(
            n, _apply_1q(_HADAMARD, bundle.jet, gate.target, n), _apply_1q(_HADAMARD, bundle.param_jet, gate.target, n)
        )

    if gate.encoding is not None:
        q, dq, d2q = _encoding_jet(gate.encoding, x)
        r, dr, d2r = _rotation_derivatives(gate.kind, q)
        u = (r, dr * dq[:, None, None], d2r * (dq**2)[:, None, None] + dr * d2q[:, None, None])
        return TangentBundle(n, _jet_apply(u, bundle.jet, gate.target, n), _jet_apply(u, bundle.param_jet, gate.target, n))

    if gate.param is not None:
        theta = np.asarray(theta, dtype=float).ravel()
        if not 0 <= gate.param < theta.size:
            raise IndexError(f"parameter index {gate.param} out of range for {theta.size} parameters")
        if gate.param >= bundle.num_params:
            raise IndexError(f"bundle tracks {bundle.num_params} parameters, gate uses index {gate.param}")
        r, dr, _ = _rotation_derivatives(gate.kind, theta[gate.param])
        param_jet = _apply_1q(r, bundle.param_jet, gate.target, n)
        param_jet[gate.param] += _apply_1q(dr, bundle.jet, gate.target, n)
        return TangentBundle(n, _apply_1q(r, bundle.jet, gate.target, n), param_jet)

    r = ry_matrix(gate.angle) if gate.kind is GateKind.RY else rz_matrix(gate.angle)
    return TangentBundle(n, _apply_1q(r, bundle.jet, gate.target, n), _apply_1q(r, bundle.param_jet, gate.target, n))


def run_circuit(circuit: Sequence[GateOp], num_qubits: int, x, theta=(), num_params: Optional[int] = None) -> TangentBundle:
    """Run ``circuit`` from |0...0> for every input in ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = np.asarray(theta, dtype=float).ravel()
    if num_params is None:
        num_params = theta.size
    for i, gate in enumerate(circuit):
        if gate.kind is GateKind.PREP and i != 0:
            raise ValueError("AmplitudePrep may only be the first operation of a circuit")
    bundle = initial_bundle(num_qubits, x.size, num_params)
    for gate in circuit:
        bundle = apply_gate(bundle, gate, x, theta)
    return bundle


def _z_signs(qubit: int, n: int) -> np.ndarray:
    _check_qubit(qubit, n, "measured")
    bits = (np.arange(2**n) >> (n - 1 - qubit)) & 1
    return 1.0 - 2.0 * bits


def expectation_z(state: StateVector, qubit: int = 0) -> float:
    """P(qubit = 0) - P(qubit = 1)."""
    z = _z_signs(qubit, state.num_qubits)
    return float(np.sum(z * state.probabilities()))


def expectation_z_with_tangents(bundle: TangentBundle, qubit: int = 0) -> ExpectationJet:
    """<Z_q> with its x-derivatives and their parameter gradients."""
    z = _z_signs(qubit, bundle.num_qubits)

    def inner(a, b):
        # Re <a|Z|b> over the amplitude axis
        return np.real(np.sum(np.conj(a) * z * b, axis=-1))

    p0, p1, p2 = bundle.jet
    value = inner(p0, p0)
    d1 = 2 * inner(p1, p0)
    d2 = 2 * (inner(p2, p0) + inner(p1, p1))

    t0, t1, t2 = bundle.param_jet[:, 0], bundle.param_jet[:, 1], bundle.param_jet[:, 2]
    grad = np.empty((3,) + t0.shape[:-1])
    grad[0] = 2 * inner(t0, p0)
    grad[1] = 2 * (inner(t1, p0) + inner(p1, t0))
    grad[2] = 2 * (inner(t2, p0) + inner(p2, t0) + 2 * inner(t1, p1))
    return ExpectationJet(value, d1, d2, grad)


def finite_difference(fn: Callable[[float], np.ndarray], x: float, step: float, order: int = 1) -> np.ndarray:
    """Central difference of ``fn`` at ``x`` (first or second order)."""
    if order == 1:
        return (fn(x + step) - fn(x - step)) / (2 * step)
    if order == 2:
        return (fn(x + step) - 2 * fn(x) + fn(x - step)) / step**2
    raise ValueError("order must be 1 or 2")
