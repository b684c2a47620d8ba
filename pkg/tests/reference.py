"""Independent dense-matrix reference used as an oracle by the tests.

Builds full 2**n x 2**n operators with Kronecker products (qubit 0 is the
most significant bit) and evaluates circuits by plain matrix products,
without tangents.  Derivatives are taken by finite differences.  Also
holds the stencil residual check for integrated trajectories.
"""

import numpy as np

from qnn_transient.oracle import rk4_solve, solve_oracle
from qnn_transient.systems import SmibSystem, smib_residual, wscc_residuals

I2 = np.eye(2)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
Z = np.diag([1.0, -1.0])


def ry(a):
    c, s = np.cos(a / 2), np.sin(a / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(a):
    return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])


def lift(op, target, n):
    mats = [op if q == target else I2 for q in range(n)]
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def cnot(control, target, n):
    dim = 2**n
    u = np.zeros((dim, dim))
    for i in range(dim):
        bits = [(i >> (n - 1 - q)) & 1 for q in range(n)]
        if bits[control]:
            bits[target] ^= 1
        j = sum(b << (n - 1 - q) for q, b in enumerate(bits))
        u[j, i] = 1
    return u


def z_expect(psi, qubit, n):
    return float(np.real(np.conj(psi) @ lift(Z, qubit, n) @ psi))


def sfq_expect(x, theta, embedding="ry"):
    """<Z0> of the layered two-qubit circuit, theta of shape (2, L)."""
    n = 2
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1
    if embedding == "ry":
        psi = lift(ry(x), 1, n) @ psi
    else:
        psi = lift(ry(np.arcsin(x)), 0, n) @ psi
        psi = lift(ry(2 * np.pi * x), 1, n) @ psi
    for j in range(theta.shape[1]):
        psi = lift(H, 0, n) @ psi
        psi = lift(ry(theta[0, j]), 0, n) @ psi
        psi = lift(ry(theta[1, j]), 1, n) @ psi
        psi = cnot(0, 1, n) @ psi
    psi = lift(H, 0, n) @ psi
    return z_expect(psi, 0, n)


def sfq_value(x, theta, tau, embedding="ry"):
    e = sfq_expect(x, theta, embedding)
    return tau[0] + tau[1] * e + tau[2] * e * e


def pfq_expect(x, angles, kinds=("RotY", "RotZ", "RotY"), n=1):
    v = np.array([x**k for k in range(2**n)], dtype=complex)
    psi = v / np.linalg.norm(v)
    for a, k in zip(angles, kinds):
        psi = lift(ry(a) if k == "RotY" else rz(a), 0, n) @ psi
    return z_expect(psi, 0, n)


def central(fn, x, h=1e-5):
    return (fn(x + h) - fn(x - h)) / (2 * h)


def central2(fn, x, h=1e-4):
    return (fn(x + h) - 2 * fn(x) + fn(x - h)) / h**2


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def stencil_residuals(system, centres, h=1e-3):
    """Residuals from five-point derivatives of the integrated trajectory.

    Reaches each stencil at the default step, then resolves the stencil
    itself at step 1e-5 within one network phase.
    """
    offsets = h * np.arange(-2, 3)
    out = []
    for c in centres:
        start = solve_oracle(system, c - 2 * h, output_times=[c - 2 * h]).final_state()
        phase = system.phase_at(c)
        tr = rk4_solve(lambda t, y: system.rhs(t, y, phase), c - 2 * h, c + 2 * h, 1e-5, start,
                       output_times=c + offsets)
        v = tr.values
        d1 = (v[:, 0] - 8 * v[:, 1] + 8 * v[:, 3] - v[:, 4]) / (12 * h)
        d2 = (-v[:, 0] + 16 * v[:, 1] - 30 * v[:, 2] + 16 * v[:, 3] - v[:, 4]) / (12 * h * h)
        mid = v[:, 2]
        if isinstance(system, SmibSystem):
            out.append(abs(smib_residual(c, mid[0], d1[0], d2[0], system.params)))
        else:
            out.append(np.max(np.abs(wscc_residuals(c, mid[:3], d1[:3], mid[3:], d1[3:], system.data))))
    return np.array(out)
