"""Independent oracles used by the verification suites and tests.

Everything here deliberately takes the slow, obviously-correct route:
full 2^n x 2^n matrix products for circuits, shift-rule identities for
gradients, and closed-form field solutions for the PDE losses. None of it
shares kernels with the production code paths it is used to check.
"""
from __future__ import annotations

import numpy as np

from . import qsim
from .qsim import GateOp


def _rx(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]])


def _rz(t):
    return np.array([[np.exp(-1j * t / 2), 0], [0, np.exp(1j * t / 2)]])


def _rot(a, b, c):
    return _rz(c) @ _ry(b) @ _rz(a)


def _embed_1q(u: np.ndarray, n: int, q: int) -> np.ndarray:
    mats = [np.eye(2, dtype=complex)] * n
    mats[q] = u
    full = mats[0]
    for m in mats[1:]:
        full = np.kron(full, m)
    return full


def _embed_controlled(diag_or_x: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    """Control-on-|1> application of a 2x2 matrix on the target wire."""
    dim = 2 ** n
    full = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        if (i >> (n - 1 - control)) & 1 == 0:
            full[i, i] = 1.0
            continue
        tbit = (i >> (n - 1 - target)) & 1
        j0 = i & ~(1 << (n - 1 - target))
        j1 = i | (1 << (n - 1 - target))
        full[j0, i] += diag_or_x[0, tbit]
        full[j1, i] += diag_or_x[1, tbit]
    return full


def gate_unitary(gate: GateOp, n: int, angles) -> np.ndarray:
    """Full 2^n x 2^n unitary of one gate (test oracle only)."""
    k = gate.kind
    if k == "CNOT":
        x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        return _embed_controlled(x, n, *gate.wires)
    if k == "CRZ":
        t = angles[gate.param_slots[0]]
        return _embed_controlled(_rz(t), n, *gate.wires)
    vals = [angles[s] for s in gate.param_slots]
    u = {"RX": _rx, "RY": _ry, "RZ": _rz, "Rot": _rot}[k](*vals)
    return _embed_1q(u, n, gate.wires[0])


def circuit_unitary(gates, n: int, params, embed=None) -> np.ndarray:
    """Dense matrix product over an ordered gate list."""
    full = np.eye(2 ** n, dtype=complex)
    for g in gates:
        angles = embed if g.source == "embed" else params
        full = gate_unitary(g, n, angles) @ full
    return full


def statevector_by_matrix(gates, n: int, params, embed=None) -> np.ndarray:
    psi = np.zeros(2 ** n, dtype=complex)
    psi[0] = 1.0
    return circuit_unitary(gates, n, params, embed) @ psi


# -- parameter-shift identities --------------------------------------------------

def shift_rule_gradient(f, theta: np.ndarray, i: int, controlled: bool = False) -> float:
    """Analytic shift-rule derivative of f(theta) w.r.t. theta[i].

    Two-term rule (f(x+pi/2) - f(x-pi/2))/2 for single-qubit rotations;
    controlled rotations mix two frequencies and need the four-term rule.
    """
    def at(delta):
        t = theta.copy()
        t[i] += delta
        return f(t)

    if not controlled:
        return (at(np.pi / 2) - at(-np.pi / 2)) / 2.0
    c1 = (np.sqrt(2.0) + 1.0) / (4.0 * np.sqrt(2.0))
    c2 = (np.sqrt(2.0) - 1.0) / (4.0 * np.sqrt(2.0))
    return (c1 * (at(np.pi / 2) - at(-np.pi / 2))
            - c2 * (at(3 * np.pi / 2) - at(-3 * np.pi / 2)))


# -- analytic electromagnetic fields ----------------------------------------------

def plane_wave(x, y, t, direction: int = -1):
    """Exact periodic TEz solution Ez = Hy = cos(pi (x + t)), Hx = 0.

    ``direction=-1`` propagates toward -x (Hy = +Ez); ``direction=+1``
    flips the sign of Hy and propagates toward +x.
    """
    if direction == -1:
        phase = np.pi * (x + t)
        ez = np.cos(phase)
        return ez, np.zeros_like(ez), ez.copy()
    phase = np.pi * (x - t)
    ez = np.cos(phase)
    return ez, np.zeros_like(ez), -ez


def standing_wave(x, y, t):
    """Exact parity-symmetric solution: Ez = cos(pi x) cos(pi t),
    Hx = 0, Hy = -sin(pi x) sin(pi t).

    Unlike the traveling wave it satisfies all the centered-pulse parities
    (Ez even in x and y, Hx even/odd, Hy odd/even), so it exercises the
    symmetry loss as well as the residual and energy identities.
    """
    ez = np.cos(np.pi * x) * np.cos(np.pi * t)
    hy = -np.sin(np.pi * x) * np.sin(np.pi * t)
    return ez, np.zeros_like(ez), hy


def standing_wave_derivs(x, y, t):
    zero = np.zeros_like(np.asarray(x, dtype=float))
    d_ez = np.stack([-np.pi * np.sin(np.pi * x) * np.cos(np.pi * t), zero,
                     -np.pi * np.cos(np.pi * x) * np.sin(np.pi * t)])
    d_hy = np.stack([-np.pi * np.cos(np.pi * x) * np.sin(np.pi * t), zero,
                     -np.pi * np.sin(np.pi * x) * np.cos(np.pi * t)])
    d_hx = np.zeros_like(d_ez)
    return d_ez, d_hx, d_hy


def plane_wave_derivs(x, y, t, direction: int = -1):
    """Analytic (d/dx, d/dy, d/dt) of each plane-wave field component."""
    zero = np.zeros_like(np.asarray(x, dtype=float))
    if direction == -1:
        s = -np.pi * np.sin(np.pi * (x + t))
        d_ez = np.stack([s, zero, s])
        d_hy = d_ez.copy()
    else:
        s = -np.pi * np.sin(np.pi * (x - t))
        d_ez = np.stack([s, zero, -s])
        d_hy = -d_ez
    d_hx = np.zeros_like(d_ez)
    return d_ez, d_hx, d_hy
