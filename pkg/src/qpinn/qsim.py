"""Batched analytic statevector simulation with stride-based gate kernels.

Conventions (fixed here, tested against the dense-matrix oracle):

* Wire 0 is the most significant bit of the basis index, so for ``n``
  qubits wire ``q`` has stride ``2**(n-q-1)``.
* ``RX(t) = [[cos t/2, -i sin t/2], [-i sin t/2, cos t/2]]``,
  ``RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]``,
  ``RZ(t) = diag(exp(-it/2), exp(+it/2))``,
  ``Rot(a, b, c) = RZ(c) RY(b) RZ(a)``.
* ``CRZ(t) = diag(1, 1, exp(-it/2), exp(+it/2))`` on the (control, target)
  ordered two-qubit basis; CNOT flips the target where the control is 1.

Gates act by pairwise amplitude updates on reshaped views (never through a
full ``2^n x 2^n`` matrix; the dense product lives in ``oracles`` for tests
only). Every kernel is generic over plain ndarrays, taped tensors, and
forward-mode duals, so the same code serves fast evaluation, parameter
gradients, and input derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .autodiff import ops
from .autodiff.ops import BatchedDual
from .autodiff.tape import Tensor
from .errors import CapacityError, InvalidGateError

MAX_QUBITS = 12

GATE_KINDS = ("RX", "RY", "RZ", "Rot", "CNOT", "CRZ")
PARAM_COUNT = {"RX": 1, "RY": 1, "RZ": 1, "Rot": 3, "CNOT": 0, "CRZ": 1}
TWO_QUBIT = {"CNOT", "CRZ"}


@dataclass(frozen=True)
class GateOp:
    """One gate: kind, wires, and slots into a parameter or embedding vector.

    ``source`` says which vector the slots index: ``"param"`` for trainable
    circuit parameters (shared across the batch) or ``"embed"`` for the
    per-point embedding angles.
    """
    kind: str
    wires: Tuple[int, ...]
    param_slots: Tuple[int, ...] = ()
    source: str = "param"

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise InvalidGateError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind in TWO_QUBIT else 1
        if len(self.wires) != want:
            raise InvalidGateError(f"{self.kind} takes {want} wire(s)")
        if len(set(self.wires)) != len(self.wires):
            raise InvalidGateError(f"wire collision in {self.kind}{self.wires}")
        if len(self.param_slots) != PARAM_COUNT[self.kind]:
            raise InvalidGateError(
                f"{self.kind} takes {PARAM_COUNT[self.kind]} parameter slot(s)")
        if self.source not in ("param", "embed"):
            raise InvalidGateError(f"bad slot source {self.source!r}")


@dataclass
class StateVectorBatch:
    """Complex amplitudes of shape [batch, 2**n_qubits]."""
    amplitudes: object
    n_qubits: int

    @property
    def batch(self) -> int:
        return self.amplitudes.shape[0]

    def norms(self) -> np.ndarray:
        """Per-row total probability (ndarray backend only)."""
        a = ops.value_of(self.amplitudes)
        return np.sum(a.real * a.real + a.imag * a.imag, axis=-1)


def init_state(batch: int, n: int) -> StateVectorBatch:
    """All rows |0...0>."""
    if not 1 <= n <= MAX_QUBITS:
        raise CapacityError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n}")
    if batch < 1:
        raise CapacityError("batch must be >= 1")
    amps = np.zeros((batch, 2 ** n), dtype=np.complex128)
    amps[:, 0] = 1.0
    return StateVectorBatch(amps, n)


# -- kernels ------------------------------------------------------------------


def _coef(c, ndim: int):
    """Pad a per-row coefficient [R] to broadcast over ndim block axes."""
    shape = getattr(c, "shape", ())
    if len(shape) == 1:
        return ops.reshape(c, (shape[0],) + (1,) * ndim)
    return c


def _any_dual(*xs) -> bool:
    return any(isinstance(x, BatchedDual) for x in xs)


def _u_matrix(uv) -> tuple:
    """Coefficient values as a [2, 2] (shared) or [R, 2, 2] (per-row) matrix."""
    per_row = any(np.ndim(u) == 1 for u in uv)
    if per_row:
        rows = max(np.shape(u)[0] for u in uv if np.ndim(u) == 1)
        mat = np.empty((rows, 2, 2), dtype=np.complex128)
        mat[:, 0, 0], mat[:, 0, 1] = uv[0], uv[1]
        mat[:, 1, 0], mat[:, 1, 1] = uv[2], uv[3]
    else:
        mat = np.array([[uv[0], uv[1]], [uv[2], uv[3]]], dtype=np.complex128)
    return mat, per_row


def _fused_1q(amps, n: int, q: int, u00, u01, u10, u11):
    """Single-node gate application: only the output lands on the tape.

    Forward and both adjoints are einsum contractions over the pair axis,
    which is the fastest layout numpy offers for strided pair updates.
    """
    us = (u00, u01, u10, u11)
    mat, per_row = _u_matrix([ops.value_of(u) for u in us])
    av = ops.value_of(amps)
    rows, left, right = av.shape[0], 2 ** q, 2 ** (n - q - 1)
    s4 = av.reshape(rows, left, 2, right)
    spec = "rij,rljt->rlit" if per_row else "ij,rljt->rlit"
    out_v = np.einsum(spec, mat, s4).reshape(rows, 2 ** n)
    parents = tuple(p for p in (amps,) + us
                    if isinstance(p, Tensor) and p.track)
    if not parents:
        return out_v

    def vjp(g):
        g4 = g.reshape(rows, left, 2, right)
        if isinstance(amps, Tensor) and amps.track:
            back = "rij,rlit->rljt" if per_row else "ij,rlit->rljt"
            amps._accumulate(np.einsum(back, np.conj(mat), g4).reshape(rows, -1))
        if any(isinstance(u, Tensor) and u.track for u in us):
            uspec = "rlit,rljt->rij" if per_row else "rlit,rljt->ij"
            gu = np.einsum(uspec, g4, np.conj(s4))
            for (i, j), u in zip(((0, 0), (0, 1), (1, 0), (1, 1)), us):
                if isinstance(u, Tensor) and u.track:
                    u._accumulate(gu[..., i, j])

    return Tensor(out_v, _parents=parents, _vjp=vjp)


def apply_1q(amps, n: int, q: int, u00, u01, u10, u11):
    """General single-qubit matrix action on wire q of [R, 2^n] amplitudes."""
    if not _any_dual(amps, u00, u01, u10, u11):
        return _fused_1q(amps, n, q, u00, u01, u10, u11)
    rows = amps.shape[0]
    left, right = 2 ** q, 2 ** (n - q - 1)
    s = ops.reshape(amps, (rows, left, 2, right))
    a0 = s[:, :, 0, :]
    a1 = s[:, :, 1, :]
    c00, c01, c10, c11 = (_coef(u, 2) for u in (u00, u01, u10, u11))
    y0 = c00 * a0 + c01 * a1
    y1 = c10 * a0 + c11 * a1
    return ops.reshape(ops.stack([y0, y1], axis=2), (rows, 2 ** n))


def _apply_diag(amps, n: int, q: int, d0, d1):
    if not _any_dual(amps, d0, d1):
        zero = np.complex128(0.0)
        return _fused_1q(amps, n, q, d0, zero, zero, d1)
    rows = amps.shape[0]
    left, right = 2 ** q, 2 ** (n - q - 1)
    s = ops.reshape(amps, (rows, left, 2, right))
    y0 = _coef(d0, 2) * s[:, :, 0, :]
    y1 = _coef(d1, 2) * s[:, :, 1, :]
    return ops.reshape(ops.stack([y0, y1], axis=2), (rows, 2 ** n))


def permutation_for_cnots(cnots, n: int) -> np.ndarray:
    """Gather indices equivalent to applying a CNOT sequence in order.

    new_state[:, j] = old_state[:, perm[j]] reproduces the composition; a
    chain or mesh of CNOTs then costs one gather instead of many copies.
    """
    idx = np.arange(2 ** n)
    perm = idx.copy()
    for control, target in cnots:
        flip = idx ^ (1 << (n - 1 - target))
        on = ((idx >> (n - 1 - control)) & 1).astype(bool)
        sigma = np.where(on, flip, idx)
        perm = perm[sigma]
    return perm


def apply_permutation(amps, perm: np.ndarray):
    """Reorder basis amplitudes; adjoint is the inverse permutation."""
    if isinstance(amps, Tensor):
        if not amps.track:
            return Tensor(amps.value[:, perm], track=False)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))

        def vjp(g):
            amps._accumulate(g[:, inv])
        return Tensor(amps.value[:, perm], _parents=(amps,), _vjp=vjp)
    return amps[:, perm]


def crz_mesh_phase_matrix(pairs, n: int) -> np.ndarray:
    """[2^n, len(pairs)] exponent coefficients of a commuting CRZ mesh.

    Column k holds d(phase of basis state)/d(theta_k): 0 when the control
    bit is 0, -1/2 or +1/2 by the target bit otherwise, matching the
    diag(1, 1, e^{-it/2}, e^{+it/2}) convention.
    """
    idx = np.arange(2 ** n)
    cols = []
    for control, target in pairs:
        on = ((idx >> (n - 1 - control)) & 1).astype(np.float64)
        tbit = ((idx >> (n - 1 - target)) & 1).astype(np.float64)
        cols.append(on * (tbit - 0.5))
    return np.stack(cols, axis=1)


def _blocks(amps, n: int, c: int, t: int):
    """Split amplitudes along the control/target wires.

    Returns blocks indexed b[control_bit][target_bit] plus the reassembly
    axes (control_axis, target_axis) for stacking back.
    """
    rows = amps.shape[0]
    p, r = min(c, t), max(c, t)
    shape = (rows, 2 ** p, 2, 2 ** (r - p - 1), 2, 2 ** (n - r - 1))
    s = ops.reshape(amps, shape)
    b = [[s[:, :, i, :, j, :] for j in (0, 1)] for i in (0, 1)]
    if c < t:
        return b, True
    bb = [[b[j][i] for j in (0, 1)] for i in (0, 1)]  # reindex to [control][target]
    return bb, False


def _reassemble(bl, amps_shape_rows, n, c, t, control_first):
    # stack target within each control block, then stack control blocks
    if control_first:
        c0 = ops.stack([bl[0][0], bl[0][1]], axis=3)
        c1 = ops.stack([bl[1][0], bl[1][1]], axis=3)
        out = ops.stack([c0, c1], axis=2)
    else:
        t0 = ops.stack([bl[0][0], bl[1][0]], axis=3)
        t1 = ops.stack([bl[0][1], bl[1][1]], axis=3)
        out = ops.stack([t0, t1], axis=2)
    return ops.reshape(out, (amps_shape_rows, 2 ** n))


def apply_cnot(amps, n: int, control: int, target: int):
    bl, cf = _blocks(amps, n, control, target)
    swapped = [[bl[0][0], bl[0][1]], [bl[1][1], bl[1][0]]]
    return _reassemble(swapped, amps.shape[0], n, control, target, cf)


def apply_crz(amps, n: int, control: int, target: int, theta):
    half = theta * 0.5
    em = ops.make_complex(ops.cos(half), -ops.sin(half))
    ep = ops.make_complex(ops.cos(half), ops.sin(half))
    bl, cf = _blocks(amps, n, control, target)
    em, ep = _coef(em, 3), _coef(ep, 3)
    phased = [[bl[0][0], bl[0][1]], [em * bl[1][0], ep * bl[1][1]]]
    return _reassemble(phased, amps.shape[0], n, control, target, cf)


def rx_coefs(theta):
    half = theta * 0.5
    c, s = ops.cos(half), ops.sin(half)
    u_diag = ops.make_complex(c, 0.0)
    u_off = ops.make_complex(0.0, -s)
    return u_diag, u_off, u_off, u_diag


def ry_coefs(theta):
    half = theta * 0.5
    c, s = ops.cos(half), ops.sin(half)
    return c, -s, s, c


def rz_coefs(theta):
    half = theta * 0.5
    c, s = ops.cos(half), ops.sin(half)
    return ops.make_complex(c, -s), ops.make_complex(c, s)


def rot_coefs(alpha, beta, gamma):
    """Matrix entries of Rot(a, b, c) = RZ(c) RY(b) RZ(a)."""
    p = (alpha + gamma) * 0.5
    m = (alpha - gamma) * 0.5
    cb, sb = ops.cos(beta * 0.5), ops.sin(beta * 0.5)
    cp, sp = ops.cos(p), ops.sin(p)
    cm, sm = ops.cos(m), ops.sin(m)
    u00 = ops.make_complex(cp * cb, -(sp * cb))
    u01 = ops.make_complex(-(cm * sb), -(sm * sb))
    u10 = ops.make_complex(cm * sb, -(sm * sb))
    u11 = ops.make_complex(cp * cb, sp * cb)
    return u00, u01, u10, u11


def rx_rz_coefs(a, b):
    """Entries of RZ(b) RX(a), the per-qubit block of the 2-rotation mesh."""
    ca, sa = ops.cos(a * 0.5), ops.sin(a * 0.5)
    cb, sb = ops.cos(b * 0.5), ops.sin(b * 0.5)
    u00 = ops.make_complex(cb * ca, -(sb * ca))
    u01 = ops.make_complex(-(sb * sa), -(cb * sa))
    u10 = ops.make_complex(sb * sa, -(cb * sa))
    u11 = ops.make_complex(cb * ca, sb * ca)
    return u00, u01, u10, u11


def apply_rx(amps, n: int, q: int, theta):
    return apply_1q(amps, n, q, *rx_coefs(theta))


def apply_ry(amps, n: int, q: int, theta):
    return apply_1q(amps, n, q, *ry_coefs(theta))


def apply_rz(amps, n: int, q: int, theta):
    d0, d1 = rz_coefs(theta)
    return _apply_diag(amps, n, q, d0, d1)


def apply_rot(amps, n: int, q: int, alpha, beta, gamma):
    return apply_1q(amps, n, q, *rot_coefs(alpha, beta, gamma))


def _pick(angles, slot: int):
    """Select a slot from a flat [S] or per-row [R, S] angle container."""
    if isinstance(angles, BatchedDual) or getattr(angles, "ndim", 1) == 2:
        return angles[:, slot]
    return angles[slot]


def apply_gate(state: StateVectorBatch, gate: GateOp, angles=None) -> StateVectorBatch:
    """Apply one GateOp, drawing its angles from ``angles`` via param_slots."""
    n = state.n_qubits
    if any(w >= n for w in gate.wires):
        raise InvalidGateError(f"wire out of range for {n} qubits: {gate}")
    amps = state.amplitudes
    k = gate.kind
    if k == "CNOT":
        out = apply_cnot(amps, n, *gate.wires)
    elif k == "CRZ":
        out = apply_crz(amps, n, *gate.wires, _pick(angles, gate.param_slots[0]))
    elif k == "Rot":
        a, b, c = (_pick(angles, s) for s in gate.param_slots)
        out = apply_rot(amps, n, gate.wires[0], a, b, c)
    else:
        theta = _pick(angles, gate.param_slots[0])
        fn = {"RX": apply_rx, "RY": apply_ry, "RZ": apply_rz}[k]
        out = fn(amps, n, gate.wires[0], theta)
    return StateVectorBatch(out, n)


# -- readout -------------------------------------------------------------------

_SIGNS: dict[int, np.ndarray] = {}


def z_sign_matrix(n: int) -> np.ndarray:
    """[2^n, n] matrix of (+1/-1) Pauli-Z eigenvalues per basis state."""
    if n not in _SIGNS:
        idx = np.arange(2 ** n)
        cols = [1.0 - 2.0 * ((idx >> (n - 1 - q)) & 1) for q in range(n)]
        _SIGNS[n] = np.stack(cols, axis=1).astype(np.float64)
    return _SIGNS[n]


def expectation_z(state: StateVectorBatch):
    """Per-qubit <Z> of shape [batch, n]; analytic, no shots."""
    probs = ops.abs2(state.amplitudes)
    return ops.matmul(probs, z_sign_matrix(state.n_qubits))


def meyer_wallach(state) -> np.ndarray | float:
    """Global entanglement Q = 2 (1 - mean_k Tr rho_k^2), in [0, 1].

    Accepts a StateVectorBatch, a single state vector, or a [batch, 2^n]
    array; value-level diagnostic only (no gradients).
    """
    if isinstance(state, StateVectorBatch):
        amps = ops.value_of(state.amplitudes)
        n = state.n_qubits
    else:
        amps = ops.value_of(state)
        n = int(round(np.log2(amps.shape[-1])))
    single = amps.ndim == 1
    amps = np.atleast_2d(amps)
    rows = amps.shape[0]
    purity_sum = np.zeros(rows)
    for k in range(n):
        a = amps.reshape(rows, 2 ** k, 2, 2 ** (n - k - 1))
        a = np.moveaxis(a, 2, 1).reshape(rows, 2, -1)
        rho = a @ np.conj(np.swapaxes(a, 1, 2))
        purity_sum += np.sum(rho.real ** 2 + rho.imag ** 2, axis=(1, 2))
    q = 2.0 * (1.0 - purity_sum / n)
    return float(q[0]) if single else q
