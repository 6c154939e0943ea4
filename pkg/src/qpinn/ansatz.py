"""Circuit construction: angle embedding, six ansatz families, five scalings.

The embedding layer rotates each qubit around X by the scaled activation of
the preceding tanh layer. Gate ordering inside the all-to-all meshes is
fixed (outer loop over controls ascending, inner over targets ascending,
skipping the control) so that builds are reproducible even for the
non-commuting CNOT mesh.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from . import qsim
from .autodiff import ops
from .autodiff.ops import BatchedDual
from .errors import ConfigError, DomainError
from .qsim import GateOp, StateVectorBatch

CLAMP_TOL = 1e-12


class AnsatzKind(str, Enum):
    BASIC = "basic"
    STRONGLY = "strongly"
    CROSS_MESH = "cross_mesh"
    CROSS_MESH_2ROT = "cross_mesh_2rot"
    CROSS_MESH_CNOT = "cross_mesh_cnot"
    NO_ENTANGLEMENT = "no_entanglement"


class ScaleKind(str, Enum):
    NONE = "none"
    PI = "pi"
    BIAS = "bias"
    ASIN = "asin"
    ACOS = "acos"


def scale(kind: ScaleKind | str, a):
    """Map an activation in [-1, 1] to an embedding angle in radians.

    Values outside [-1, 1] by at most 1e-12 are clamped with a warning;
    larger excursions raise DomainError.
    """
    kind = ScaleKind(kind)
    v = ops.value_of(a)
    over = np.max(np.abs(v)) - 1.0 if v.size else 0.0
    if over > CLAMP_TOL:
        raise DomainError(f"scale input exceeds [-1, 1] by {over:.3e}")
    if over > 0.0:
        warnings.warn("scale input clamped into [-1, 1] (excursion <= 1e-12)",
                      stacklevel=2)
        a = ops.clamp_unit(a)
    if kind is ScaleKind.NONE:
        return a
    if kind is ScaleKind.PI:
        return a * np.pi
    if kind is ScaleKind.BIAS:
        return (a + 1.0) * (np.pi / 2.0)
    if kind is ScaleKind.ASIN:
        return ops.arcsin(a) + np.pi / 2.0
    return ops.arccos(a)


@dataclass
class CircuitSpec:
    """Ordered gate list: embedding first, then ansatz layers.

    Treated as immutable after construction. ``fused_plan`` caches an
    equivalent execution plan in which CNOT runs collapse to one basis
    permutation and commuting CRZ runs to one diagonal phase multiply.
    """
    kind: AnsatzKind
    n_qubits: int
    n_layers: int
    gates: Tuple[GateOp, ...]
    param_count: int
    _plan: Optional[list] = field(default=None, repr=False, compare=False)

    @property
    def embed_gates(self) -> Tuple[GateOp, ...]:
        return self.gates[:self.n_qubits]

    @property
    def layer_gates(self) -> Tuple[GateOp, ...]:
        return self.gates[self.n_qubits:]

    def fused_plan(self) -> list:
        if self._plan is None:
            self._plan = _build_plan(self.layer_gates, self.n_qubits)
        return self._plan

    def dump(self) -> str:
        """Plain-text gate list, one gate per line, for debugging."""
        lines = []
        for g in self.gates:
            wires = ",".join(str(w) for w in g.wires)
            if not g.param_slots:
                slots = "-"
            else:
                prefix = "embed" if g.source == "embed" else "p"
                slots = prefix + ":" + ",".join(str(s) for s in g.param_slots)
            lines.append(f"{g.kind} {wires} {slots}")
        return "\n".join(lines)


def _mesh_pairs(n: int):
    """All ordered (control, target) pairs, control ascending then target."""
    return [(i, j) for i in range(n) for j in range(n) if j != i]


def _build_plan(gates: Sequence[GateOp], n: int) -> list:
    """Fuse a gate list into (u1 | perm | phases) steps.

    A run of CNOTs composes into one index permutation; a run of CRZs is a
    product of commuting diagonals, i.e. one phase vector linear in its
    angles. Adjacent RX, RZ on the same qubit merge into a single 2x2 block.
    """
    steps: list = []
    i = 0
    while i < len(gates):
        g = gates[i]
        if g.kind == "CNOT":
            j = i
            pairs = []
            while j < len(gates) and gates[j].kind == "CNOT":
                pairs.append(gates[j].wires)
                j += 1
            steps.append(("perm", qsim.permutation_for_cnots(pairs, n)))
            i = j
        elif g.kind == "CRZ":
            j = i
            pairs, slots = [], []
            while j < len(gates) and gates[j].kind == "CRZ":
                pairs.append(gates[j].wires)
                slots.append(gates[j].param_slots[0])
                j += 1
            steps.append(("phases", qsim.crz_mesh_phase_matrix(pairs, n),
                          np.asarray(slots)))
            i = j
        elif (g.kind == "RX" and i + 1 < len(gates)
              and gates[i + 1].kind == "RZ"
              and gates[i + 1].wires == g.wires
              and gates[i + 1].source == g.source == "param"):
            steps.append(("u1", "rxrz", g.wires[0],
                          (g.param_slots[0], gates[i + 1].param_slots[0])))
            i += 2
        else:
            steps.append(("u1", g.kind.lower(), g.wires[0], g.param_slots))
            i += 1
    return steps


def build_circuit(kind: AnsatzKind | str, n_qubits: int = 7,
                  n_layers: int = 4) -> CircuitSpec:
    kind = AnsatzKind(kind)
    entangling = kind is not AnsatzKind.NO_ENTANGLEMENT
    if n_qubits < 1 or n_layers < 1:
        raise ConfigError("n_qubits and n_layers must be positive")
    if entangling and n_qubits < 2:
        raise ConfigError(f"{kind.value} requires at least 2 qubits")

    gates: list[GateOp] = [GateOp("RX", (q,), (q,), source="embed")
                           for q in range(n_qubits)]
    slot = 0

    def take(k: int) -> Tuple[int, ...]:
        nonlocal slot
        out = tuple(range(slot, slot + k))
        slot += k
        return out

    for layer in range(1, n_layers + 1):
        if kind in (AnsatzKind.BASIC, AnsatzKind.STRONGLY,
                    AnsatzKind.CROSS_MESH_CNOT, AnsatzKind.NO_ENTANGLEMENT):
            for q in range(n_qubits):
                gates.append(GateOp("Rot", (q,), take(3)))
        elif kind is AnsatzKind.CROSS_MESH:
            for q in range(n_qubits):
                gates.append(GateOp("RX", (q,), take(1)))
        else:  # CROSS_MESH_2ROT
            for q in range(n_qubits):
                gates.append(GateOp("RX", (q,), take(1)))
                gates.append(GateOp("RZ", (q,), take(1)))

        if kind is AnsatzKind.BASIC:
            for i in range(n_qubits):
                gates.append(GateOp("CNOT", (i, (i + 1) % n_qubits)))
        elif kind is AnsatzKind.STRONGLY:
            # gap cycles 1..n-1 so layers beyond n-1 stay nontrivial
            gap = (layer - 1) % (n_qubits - 1) + 1
            for i in range(n_qubits):
                gates.append(GateOp("CNOT", (i, (i + gap) % n_qubits)))
        elif kind is AnsatzKind.CROSS_MESH_CNOT:
            for i, j in _mesh_pairs(n_qubits):
                gates.append(GateOp("CNOT", (i, j)))
        elif kind in (AnsatzKind.CROSS_MESH, AnsatzKind.CROSS_MESH_2ROT):
            for i, j in _mesh_pairs(n_qubits):
                gates.append(GateOp("CRZ", (i, j), take(1)))

    return CircuitSpec(kind=kind, n_qubits=n_qubits, n_layers=n_layers,
                       gates=tuple(gates), param_count=slot)


def ansatz_param_count(kind: AnsatzKind | str, n_qubits: int = 7,
                       n_layers: int = 4) -> int:
    return build_circuit(kind, n_qubits, n_layers).param_count


def run_circuit(circuit: CircuitSpec, qparams, embed_angles) -> StateVectorBatch:
    """Reference executor: apply every gate in order on a fresh |0..0> batch.

    ``embed_angles`` is [batch, n_qubits] (array or dual); ``qparams`` is the
    flat trainable vector. Used by tests, probes and the equivalence checks;
    the model hot path goes through ``quantum_layer_forward``.
    """
    batch = embed_angles.shape[0]
    state = qsim.init_state(batch, circuit.n_qubits)
    for g in circuit.gates:
        angles = embed_angles if g.source == "embed" else qparams
        state = qsim.apply_gate(state, g, angles)
    return state


# -- model hot path -----------------------------------------------------------


def _product_state(theta, n: int):
    """|phi> = prod_q RX(theta_q)|0>, built by per-qubit doubling."""
    rows = theta.shape[0]
    amp = np.ones((rows, 1), dtype=np.complex128)
    for q in range(n):
        half = ops.reshape(theta[:, q], (rows, 1)) * 0.5
        w0 = ops.make_complex(ops.cos(half), 0.0)
        w1 = ops.make_complex(0.0, -ops.sin(half))
        amp = ops.reshape(ops.stack([amp * w0, amp * w1], axis=2),
                          (rows, 2 ** (q + 1)))
    return amp


def _flip_qubit(amps, n: int, q: int):
    """Apply Pauli-X on wire q (an involutive basis permutation)."""
    perm = np.arange(2 ** n) ^ (1 << (n - q - 1))
    return qsim.apply_permutation(amps, perm)


def _sweep(amps, circuit: CircuitSpec, qparams):
    """Run the fused ansatz plan over a stacked amplitude batch."""
    n = circuit.n_qubits
    for step in circuit.fused_plan():
        tag = step[0]
        if tag == "perm":
            amps = qsim.apply_permutation(amps, step[1])
        elif tag == "phases":
            _, pmat, slots = step
            theta = ops.take_idx(qparams, slots)
            phi = ops.reshape(ops.matmul(pmat, ops.reshape(theta, (len(slots), 1))),
                              (2 ** n,))
            phase = ops.make_complex(ops.cos(phi), ops.sin(phi))
            amps = amps * phase
        else:
            _, kind, q, slots = step
            if kind == "rot":
                u = qsim.rot_coefs(*(qparams[s] for s in slots))
            elif kind == "rxrz":
                u = qsim.rx_rz_coefs(qparams[slots[0]], qparams[slots[1]])
            elif kind == "rx":
                u = qsim.rx_coefs(qparams[slots[0]])
            elif kind == "ry":
                u = qsim.ry_coefs(qparams[slots[0]])
            else:  # rz
                d0, d1 = qsim.rz_coefs(qparams[slots[0]])
                amps = qsim._apply_diag(amps, n, q, d0, d1)
                continue
            amps = qsim.apply_1q(amps, n, q, *u)
    return amps


def _ansatz_transfer(circuit: CircuitSpec, qparams):
    """[2^n, 2^n] batch transfer matrix B with psi_row = phi_row @ B.

    Built by sweeping the basis rows (identity batch) through the fused
    stride-kernel plan; the whole collocation batch then rides through the
    ansatz as a single matrix product, since the ansatz is one linear map
    shared by every point.
    """
    eye = np.eye(2 ** circuit.n_qubits, dtype=np.complex128)
    return _sweep(eye, circuit, qparams)


def _xor_perms(n: int):
    idx = np.arange(2 ** n)
    return [idx ^ (1 << (n - q - 1)) for q in range(n)]


def _qlf_plain(angles: BatchedDual, qparams, circuit: CircuitSpec, transfer):
    """Pure-numpy twin of the dual quantum layer for untaped evaluation.

    The three tangent states are propagated through the product-state
    doubling itself (d(amp (x) w) = damp (x) w + amp (x) dw), then value and
    tangents ride through the ansatz transfer matrix as one stacked GEMM.
    """
    n = circuit.n_qubits
    val = np.asarray(angles.val)
    tan = np.asarray(angles.tan)  # [3, R, n]
    rows = val.shape[0]
    c = np.cos(0.5 * val)
    s = np.sin(0.5 * val)
    amp = np.ones((rows, 1), dtype=np.complex128)
    tans = np.zeros((3, rows, 1), dtype=np.complex128)
    for q in range(n):
        w0 = c[:, q, None]
        w1 = -1j * s[:, q, None]
        dw0 = (-0.5 * s[:, q] * tan[:, :, q])[:, :, None]
        dw1 = (-0.5j * c[:, q] * tan[:, :, q])[:, :, None]
        dim = amp.shape[1]
        nxt_t = np.empty((3, rows, dim, 2), dtype=np.complex128)
        nxt_t[..., 0] = tans * w0 + amp * dw0
        nxt_t[..., 1] = tans * w1 + amp * dw1
        nxt = np.empty((rows, dim, 2), dtype=np.complex128)
        nxt[..., 0] = amp * w0
        nxt[..., 1] = amp * w1
        amp = nxt.reshape(rows, -1)
        tans = nxt_t.reshape(3, rows, -1)
    if transfer is None:
        transfer = _ansatz_transfer(circuit, np.asarray(qparams))
    stacked = np.concatenate([amp[None], tans], axis=0).reshape(4 * rows, -1)
    psi4 = (stacked @ transfer).reshape(4, rows, -1)
    psi = psi4[0]
    sign = qsim.z_sign_matrix(n)
    z_val = (psi.real ** 2 + psi.imag ** 2) @ sign
    cross = 2.0 * np.real(np.conj(psi)[None] * psi4[1:])
    return BatchedDual(z_val, cross @ sign)


def quantum_layer_forward(activations, qparams,
                          circuit: CircuitSpec | AnsatzKind | str,
                          scale_kind: ScaleKind | str, via: str = "matrix",
                          transfer=None):
    """Scaled angle embedding -> PQC -> per-qubit <Z>, shape [batch, n].

    Accepts activations as a dual (derivatives flow through the circuit) or
    a plain/taped array. ``via="matrix"`` applies the ansatz through its
    basis transfer matrix (one GEMM per batch); ``via="gates"`` sweeps the
    batch gate by gate. Both are gate-wise identical to ``run_circuit`` and
    agree to machine precision.
    """
    if not isinstance(circuit, CircuitSpec):
        circuit = build_circuit(circuit, n_qubits=activations.shape[1])
    n = circuit.n_qubits
    if activations.shape[1] != n:
        raise ConfigError(f"expected {n} activations per point")
    angles = scale(scale_kind, activations)
    sign = qsim.z_sign_matrix(n)

    def ansatz_apply(amps):
        if via == "matrix":
            mat = transfer if transfer is not None else _ansatz_transfer(circuit, qparams)
            return ops.matmul(amps, mat)
        return _sweep(amps, circuit, qparams)

    if not isinstance(angles, BatchedDual):
        phi = _product_state(angles, n)
        return ops.matmul(ops.abs2(ansatz_apply(phi)), sign)

    from .autodiff.tape import Tensor
    if (via == "matrix" and not isinstance(angles.val, Tensor)
            and not isinstance(angles.tan, Tensor)
            and not isinstance(qparams, Tensor)
            and not isinstance(transfer, Tensor)):
        return _qlf_plain(angles, qparams, circuit, transfer)

    rows = angles.shape[0]
    phi = _product_state(angles.val, n)
    flipped = [_flip_qubit(phi, n, q) for q in range(n)]
    tangent_states = []
    for k in range(3):
        acc = None
        for q in range(n):
            # d|phi>/d(theta_q) = -(i/2) X_q |phi>
            coef = ops.make_complex(0.0, ops.reshape(angles.tan[k][:, q],
                                                     (rows, 1)) * -0.5)
            term = coef * flipped[q]
            acc = term if acc is None else acc + term
        tangent_states.append(acc)

    stacked = ops.concat([phi] + tangent_states, axis=0)
    swept = ansatz_apply(stacked)
    psi = swept[0:rows]
    z_val = ops.matmul(ops.abs2(psi), sign)
    z_tan = []
    for k in range(3):
        cross = 2.0 * ops.real(ops.conj(psi) * swept[(k + 1) * rows:(k + 2) * rows])
        z_tan.append(ops.matmul(cross, sign))
    return BatchedDual(z_val, ops.stack(z_tan, axis=0))
