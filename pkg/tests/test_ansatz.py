"""Ansatz construction, input scalings, and the quantum layer."""
import warnings

import numpy as np
import pytest

from qpinn import qsim
from qpinn.ansatz import (AnsatzKind, ScaleKind, ansatz_param_count,
                          build_circuit, quantum_layer_forward, run_circuit,
                          scale)
from qpinn.autodiff import lift_inputs, ops
from qpinn.errors import ConfigError, DomainError

TABLE_COUNTS = {
    "basic": 84,
    "strongly": 84,
    "cross_mesh": 196,
    "cross_mesh_2rot": 224,
    "cross_mesh_cnot": 84,
    "no_entanglement": 84,
}


# --- scalings -------------------------------------------------------------------

def test_scale_bias_endpoints():
    assert scale("bias", np.array([-1.0]))[0] == 0.0
    assert np.isclose(scale("bias", np.array([1.0]))[0], np.pi)


def test_scale_acos_midpoint():
    assert np.isclose(scale("acos", np.array([0.0]))[0], np.pi / 2)


def test_scale_asin_endpoint():
    assert np.isclose(scale("asin", np.array([1.0]))[0], np.pi)


def test_scale_none_and_pi():
    a = np.array([-0.5, 0.25])
    assert np.allclose(scale("none", a), a)
    assert np.allclose(scale("pi", a), a * np.pi)


def test_scale_ranges(rng):
    a = rng.uniform(-1, 1, 2000)
    assert np.all(np.abs(scale("pi", a)) <= np.pi)
    for kind in ("bias", "asin", "acos"):
        out = scale(kind, a)
        assert np.all(out >= 0.0) and np.all(out <= np.pi), kind


def test_scale_clamps_with_warning():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        out = scale("acos", np.array([1.0 + 5e-13]))
    assert len(w) == 1
    assert np.isclose(out[0], 0.0)


def test_scale_domain_error():
    with pytest.raises(DomainError):
        scale("acos", np.array([1.0 + 1e-10]))


def test_monotone_scales_preserve_order(rng):
    a = np.sort(rng.uniform(-1, 1, 200))
    for kind in ("bias", "asin"):
        out = scale(kind, a)
        assert np.all(np.diff(out) >= 0), kind
    out = scale("acos", a)
    assert np.all(np.diff(out) <= 0)  # arccos is decreasing


# --- construction ------------------------------------------------------------------

@pytest.mark.parametrize("kind,count", sorted(TABLE_COUNTS.items()))
def test_param_counts_at_7_4(kind, count):
    assert ansatz_param_count(kind, 7, 4) == count


def test_embedding_layer_shape():
    c = build_circuit("basic", 7, 4)
    embed = c.embed_gates
    assert len(embed) == 7
    assert all(g.kind == "RX" and g.source == "embed" for g in embed)
    assert [g.param_slots[0] for g in embed] == list(range(7))


def test_strongly_gap_schedule():
    c = build_circuit("strongly", 7, 4)
    cnots = [g for g in c.layer_gates if g.kind == "CNOT"]
    assert len(cnots) == 28
    for layer in range(4):
        gap = layer % 6 + 1
        for i, g in enumerate(cnots[layer * 7:(layer + 1) * 7]):
            assert g.wires == (i, (i + gap) % 7)


def test_strongly_first_layer_matches_basic():
    basic = build_circuit("basic", 7, 1)
    strongly = build_circuit("strongly", 7, 1)
    assert basic.gates == strongly.gates


def test_strongly_gap_wraps_beyond_n_minus_1():
    c = build_circuit("strongly", 3, 4)
    cnots = [g for g in c.layer_gates if g.kind == "CNOT"]
    gaps = [(g.wires[1] - g.wires[0]) % 3 for g in cnots[::3]]
    assert gaps == [1, 2, 1, 2]


def test_mesh_ordering():
    c = build_circuit("cross_mesh", 4, 1)
    crz = [g.wires for g in c.layer_gates if g.kind == "CRZ"]
    want = [(i, j) for i in range(4) for j in range(4) if j != i]
    assert crz == want


def test_entangling_requires_two_qubits():
    with pytest.raises(ConfigError):
        build_circuit("basic", 1, 1)
    assert build_circuit("no_entanglement", 1, 1).param_count == 3


def test_dump_format():
    text = build_circuit("cross_mesh", 2, 1).dump().splitlines()
    assert text[0] == "RX 0 embed:0"
    assert text[2] == "RX 0 p:0"
    assert text[4] == "CRZ 0,1 p:2"


# --- quantum layer identities ------------------------------------------------------------

def test_no_entanglement_acos_identity(rng):
    a = rng.uniform(-1, 1, (50, 7))
    circuit = build_circuit("no_entanglement", 7, 4)
    out = quantum_layer_forward(a, np.zeros(circuit.param_count), circuit, "acos")
    assert np.max(np.abs(out - a)) <= 1e-10


def test_no_entanglement_asin_sign_flip(rng):
    a = rng.uniform(-1, 1, (50, 7))
    circuit = build_circuit("no_entanglement", 7, 4)
    out = quantum_layer_forward(a, np.zeros(circuit.param_count), circuit, "asin")
    assert np.max(np.abs(out + a)) <= 1e-10


def test_equal_rows_give_equal_outputs(rng):
    circuit = build_circuit("cross_mesh", 4, 2)
    qp = rng.uniform(0, 2 * np.pi, circuit.param_count)
    row = rng.uniform(-1, 1, 4)
    a = np.tile(row, (6, 1))
    out = quantum_layer_forward(a, qp, circuit, "pi")
    assert np.allclose(out, out[0])


def test_no_entanglement_keeps_mw_zero(rng):
    circuit = build_circuit("no_entanglement", 5, 3)
    qp = rng.uniform(0, 2 * np.pi, circuit.param_count)
    emb = rng.uniform(0, np.pi, (8, 5))
    state = run_circuit(circuit, qp, emb)
    assert np.max(np.abs(qsim.meyer_wallach(state))) <= 1e-12


@pytest.mark.parametrize("kind", list(AnsatzKind))
def test_fast_paths_match_naive_gate_path(kind, rng):
    circuit = build_circuit(kind, 3, 2)
    qp = rng.uniform(0, 2 * np.pi, circuit.param_count)
    a = rng.uniform(-0.95, 0.95, (5, 3))
    z_matrix = quantum_layer_forward(a, qp, circuit, "bias", via="matrix")
    z_gates = quantum_layer_forward(a, qp, circuit, "bias", via="gates")
    naive = qsim.expectation_z(run_circuit(circuit, qp, scale("bias", a)))
    assert np.max(np.abs(z_matrix - naive)) <= 1e-12
    assert np.max(np.abs(z_gates - naive)) <= 1e-12


@pytest.mark.parametrize("kind", list(AnsatzKind))
def test_dual_paths_agree(kind, rng):
    """Plain-numpy dual fast path vs generic stacked path (values+tangents)."""
    circuit = build_circuit(kind, 3, 2)
    qp = rng.uniform(0, 2 * np.pi, circuit.param_count)
    xs = rng.uniform(-0.8, 0.8, 5)
    x, y, t = lift_inputs(xs, xs * 0.5, np.abs(xs))
    a = ops.stack([ops.tanh(x), ops.tanh(y * 2.0), ops.tanh(t)], axis=1)
    fast = quantum_layer_forward(a, qp, circuit, "acos", via="matrix")
    slow = quantum_layer_forward(a, qp, circuit, "acos", via="gates")
    assert np.max(np.abs(fast.val - slow.val)) <= 1e-12
    assert np.max(np.abs(fast.tan - slow.tan)) <= 1e-12
