"""Oracle-backed verification suites behind ``qpinn verify``.

Each check returns (name, observed, tolerance, passed). The oracles are the
slow independent implementations from ``oracles``: dense matrix products
for circuits, central finite differences for gradients, and closed-form
field solutions for the physics identities.
"""
from __future__ import annotations

import numpy as np

from . import ansatz, oracles, qsim
from .ansatz import AnsatzKind, build_circuit
from .autodiff import central_difference, fd_compare
from .network import FieldBatch, FieldDerivs, ModelConfig, ParameterStore, build_model
from .physics import (CollocationGrid, LossEvaluator, MaterialMap,
                      energy_residual, pde_residuals, physics_loss,
                      symmetry_loss)

Check = tuple


def _random_circuit_cases(n_random: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    kinds = list(AnsatzKind)
    for i in range(n_random):
        kind = kinds[i % len(kinds)]
        n = int(rng.integers(2, 5))
        layers = int(rng.integers(1, 3))
        circuit = build_circuit(kind, n, layers)
        qp = rng.uniform(0.0, 2.0 * np.pi, circuit.param_count)
        emb = rng.uniform(0.0, np.pi, (1, n))
        yield circuit, qp, emb


def qsim_suite(n_random: int = 200) -> list:
    checks = []
    worst = 0.0
    for circuit, qp, emb in _random_circuit_cases(n_random):
        state = ansatz.run_circuit(circuit, qp, emb)
        ref = oracles.statevector_by_matrix(circuit.gates, circuit.n_qubits,
                                            qp, embed=emb[0])
        worst = max(worst, float(np.max(np.abs(state.amplitudes[0] - ref))))
    checks.append(("statevector vs dense-matrix oracle (random circuits)",
                   worst, 1e-12, worst <= 1e-12))

    thetas = np.linspace(0.0, 2.0 * np.pi, 100)
    state = qsim.init_state(100, 1)
    state = qsim.StateVectorBatch(
        qsim.apply_rx(state.amplitudes, 1, 0, thetas), 1)
    z = qsim.expectation_z(state)[:, 0]
    err = float(np.max(np.abs(z - np.cos(thetas))))
    checks.append(("<Z> after RX(theta)|0> equals cos(theta)", err, 1e-12,
                   err <= 1e-12))

    rng = np.random.default_rng(11)
    amps = qsim.init_state(1, 5).amplitudes
    for _ in range(100):
        q = int(rng.integers(0, 5))
        kind = rng.choice(["RX", "RY", "RZ", "Rot", "CNOT", "CRZ"])
        ang = rng.uniform(0, 2 * np.pi, 3)
        if kind == "CNOT":
            t = int(rng.integers(0, 5))
            t = (q + 1) % 5 if t == q else t
            amps = qsim.apply_cnot(amps, 5, q, t)
        elif kind == "CRZ":
            t = (q + 2) % 5
            amps = qsim.apply_crz(amps, 5, q, t, ang[0])
        elif kind == "Rot":
            amps = qsim.apply_rot(amps, 5, q, *ang)
        else:
            fn = {"RX": qsim.apply_rx, "RY": qsim.apply_ry, "RZ": qsim.apply_rz}[kind]
            amps = fn(amps, 5, q, ang[0])
    drift = abs(float(np.sum(np.abs(amps) ** 2)) - 1.0)
    checks.append(("norm drift after 100 random gates", drift, 1e-10,
                   drift <= 1e-10))

    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / np.sqrt(2)
    ghz = np.zeros(2 ** 7, dtype=complex)
    ghz[0] = ghz[-1] = 1 / np.sqrt(2)
    product = np.kron(np.array([np.cos(0.3), np.sin(0.3)]),
                      np.array([np.cos(1.1), -1j * np.sin(1.1)]))
    mw_err = max(abs(qsim.meyer_wallach(bell) - 1.0),
                 abs(qsim.meyer_wallach(ghz) - 1.0),
                 abs(qsim.meyer_wallach(product)))
    checks.append(("Meyer-Wallach on product/Bell/GHZ states", mw_err, 1e-12,
                   mw_err <= 1e-12))
    return checks


def grad_suite() -> list:
    checks = []
    cfg = ModelConfig(variant="hybrid", hidden_width=6, rff_features=5,
                      n_qubits=3, n_layers_pqc=2, ansatz="strongly",
                      scale="acos", seed=5, t_domain=1.5)
    model = build_model(cfg)
    params = model.init_params()
    grid = CollocationGrid(4, 4, 4, 1.5)
    ev = LossEvaluator(model, grid, MaterialMap("vacuum"), case="vacuum",
                       energy_enabled=True, chunk_slices=2)
    res = ev.evaluate(params, tape=True)

    def f(flat):
        p = ParameterStore(flat, params.n_classical, params.n_quantum,
                           params.t_domain)
        return ev.evaluate(p).breakdown.total

    fd = central_difference(f, params.flat)
    ok, worst, _ = fd_compare(res.grad, fd)
    checks.append(("hybrid micro-model gradient vs central differences",
                   worst, 1e-5, ok))

    from .autodiff.tape import Tensor
    theta = Tensor(np.full(10, 0.1))
    loss = (theta * theta).sum()
    loss.backward()
    err = float(np.max(np.abs(theta.grad - 0.2)))
    checks.append(("quadratic loss analytic gradient", err, 1e-14, err <= 1e-14))

    from .autodiff import lift_inputs, ops
    x, y, t = lift_inputs(np.array([0.3, -0.4]), np.zeros(2), np.zeros(2))
    s = ops.sin(x * np.pi)
    err = float(np.max(np.abs(s.tan[0] - np.pi * np.cos(np.pi * x.val))))
    checks.append(("forward-mode d/dx of sin(pi x)", err, 1e-14, err <= 1e-14))
    return checks


def physics_suite() -> list:
    checks = []
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 500)
    y = rng.uniform(-1, 1, 500)
    t = rng.uniform(0, 1.5, 500)
    ez, hx, hy = oracles.plane_wave(x, y, t)
    d_ez, d_hx, d_hy = oracles.plane_wave_derivs(x, y, t)
    fields = FieldBatch(ez, hx, hy)
    derivs = FieldDerivs(d_ez, d_hx, d_hy)
    eps = np.ones_like(x)
    res = pde_residuals(fields, derivs, eps)
    phys = float(physics_loss(res, eps, "vac"))
    checks.append(("plane-wave physics loss", phys, 1e-12, phys <= 1e-12))
    e_res = energy_residual(fields, derivs, eps)
    e_loss = float(np.mean(e_res ** 2))
    checks.append(("plane-wave energy residual loss", e_loss, 1e-12,
                   e_loss <= 1e-12))

    fields_r = FieldBatch(rng.normal(size=500), rng.normal(size=500),
                          rng.normal(size=500))
    derivs_r = FieldDerivs(rng.normal(size=(3, 500)), rng.normal(size=(3, 500)),
                           rng.normal(size=(3, 500)))
    eps_r = np.where(x > 0.3, 4.0, 1.0)
    r1, r2, r3 = pde_residuals(fields_r, derivs_r, eps_r)
    combo = eps_r * fields_r.ez * r1 + fields_r.hx * r2 + fields_r.hy * r3
    direct = energy_residual(fields_r, derivs_r, eps_r)
    ident = float(np.max(np.abs(direct - combo)))
    checks.append(("energy residual equals residual combination", ident,
                   1e-10, ident <= 1e-10))
    return checks


SUITES = {"qsim": qsim_suite, "grad": grad_suite, "physics": physics_suite}


def run_suite(name: str) -> list:
    if name == "all":
        out = []
        for fn in SUITES.values():
            out.extend(fn())
        return out
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
