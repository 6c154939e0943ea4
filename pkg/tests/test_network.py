"""Model construction: counts, periodicity, RFF, checkpoints."""
import numpy as np
import pytest

from conftest import micro_hybrid_config
from qpinn.errors import ConfigError
from qpinn.network import (ModelConfig, ParameterStore, build_model,
                           load_checkpoint, periodic_map, rff_forward,
                           save_checkpoint)

TABLE1 = [
    ("classical_regular", None, 82820),
    ("classical_reduced", None, 66308),
    ("classical_extra", None, 99332),
    ("hybrid", "cross_mesh", 67044),
    ("hybrid", "cross_mesh_2rot", 67072),
    ("hybrid", "cross_mesh_cnot", 66932),
    ("hybrid", "no_entanglement", 66932),
    ("hybrid", "basic", 66932),
    ("hybrid", "strongly", 66932),
]


# --- periodic map ---------------------------------------------------------------

def test_periodic_map_wraps_exactly():
    f_lo = periodic_map(np.array([-1.0]), np.array([0.2]), np.array([0.3]), tau=3.0)
    f_hi = periodic_map(np.array([1.0]), np.array([0.2]), np.array([0.3]), tau=3.0)
    assert np.max(np.abs(f_lo - f_hi)) <= 1e-12


def test_periodic_map_origin():
    f = periodic_map(np.zeros(1), np.zeros(1), np.zeros(1), tau=3.0)
    assert np.allclose(f, [[0, 1, 0, 1, 0, 1]])


def test_periodic_map_t_zero_any_tau():
    for tau in (0.5, 3.0, 11.0):
        f = periodic_map(np.array([0.3]), np.array([-0.4]), np.zeros(1), tau=tau)
        assert f[0, 4] == 0.0
        assert f[0, 5] == 1.0


# --- RFF --------------------------------------------------------------------------

def test_rff_zero_omega():
    out = rff_forward(np.ones((3, 6)), np.zeros((128, 6)))
    assert out.shape == (3, 256)
    assert np.allclose(out[:, :128], 1.0)
    assert np.allclose(out[:, 128:], 0.0)


def test_rff_quarter_period_row():
    omega = np.zeros((4, 6))
    omega[0, 0] = np.pi / 2
    feats = np.zeros((1, 6))
    feats[0, 0] = 1.0
    out = rff_forward(feats, omega)
    assert np.isclose(out[0, 0], 0.0, atol=1e-15)
    assert np.isclose(out[0, 4], 1.0)


def test_rff_bounded(rng):
    omega = rng.normal(size=(16, 6))
    out = rff_forward(rng.normal(size=(40, 6)), omega)
    assert np.all(np.abs(out) <= 1.0)


# --- parameter counts (Table 1 reconstruction) ----------------------------------------

@pytest.mark.parametrize("variant,ansatz,total", TABLE1)
def test_parameter_counts(variant, ansatz, total):
    cfg = ModelConfig(variant=variant, ansatz=ansatz,
                      scale="acos" if ansatz else None)
    model = build_model(cfg)
    assert model.total_parameter_count == total
    if variant == "hybrid":
        assert model.n_classical == 66848


def test_classical_regular_layer_breakdown():
    model = build_model(ModelConfig(variant="classical_regular"))
    sizes = {name: int(np.prod(shape, dtype=int))
             for name, _, shape in model.layout}
    assert sizes["h0.W"] + sizes["h0.b"] == 32896
    assert sizes["h1.W"] + sizes["h1.b"] == 16512
    assert sizes["out.W"] + sizes["out.b"] == 387
    assert sizes["tau_raw"] == 1


def test_hybrid_requires_ansatz_and_scale():
    with pytest.raises(ConfigError):
        ModelConfig(variant="hybrid", ansatz=None, scale=None)
    with pytest.raises(ConfigError):
        ModelConfig(variant="nope")


# --- forward behaviour ---------------------------------------------------------------

@pytest.mark.parametrize("variant,ansatz", [
    ("classical_regular", None), ("hybrid", "strongly")])
def test_strict_spatial_periodicity(variant, ansatz, rng):
    cfg = ModelConfig(variant=variant, ansatz=ansatz,
                      scale="acos" if ansatz else None,
                      hidden_width=12, rff_features=8,
                      n_qubits=3 if ansatz else 7,
                      n_layers_pqc=2, seed=11)
    model = build_model(cfg)
    params = model.init_params()
    x = rng.uniform(-1, 1, 20)
    y = rng.uniform(-1, 1, 20)
    t = rng.uniform(0, 1.5, 20)
    base = model.predict(params, x, y, t)
    shifted = model.predict(params, x + 2.0, y - 2.0, t)
    for name in ("ez", "hx", "hy"):
        assert np.max(np.abs(getattr(base, name) - getattr(shifted, name))) <= 1e-12


def test_zero_parameters_give_zero_fields(rng):
    model = build_model(ModelConfig(variant="classical_reduced", seed=2))
    params = model.init_params()
    params.flat[:] = 0.0
    fb = model.predict(params, rng.uniform(-1, 1, 9), rng.uniform(-1, 1, 9),
                       rng.uniform(0, 1.5, 9))
    assert np.allclose(fb.ez, 0.0)
    assert np.allclose(fb.hx, 0.0)
    assert np.allclose(fb.hy, 0.0)


def test_untrained_model_finite_and_seed_deterministic(rng):
    x = rng.uniform(-1, 1, 16)
    y = rng.uniform(-1, 1, 16)
    t = rng.uniform(0, 1.5, 16)
    outs = []
    for _ in range(2):
        model = build_model(micro_hybrid_config(seed=21))
        fb = model.predict(model.init_params(), -x, y, t)
        assert np.all(np.isfinite(fb.ez))
        outs.append(fb.ez)
    assert np.array_equal(outs[0], outs[1])


def test_learned_period_initialized_at_twice_domain():
    model = build_model(micro_hybrid_config(t_domain=0.7))
    params = model.init_params()
    assert np.isclose(params.learned_time_period, 1.4, rtol=1e-12)
    assert params.learned_time_period > 0


def test_parameter_store_sections():
    model = build_model(micro_hybrid_config())
    params = model.init_params()
    assert params.classical.size == model.n_classical
    assert params.quantum.size == model.n_quantum
    assert np.all(params.quantum >= 0.0) and np.all(params.quantum < 2 * np.pi)
    # tau_raw is the last classical entry
    assert params.tau_raw == params.classical[-1]


# --- checkpoints -------------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    model = build_model(micro_hybrid_config(seed=9))
    params = model.init_params()
    params.flat[5] = 17.25
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, params)
    model2, params2 = load_checkpoint(path)
    assert model2.total_parameter_count == model.total_parameter_count
    assert np.array_equal(params2.flat, params.flat)
    x = rng.uniform(-1, 1, 7)
    fb1 = model.predict(params, x, x, np.abs(x))
    fb2 = model2.predict(params2, x, x, np.abs(x))
    assert np.array_equal(fb1.ez, fb2.ez)

    path2 = tmp_path / "again.ckpt"
    save_checkpoint(path2, model2, params2)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b'{"format": "something"}\n')
    with pytest.raises(ConfigError):
        load_checkpoint(p)


def test_full_model_input_jacobian_vs_central_differences(rng):
    """Default-width 7-qubit hybrid at 5 random points: d(fields)/d(x,y,t)."""
    model = build_model(ModelConfig(variant="hybrid", ansatz="strongly",
                                    scale="acos", seed=6, t_domain=1.5))
    params = model.init_params()
    bound = model.bind(params)
    x = rng.uniform(-1, 1, 5)
    y = rng.uniform(-1, 1, 5)
    t = rng.uniform(0, 1.5, 5)
    _, dv = model.forward(bound, x, y, t, derivs=True)

    h = 1e-5
    for axis, arrays in enumerate(((x + h, y, t), (x, y + h, t), (x, y, t + h))):
        minus = [x.copy(), y.copy(), t.copy()]
        minus[axis] -= h
        fp, _ = model.forward(bound, *arrays)
        fm, _ = model.forward(bound, *minus)
        for name in ("ez", "hx", "hy"):
            fd = (getattr(fp, name) - getattr(fm, name)) / (2 * h)
            ad = getattr(dv, name)[axis]
            assert np.max(np.abs(ad - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))
