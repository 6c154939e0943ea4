"""Trainer: optimizer, schedules, collapse metrics, run logging."""
import numpy as np
import pytest

from conftest import micro_hybrid_config
from qpinn.errors import ConfigError, MetricError, RunAborted
from qpinn.fdtd import FdtdConfig, energy_history, run_reference
from qpinn.network import ModelConfig, ParameterStore, build_model
from qpinn.training import (AdamState, BHReport, CollapseThresholds, RunLog,
                            RunRow, TrainConfig, adam_step, bh_index,
                            detect_collapse, energy_probe, init_quantum_params,
                            lr_at, probe_entanglement, train)


def tiny_train_config(**overrides):
    base = dict(
        case="vacuum",
        model=ModelConfig(variant="hybrid", ansatz="strongly", scale="acos",
                          hidden_width=8, rff_features=6, n_qubits=3,
                          n_layers_pqc=2, seed=5),
        epochs=3, seed=5, grid=(6, 6, 5), eval_cadence=0, probe_cadence=2,
        probe_grid=(8, 8, 6), mw_probe_points=4, chunk_slices=2)
    base.update(overrides)
    return TrainConfig(**base)


# --- quantum initialization ---------------------------------------------------------

def test_init_zeros():
    assert np.array_equal(init_quantum_params("zeros", 84), np.zeros(84))


def test_init_pi_and_pi_half():
    assert np.allclose(init_quantum_params("pi", 84), np.pi)
    assert np.allclose(init_quantum_params("pi_half", 10), np.pi / 2)


def test_init_reg_reproducible_in_range():
    a = init_quantum_params("reg", 84, seed=7)
    b = init_quantum_params("reg", 84, seed=7)
    assert np.array_equal(a, b)
    assert np.all(a >= 0.0) and np.all(a < 2 * np.pi)
    assert not np.array_equal(a, init_quantum_params("reg", 84, seed=8))


def test_init_unknown_strategy():
    with pytest.raises(ConfigError):
        init_quantum_params("fancy", 84)
    with pytest.raises(ConfigError):
        tiny_train_config(init_strategy="fancy")


# --- learning-rate schedule -----------------------------------------------------------

@pytest.mark.parametrize("epoch,lr", [(0, 0.001), (1999, 0.001),
                                      (2000, 0.00085), (4000, 0.0007225)])
def test_lr_schedule(epoch, lr):
    assert np.isclose(lr_at(epoch), lr, rtol=1e-12)


# --- Adam ------------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    params = ParameterStore(np.array([1.0, -2.0, 3.0]), 3, 0, 1.5)
    state = AdamState.zeros(3)
    adam_step(params, np.zeros(3), state, lr=0.1)
    assert np.array_equal(params.flat, [1.0, -2.0, 3.0])


def test_adam_converges_on_quadratic():
    params = ParameterStore(np.array([5.0]), 1, 0, 1.5)
    state = AdamState.zeros(1)
    for _ in range(500):
        grad = 2.0 * (params.flat - 1.7)
        adam_step(params, grad, state, lr=0.05)
    assert abs(params.flat[0] - 1.7) < 1e-3


def test_adam_rejects_nonfinite_gradient():
    params = ParameterStore(np.zeros(2), 2, 0, 1.5)
    with pytest.raises(RunAborted):
        adam_step(params, np.array([np.nan, 0.0]), AdamState.zeros(2), 0.1)


# --- black-hole index --------------------------------------------------------------------

def test_bh_index_constant_energy():
    val, raw = bh_index(np.ones(10))
    assert val == 0.0 and raw == 0.0


def test_bh_index_total_collapse():
    u = np.ones(10)
    u[1:] = 0.0
    val, _ = bh_index(u)
    assert val == 1.0


def test_bh_index_direct_formula():
    u = np.array([1.0, 0.8, 0.35, 0.9])
    val, raw = bh_index(u)
    assert np.isclose(val, 0.65)
    assert np.isclose(raw, 0.65)


def test_bh_index_clamps_but_reports_raw():
    u = np.array([1.0, 1.5, 2.0])  # energy growth: raw index negative
    val, raw = bh_index(u)
    assert val == 0.0
    assert np.isclose(raw, -0.5)


def test_bh_index_rejects_zero_initial_energy():
    with pytest.raises(MetricError):
        bh_index(np.zeros(5))


def test_bh_index_respects_times_mask():
    u = np.array([1.0, 0.2, 0.9])
    times = np.array([0.0, 0.0, 0.5])  # duplicate t=0 sample excluded
    val, _ = bh_index(u, times)
    assert np.isclose(val, 1.0 - 0.9)


def test_fdtd_reference_trajectory_has_negligible_bh_index():
    hist = run_reference(FdtdConfig(nx=64, ny=64, case="vacuum", n_snapshots=30))
    val, _ = bh_index(energy_history(hist), hist.times)
    assert val <= 0.01


# --- collapse detection ---------------------------------------------------------------------

def _log_with(i_bh, phys):
    row = RunRow(epoch=0, lr=1e-3, phys=phys, ic=0.0, sym=0.0, energy=0.0,
                 total=phys, grad_norm_all=0.0, grad_var_all=0.0,
                 grad_norm_q=None, grad_var_q=None, mw_q=None, i_bh=i_bh,
                 l2_err=None)
    return RunLog(rows=[row], final_i_bh=i_bh)


def test_detect_collapse_positive():
    report = detect_collapse(_log_with(0.99, 1e-4))
    assert report.collapsed and report.ensemble_bh is None


def test_detect_collapse_negative_low_index():
    assert not detect_collapse(_log_with(0.1, 1e-4)).collapsed


def test_detect_collapse_negative_high_phys():
    assert not detect_collapse(_log_with(0.99, 50.0)).collapsed


def test_detect_collapse_ensemble():
    logs = [_log_with(0.95, 1e-4) for _ in range(5)]
    report = detect_collapse(logs)
    assert report.ensemble_bh is True
    mixed = logs[:4] + [_log_with(0.1, 1e-4)]
    assert detect_collapse(mixed).ensemble_bh is False  # 0.8 < 0.95


def test_detect_collapse_requires_probe():
    with pytest.raises(MetricError):
        detect_collapse(_log_with(None, 1e-4))


# --- probes ------------------------------------------------------------------------------------

def test_probe_entanglement_no_entanglement_is_zero(rng):
    model = build_model(micro_hybrid_config(ansatz="no_entanglement", seed=6))
    params = model.init_params()
    q = probe_entanglement(model, params, rng.uniform(-1, 1, 8),
                           rng.uniform(-1, 1, 8), rng.uniform(0, 1.5, 8))
    assert abs(q) <= 1e-12


def test_probe_entanglement_deterministic(rng):
    model = build_model(micro_hybrid_config(seed=6))
    params = model.init_params()
    x, y, t = (rng.uniform(-1, 1, 8) for _ in range(3))
    assert probe_entanglement(model, params, x, y, t) == \
        probe_entanglement(model, params, x, y, t)


def test_probe_entanglement_strongly_in_unit_interval(rng):
    model = build_model(micro_hybrid_config(seed=8))
    params = model.init_params()
    q = probe_entanglement(model, params, rng.uniform(-1, 1, 8),
                           rng.uniform(-1, 1, 8), rng.uniform(0, 1.5, 8))
    assert 0.0 < q <= 1.0


def test_probe_entanglement_classical_is_none():
    model = build_model(ModelConfig(variant="classical_reduced",
                                    hidden_width=8, rff_features=6))
    assert probe_entanglement(model, model.init_params(),
                              np.zeros(2), np.zeros(2), np.zeros(2)) is None


def test_energy_probe_positive_for_untrained_model():
    model = build_model(micro_hybrid_config(seed=10))
    params = model.init_params()
    from qpinn.physics import MaterialMap
    u = energy_probe(model, params, MaterialMap("vacuum"), 8, 8,
                     np.linspace(0, 1.5, 4))
    assert u.shape == (4,)
    assert np.all(u >= 0.0)


# --- the training loop ---------------------------------------------------------------------------

def test_one_epoch_emits_one_row():
    result = train(tiny_train_config(epochs=1, probe_cadence=1))
    assert len(result.log.rows) == 1
    row = result.log.rows[0]
    assert row.epoch == 0
    assert np.isfinite(row.total)
    assert row.i_bh is not None


def test_training_reduces_loss_smoke():
    # micro smoke run; the 24^3 regression baseline lives in the slow suite
    result = train(tiny_train_config(epochs=25, probe_cadence=0))
    first, last = result.log.rows[0], result.log.rows[-1]
    assert last.total < first.total


def test_training_is_deterministic(tmp_path):
    cfg = tiny_train_config(epochs=3)
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        d.mkdir()
        train(cfg, outdir=d)
    assert (d1 / "metrics.csv").read_bytes() == (d2 / "metrics.csv").read_bytes()
    assert (d1 / "final.ckpt").read_bytes() == (d2 / "final.ckpt").read_bytes()


def test_training_logs_match_schema():
    result = train(tiny_train_config(epochs=2, probe_cadence=1))
    for row in result.log.rows:
        cells = row.csv_cells()
        assert len(cells) == 14
        assert all(isinstance(c, str) for c in cells)
    assert result.log.rows[0].grad_norm_q is not None
    assert result.log.rows[0].mw_q is not None


def test_training_requires_reference_for_l2_cadence():
    with pytest.raises(ConfigError):
        train(tiny_train_config(eval_cadence=10))


def test_training_l2_eval_against_reference():
    ref = run_reference(FdtdConfig(nx=16, ny=16, case="vacuum", t_end=1.5,
                                   n_snapshots=4))
    result = train(tiny_train_config(epochs=2, eval_cadence=1), reference=ref)
    assert result.log.final_l2 is not None
    assert result.log.rows[0].l2_err > 0


def test_training_aborts_on_nonfinite_loss(tmp_path, monkeypatch):
    import qpinn.training as tr
    real_cls = tr.LossEvaluator

    class BoomEvaluator:
        def __init__(self, *a, **kw):
            self.real = real_cls(*a, **kw)

        def initial_bin_losses(self, params):
            return np.zeros(5)

        def evaluate(self, params, weights=None, tape=False):
            out = self.real.evaluate(params, weights=weights, tape=tape)
            out.breakdown.total = float("nan")
            return out

    monkeypatch.setattr(tr, "LossEvaluator", BoomEvaluator)
    outdir = tmp_path / "run"
    outdir.mkdir()
    with pytest.raises(RunAborted):
        train(tiny_train_config(epochs=2), outdir=outdir)
    assert (outdir / "last_good.ckpt").exists()


def test_summary_contents():
    cfg = tiny_train_config(epochs=2, probe_cadence=1)
    result = train(cfg)
    s = result.summary(cfg)
    assert s["counts"]["total"] == result.model.total_parameter_count
    assert s["epochs"] == 2
    assert s["i_bh"] is not None
    assert s["collapsed"] in (True, False)
    assert s["first_total"] >= s["final"]["total"] * 0.0  # present and finite


def test_training_dielectric_balanced_smoke():
    cfg = tiny_train_config(case="dielectric", epochs=3,
                            phys_loss_mode="diel_balanced")
    result = train(cfg)
    assert len(result.log.rows) == 3
    assert np.isfinite(result.log.rows[-1].total)


def test_training_asymmetric_case_smoke():
    cfg = tiny_train_config(case="asymmetric", epochs=2)
    result = train(cfg)
    assert result.log.rows[0].sym == 0.0  # symmetry loss disabled
