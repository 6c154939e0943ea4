"""Training orchestration: Adam with step decay, diagnostics, collapse metrics.

Every epoch does one full-batch gradient step over the fixed collocation
grid and logs the loss breakdown, gradient norm/variance for the full and
quantum-only parameter vectors, and the Meyer-Wallach entanglement of the
circuit at a fixed probe batch. The normalized total-energy history
U(t)/U(0) is probed on a separate spatial grid at a configurable cadence;
its minimum over positive times defines the black-hole index I_BH.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .ansatz import run_circuit, scale as scale_angles
from .autodiff import GradientReport
from .errors import ConfigError, MetricError, RunAborted
from .fdtd import FieldHistory, total_energy
from .network import Model, ModelConfig, ParameterStore, build_model, save_checkpoint
from .physics import (CollocationGrid, LossEvaluator, MaterialMap, PulseSpec,
                      default_t_end, time_bin_weights)
from .qsim import meyer_wallach

INIT_STRATEGIES = ("reg", "zeros", "pi", "pi_half")


@dataclass
class TrainConfig:
    case: str = "vacuum"
    model: ModelConfig = field(default_factory=lambda: ModelConfig(
        variant="hybrid", ansatz="strongly", scale="acos"))
    energy_loss_enabled: bool = True
    phys_loss_mode: Optional[str] = None  # per-case default when None
    epochs: int = 1000
    lr0: float = 1e-3
    lr_decay: float = 0.85
    lr_decay_every: int = 2000
    seed: int = 0
    init_strategy: str = "reg"
    grid: tuple = (64, 64, 64)
    t_end: Optional[float] = None
    eps_r: float = 4.0
    slab_x0: float = 0.3
    eval_cadence: int = 250
    probe_cadence: int = 25
    probe_grid: tuple = (64, 64, 32)
    mw_probe_points: int = 32
    adaptive_weighting: bool = True
    kappa: float = 1.0
    chunk_slices: int = 4

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError("lr0 must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ConfigError(f"unknown init strategy {self.init_strategy!r}")
        if self.case not in ("vacuum", "dielectric", "asymmetric"):
            raise ConfigError(f"unknown case {self.case!r}")

    def resolved_t_end(self) -> float:
        return self.t_end if self.t_end is not None else default_t_end(self.case)


def init_quantum_params(strategy: str, count: int, seed: int = 0) -> np.ndarray:
    """reg -> iid uniform [0, 2pi); zeros / pi / pi_half -> constants."""
    if strategy == "reg":
        return np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, count)
    if strategy == "zeros":
        return np.zeros(count)
    if strategy == "pi":
        return np.full(count, np.pi)
    if strategy == "pi_half":
        return np.full(count, np.pi / 2.0)
    raise ConfigError(f"unknown init strategy {strategy!r}")


def lr_at(epoch: int, lr0: float = 1e-3, decay: float = 0.85,
          every: int = 2000) -> float:
    return lr0 * decay ** (epoch // every)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))


def adam_step(params: ParameterStore, grad: np.ndarray, state: AdamState,
              lr: float) -> None:
    """Standard bias-corrected Adam update, in place on the flat vector."""
    if not np.all(np.isfinite(grad)):
        raise RunAborted("non-finite gradient")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1 ** state.t)
    vhat = state.v / (1.0 - state.beta2 ** state.t)
    params.flat -= lr * mhat / (np.sqrt(vhat) + state.eps)


# -- collapse metrics -------------------------------------------------------------


def bh_index(u_history: Sequence[float], times: Optional[Sequence[float]] = None):
    """(clamped, raw) black-hole index 1 - min_{t >= delta} U(t)/U(0).

    ``delta`` is the smallest positive evaluation time: the t = 0 entry is
    excluded, every later sample counts.
    """
    u = np.asarray(u_history, dtype=np.float64)
    if u[0] <= 0.0:
        raise MetricError("U(0) must be positive to normalize the energy history")
    u_tilde = u / u[0]
    if times is not None:
        mask = np.asarray(times) > 0.0
    else:
        mask = np.arange(len(u)) > 0
    if not np.any(mask):
        raise MetricError("energy history needs at least one positive time")
    raw = 1.0 - float(np.min(u_tilde[mask]))
    return float(np.clip(raw, 0.0, 1.0)), raw


@dataclass
class CollapseThresholds:
    """I_BH >= i_bh with L_phys <= phys declares collapse to the trivial
    solution; the phys bound separates collapse from plain divergence."""
    i_bh: float = 0.9
    phys: float = 1.0


@dataclass
class BHReport:
    i_bh: float
    collapsed: bool
    ensemble_bh: Optional[bool] = None


def detect_collapse(runlogs, thresholds: Optional[CollapseThresholds] = None) -> BHReport:
    """Collapse verdict for one RunLog or an ensemble (list) of RunLogs."""
    th = thresholds or CollapseThresholds()
    logs = runlogs if isinstance(runlogs, (list, tuple)) else [runlogs]
    flags, i_bhs = [], []
    for log in logs:
        i_bh = log.final_i_bh
        phys = log.rows[-1].phys
        if i_bh is None:
            raise MetricError("run has no energy probe; cannot assess collapse")
        flags.append(i_bh >= th.i_bh and phys <= th.phys)
        i_bhs.append(i_bh)
    if len(logs) == 1:
        return BHReport(i_bh=i_bhs[0], collapsed=flags[0], ensemble_bh=None)
    fraction = float(np.mean(flags))
    return BHReport(i_bh=float(np.max(i_bhs)), collapsed=all(flags),
                    ensemble_bh=fraction > 0.95)


# -- probes ------------------------------------------------------------------------


def probe_entanglement(model: Model, params: ParameterStore,
                       x, y, t) -> Optional[float]:
    """Mean Meyer-Wallach Q of the circuit state at the probe inputs;
    None for classical variants."""
    if model.circuit is None:
        return None
    acts = model.adapter_activations(params, x, y, t)
    angles = scale_angles(model.config.scale, acts)
    state = run_circuit(model.circuit, params.quantum, angles)
    return float(np.mean(meyer_wallach(state)))


def energy_probe(model: Model, params: ParameterStore, material: MaterialMap,
                 nx: int, ny: int, times: np.ndarray) -> np.ndarray:
    """U_theta(t_k) on a collocated spatial grid decoupled from training."""
    xs = -1.0 + 2.0 * np.arange(nx) / nx
    ys = -1.0 + 2.0 * np.arange(ny) / ny
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    xf, yf = xx.ravel(), yy.ravel()
    eps = material.epsilon_at(xf, yf)
    out = np.zeros(len(times))
    for k, t in enumerate(times):
        fb = model.predict(params, xf, yf, np.full_like(xf, t))
        out[k] = total_energy(fb.ez, fb.hx, fb.hy, eps, 2.0 / nx, 2.0 / ny)
    return out


def l2_against_reference(model: Model, params: ParameterStore,
                         reference: FieldHistory) -> float:
    """Relative L2 error of E_z on the reference snapshot grid."""
    yy, xx = np.meshgrid(reference.ys, reference.xs, indexing="ij")
    xf, yf = xx.ravel(), yy.ravel()
    num = 0.0
    den = 0.0
    for k, t in enumerate(reference.times):
        fb = model.predict(params, xf, yf, np.full_like(xf, t))
        ref = reference.ez[k].ravel()
        num += float(np.sum((fb.ez - ref) ** 2))
        den += float(np.sum(ref * ref))
    if den == 0.0:
        raise MetricError("reference field has zero norm")
    return float(np.sqrt(num / den))


# -- run log -----------------------------------------------------------------------

CSV_COLUMNS = ("epoch", "lr", "phys", "ic", "sym", "energy", "total",
               "grad_norm_all", "grad_var_all", "grad_norm_q", "grad_var_q",
               "mw_q", "i_bh", "l2_err")


@dataclass
class RunRow:
    epoch: int
    lr: float
    phys: float
    ic: float
    sym: float
    energy: float
    total: float
    grad_norm_all: float
    grad_var_all: float
    grad_norm_q: Optional[float]
    grad_var_q: Optional[float]
    mw_q: Optional[float]
    i_bh: Optional[float]
    l2_err: Optional[float]
    bin_phys: tuple = ()

    def csv_cells(self):
        def fmt(v):
            return "" if v is None else repr(v)
        return [str(self.epoch)] + [fmt(v) for v in
                (self.lr, self.phys, self.ic, self.sym, self.energy, self.total,
                 self.grad_norm_all, self.grad_var_all, self.grad_norm_q,
                 self.grad_var_q, self.mw_q, self.i_bh, self.l2_err)]


@dataclass
class RunLog:
    rows: List[RunRow] = field(default_factory=list)
    wall_s: float = 0.0
    final_i_bh: Optional[float] = None
    final_i_bh_raw: Optional[float] = None
    final_l2: Optional[float] = None
    energy_history: Optional[np.ndarray] = None

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(",".join(CSV_COLUMNS) + "\n")
            for row in self.rows:
                f.write(",".join(row.csv_cells()) + "\n")


@dataclass
class TrainResult:
    log: RunLog
    model: Model
    params: ParameterStore

    def summary(self, config: TrainConfig,
                thresholds: Optional[CollapseThresholds] = None) -> dict:
        last = self.log.rows[-1]
        report = None
        if self.log.final_i_bh is not None:
            report = detect_collapse(self.log, thresholds)
        return {
            "case": config.case,
            "variant": config.model.variant,
            "ansatz": config.model.ansatz,
            "scale": config.model.scale,
            "energy_loss_enabled": config.energy_loss_enabled,
            "seed": config.seed,
            "epochs": len(self.log.rows),
            "counts": {
                "classical": self.model.n_classical,
                "quantum": self.model.n_quantum,
                "total": self.model.total_parameter_count,
            },
            "final": {
                "phys": last.phys, "ic": last.ic, "sym": last.sym,
                "energy": last.energy, "total": last.total,
            },
            "first_total": self.log.rows[0].total,
            "final_l2": self.log.final_l2,
            "i_bh": self.log.final_i_bh,
            "i_bh_raw": self.log.final_i_bh_raw,
            "collapsed": report.collapsed if report else None,
            "wall_s": self.log.wall_s,
        }


# -- the training loop ---------------------------------------------------------------


def train(config: TrainConfig, reference: Optional[FieldHistory] = None,
          outdir=None, on_epoch=None) -> TrainResult:
    """Full-batch Adam training; deterministic for a fixed config.

    Writes ``final.ckpt`` (and ``last_good.ckpt`` plus a diagnostic on
    abort) under ``outdir`` when given. ``reference`` enables the L2 error
    cadence; probes run at their own cadences and always on the last epoch.
    """
    t_start = time.perf_counter()
    t_end = config.resolved_t_end()
    if config.eval_cadence > 0 and reference is None:
        raise ConfigError("eval_cadence > 0 requires a reference solution "
                          "(set eval_cadence=0 to disable L2 evaluation)")
    model = build_model(replace(config.model, t_domain=t_end))
    params = model.init_params()
    if model.n_quantum:
        params.quantum[:] = init_quantum_params(config.init_strategy,
                                                model.n_quantum, config.seed)
    nx, ny, nt = config.grid
    grid = CollocationGrid(nx, ny, nt, t_end)
    material = MaterialMap(case=config.case, eps_r=config.eps_r,
                           slab_x0=config.slab_x0)
    evaluator = LossEvaluator(model, grid, material, case=config.case,
                              phys_mode=config.phys_loss_mode,
                              energy_enabled=config.energy_loss_enabled,
                              chunk_slices=config.chunk_slices)

    weights = None
    if config.adaptive_weighting:
        first_bins = evaluator.initial_bin_losses(params)
        weights = time_bin_weights(first_bins, config.kappa)

    prng = np.random.default_rng([config.seed, 9])
    mw_x = prng.uniform(-1.0, 1.0, config.mw_probe_points)
    mw_y = prng.uniform(-1.0, 1.0, config.mw_probe_points)
    mw_t = prng.uniform(0.0, t_end, config.mw_probe_points)
    probe_times = np.linspace(0.0, t_end, config.probe_grid[2])

    adam = AdamState.zeros(model.total_parameter_count)
    log = RunLog()
    last_good = params.copy()

    def abort(msg: str):
        log.wall_s = time.perf_counter() - t_start
        if outdir is not None:
            save_checkpoint(_join(outdir, "last_good.ckpt"), model, last_good)
            log.to_csv(_join(outdir, "metrics.csv"))
        raise RunAborted(f"{msg} at epoch {len(log.rows)}; "
                         f"last good checkpoint preserved")

    for epoch in range(config.epochs):
        lr = lr_at(epoch, config.lr0, config.lr_decay, config.lr_decay_every)
        ev = evaluator.evaluate(params, weights=weights, tape=True)
        bd = ev.breakdown
        if not np.isfinite(bd.total):
            abort("non-finite loss")

        rep_all = GradientReport.from_grad(ev.grad)
        if model.n_quantum:
            rep_q = GradientReport.from_grad(ev.grad[model.n_classical:])
            norm_q, var_q = rep_q.norm, rep_q.variance
            mw = probe_entanglement(model, params, mw_x, mw_y, mw_t)
        else:
            norm_q = var_q = mw = None

        i_bh = None
        last_epoch = epoch == config.epochs - 1
        if config.probe_cadence > 0 and (epoch % config.probe_cadence == 0 or last_epoch):
            u_hist = energy_probe(model, params, material,
                                  config.probe_grid[0], config.probe_grid[1],
                                  probe_times)
            i_bh, raw = bh_index(u_hist, probe_times)
            log.final_i_bh, log.final_i_bh_raw = i_bh, raw
            log.energy_history = u_hist

        l2 = None
        if (config.eval_cadence > 0 and reference is not None
                and (epoch % config.eval_cadence == 0 or last_epoch)):
            l2 = l2_against_reference(model, params, reference)
            log.final_l2 = l2

        log.rows.append(RunRow(
            epoch=epoch, lr=lr, phys=bd.phys, ic=bd.ic, sym=bd.sym,
            energy=bd.energy, total=bd.total,
            grad_norm_all=rep_all.norm, grad_var_all=rep_all.variance,
            grad_norm_q=norm_q, grad_var_q=var_q, mw_q=mw, i_bh=i_bh,
            l2_err=l2, bin_phys=bd.bin_phys))

        if on_epoch is not None:
            on_epoch(log.rows[-1])

        try:
            adam_step(params, ev.grad, adam, lr)
        except RunAborted:
            abort("non-finite gradient")
        last_good = params.copy()

        if config.adaptive_weighting:
            weights = time_bin_weights(bd.bin_phys, config.kappa)

    log.wall_s = time.perf_counter() - t_start
    result = TrainResult(log=log, model=model, params=params)
    if outdir is not None:
        save_checkpoint(_join(outdir, "final.ckpt"), model, params)
        log.to_csv(_join(outdir, "metrics.csv"))
    return result


def _join(outdir, name: str) -> str:
    import os
    return os.path.join(str(outdir), name)
