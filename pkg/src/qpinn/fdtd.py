"""Staggered-grid (Yee) TEz reference solver on the periodic unit cell.

Fields live on the usual staggered lattice: Ez at nodes (x_i, y_j), Hx at
(x_i, y_j + dy/2), Hy at (x_i + dx/2, y_j), with H leapfrogged at half time
steps. Material heterogeneity enters as a pointwise epsilon in the Ez
update. Snapshots are collocated to the Ez nodes (temporal and spatial
two-point averages of H), which is what the L2 evaluator and the energy
history consume.

Normalized units throughout: eps0 = mu0 = 1, wave speed 1.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, MetricError
from .physics import MaterialMap, PulseSpec, default_t_end

IC_KINDS = ("pulse", "plane_wave")


@dataclass
class FdtdConfig:
    nx: int = 256
    ny: int = 256
    case: str = "vacuum"
    t_end: Optional[float] = None
    cfl: float = 0.5
    dt: Optional[float] = None
    ic: str = "pulse"
    n_snapshots: int = 100
    eps_r: float = 4.0
    slab_x0: float = 0.3
    pulse_center: Optional[list] = None
    pulse_stretch: Optional[list] = None

    def __post_init__(self):
        if self.t_end is None:
            self.t_end = default_t_end(self.case)
        if self.ic not in IC_KINDS:
            raise ConfigError(f"unknown IC kind {self.ic!r}")
        if not 0.0 < self.cfl <= 1.0:
            raise ConfigError("cfl must be in (0, 1]")

    def material(self) -> MaterialMap:
        return MaterialMap(case=self.case, eps_r=self.eps_r, slab_x0=self.slab_x0)

    def pulse(self) -> PulseSpec:
        base = PulseSpec.for_case(self.case)
        return PulseSpec(
            center=tuple(self.pulse_center) if self.pulse_center else base.center,
            stretch=tuple(self.pulse_stretch) if self.pulse_stretch else base.stretch)


@dataclass
class FieldHistory:
    """Collocated snapshots on the Ez node grid; arrays are [T, ny, nx]."""
    times: np.ndarray
    ez: np.ndarray
    hx: np.ndarray
    hy: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return 2.0 / len(self.xs)

    @property
    def dy(self) -> float:
        return 2.0 / len(self.ys)

    def save(self, outdir: str) -> None:
        """JSON metadata sidecar plus raw little-endian float64 arrays."""
        os.makedirs(outdir, exist_ok=True)
        meta = dict(self.meta)
        meta.update({
            "format": "qpinn-fields",
            "version": 1,
            "shape": list(self.ez.shape),
            "times": self.times.tolist(),
            "xs": self.xs.tolist(),
            "ys": self.ys.tolist(),
        })
        with open(os.path.join(outdir, "meta.json"), "w") as f:
            json.dump(meta, f, indent=1, sort_keys=True)
        for name in ("ez", "hx", "hy"):
            getattr(self, name).astype("<f8").tofile(os.path.join(outdir, name + ".f64"))

    @classmethod
    def load(cls, outdir: str) -> "FieldHistory":
        with open(os.path.join(outdir, "meta.json")) as f:
            meta = json.load(f)
        shape = tuple(meta["shape"])
        arrs = {}
        for name in ("ez", "hx", "hy"):
            a = np.fromfile(os.path.join(outdir, name + ".f64"), dtype="<f8")
            arrs[name] = a.reshape(shape).astype(np.float64)
        return cls(times=np.array(meta["times"]), xs=np.array(meta["xs"]),
                   ys=np.array(meta["ys"]), meta=meta, **arrs)


def _plane_wave_fields(x, t):
    """Leftward wave Ez = Hy = cos(pi (x + t)); exact solution, used for
    convergence and dispersion tests."""
    return np.cos(np.pi * (x + t))


def run_reference(config: FdtdConfig) -> FieldHistory:
    """March the Yee scheme and return collocated snapshots.

    H is initialized at t = -dt/2: exactly for the analytic plane wave, and
    via a discrete half-step of the update equations for pulse ICs (where
    H(0) = 0), keeping the leapfrog second order from the first step.
    """
    nx, ny = config.nx, config.ny
    dx, dy = 2.0 / nx, 2.0 / ny
    dt_max = min(dx, dy) / np.sqrt(2.0)
    if config.dt is not None:
        if config.dt > dt_max:
            raise ConfigError(
                f"dt={config.dt:g} violates CFL bound {dt_max:g} at {nx}x{ny}")
        dt0 = config.dt
    else:
        dt0 = config.cfl * dt_max
    steps = max(1, int(np.ceil(config.t_end / dt0 - 1e-12)))
    dt = config.t_end / steps

    xs = -1.0 + dx * np.arange(nx)
    ys = -1.0 + dy * np.arange(ny)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    material = config.material()
    eps = material.epsilon_at(xx, yy)

    if config.ic == "plane_wave":
        ez = _plane_wave_fields(xx, 0.0)
        hx = np.zeros_like(ez)
        hy = _plane_wave_fields(xx + dx / 2.0, -dt / 2.0)
    else:
        ez = config.pulse().ez0(xx, yy)
        # H(-dt/2) = -(dt/2) * dH/dt|_0 with the discrete curls of Ez(0)
        hx = (dt / 2.0) * (np.roll(ez, -1, axis=0) - ez) / dy
        hy = -(dt / 2.0) * (np.roll(ez, -1, axis=1) - ez) / dx

    wanted = np.linspace(0.0, config.t_end, config.n_snapshots)
    snap_steps = np.unique(np.clip(np.round(wanted / dt).astype(int), 0, steps))
    snap_set = set(int(s) for s in snap_steps)

    times, rec_ez, rec_hx, rec_hy = [], [], [], []
    for step in range(steps + 1):
        hx_new = hx - (dt / dy) * (np.roll(ez, -1, axis=0) - ez)
        hy_new = hy + (dt / dx) * (np.roll(ez, -1, axis=1) - ez)
        if step in snap_set:
            hx_mid = 0.5 * (hx + hx_new)
            hy_mid = 0.5 * (hy + hy_new)
            times.append(step * dt)
            rec_ez.append(ez.copy())
            rec_hx.append(0.5 * (hx_mid + np.roll(hx_mid, 1, axis=0)))
            rec_hy.append(0.5 * (hy_mid + np.roll(hy_mid, 1, axis=1)))
        hx, hy = hx_new, hy_new
        ez = ez + (dt / eps) * ((hy - np.roll(hy, 1, axis=1)) / dx
                                - (hx - np.roll(hx, 1, axis=0)) / dy)

    meta = {
        "case": config.case,
        "ic": config.ic,
        "dt": dt,
        "steps": steps,
        "cfl": config.cfl,
        "material": {"case": material.case, "eps_r": material.eps_r,
                     "slab_x0": material.slab_x0},
    }
    return FieldHistory(times=np.array(times), ez=np.stack(rec_ez),
                        hx=np.stack(rec_hx), hy=np.stack(rec_hy),
                        xs=xs, ys=ys, meta=meta)


def total_energy(ez, hx, hy, eps, dx: float, dy: float) -> float:
    """Riemann-sum electromagnetic energy 0.5 integral(eps Ez^2 + Hx^2 + Hy^2)."""
    u = 0.5 * (eps * ez * ez + hx * hx + hy * hy)
    return float(np.sum(u) * dx * dy)


def energy_history(history: FieldHistory, material: Optional[MaterialMap] = None) -> np.ndarray:
    """U(t_k) over the snapshot sequence."""
    if material is None:
        m = history.meta.get("material", {})
        material = MaterialMap(**m) if m else MaterialMap()
    yy, xx = np.meshgrid(history.ys, history.xs, indexing="ij")
    eps = material.epsilon_at(xx, yy)
    return np.array([total_energy(history.ez[k], history.hx[k], history.hy[k],
                                  eps, history.dx, history.dy)
                     for k in range(len(history.times))])


def l2_error(pred_ez: np.ndarray, ref_ez: np.ndarray) -> float:
    """Relative L2 norm over all space-time points."""
    pred = np.asarray(pred_ez, dtype=np.float64)
    ref = np.asarray(ref_ez, dtype=np.float64)
    if pred.shape != ref.shape:
        raise MetricError(f"shape mismatch {pred.shape} vs {ref.shape}")
    denom = float(np.sum(ref * ref))
    if denom == 0.0:
        raise MetricError("reference field has zero norm; L2 error undefined")
    return float(np.sqrt(np.sum((pred - ref) ** 2) / denom))
