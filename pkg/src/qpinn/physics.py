"""Residuals and loss terms for the vacuum, dielectric, and asymmetric cases.

All losses are means of squared pointwise quantities over a fixed
collocation grid. The evaluator at the bottom fuses every term into one
forward pass per grid chunk: the symmetry terms reuse the main forward
through exact mirror permutations of the periodic grid, and the initial
condition term reuses the t = 0 slice, so a training epoch costs a single
derivative-carrying sweep over the grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .autodiff import ops
from .errors import ConfigError
from .network import FieldBatch, FieldDerivs, Model, ParameterStore

M_BINS = 5
IC_WEIGHT = 10.0
SYM_WEIGHT = 10.0
ENERGY_WEIGHT = 10.0

CASES = ("vacuum", "dielectric", "asymmetric")
PHYS_MODES = ("vac", "diel_balanced", "intuitive")


@dataclass(frozen=True)
class MaterialMap:
    """Pointwise relative permittivity; mu = 1 everywhere.

    The dielectric region is a slab x in [slab_x0, 1] spanning all y, which
    breaks the x-mirror symmetry only.
    """
    case: str = "vacuum"
    eps_r: float = 4.0
    slab_x0: float = 0.3

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}")

    def epsilon_at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.case != "dielectric":
            return np.ones_like(x)
        return np.where(x >= self.slab_x0, self.eps_r, 1.0)


@dataclass(frozen=True)
class PulseSpec:
    """Gaussian initial pulse exp(-25 [((x-cx)/sx)^2 + ((y-cy)/sy)^2])."""
    center: tuple = (0.0, 0.0)
    stretch: tuple = (1.0, 1.0)

    @classmethod
    def for_case(cls, case: str) -> "PulseSpec":
        if case == "asymmetric":
            return cls(center=(0.4, 0.3), stretch=(0.85, 0.65))
        return cls()

    def ez0(self, x, y) -> np.ndarray:
        cx, cy = self.center
        sx, sy = self.stretch
        return np.exp(-25.0 * (((x - cx) / sx) ** 2 + ((y - cy) / sy) ** 2))


def default_t_end(case: str) -> float:
    return 0.7 if case == "dielectric" else 1.5


@dataclass
class CollocationGrid:
    """Uniform (x, y, t) grid; x, y periodic on [-1, 1), t includes 0 and t_end.

    Flattened point order is t-major, then y, then x, so every contiguous
    block of ``slice_size`` points is one time slice with a fixed spatial
    layout. Mirror reflections map the periodic spatial grid onto itself,
    which the fused evaluator exploits.
    """
    nx: int
    ny: int
    nt: int
    t_end: float

    def __post_init__(self):
        self.xs = -1.0 + 2.0 * np.arange(self.nx) / self.nx
        self.ys = -1.0 + 2.0 * np.arange(self.ny) / self.ny
        self.ts = np.linspace(0.0, self.t_end, self.nt)
        yy, xx = np.meshgrid(self.ys, self.xs, indexing="ij")
        self.x_slice = xx.ravel()
        self.y_slice = yy.ravel()
        ix = np.tile(np.arange(self.nx), self.ny)
        iy = np.repeat(np.arange(self.ny), self.nx)
        self.mirror_x_local = iy * self.nx + (self.nx - ix) % self.nx
        self.mirror_y_local = ((self.ny - iy) % self.ny) * self.nx + ix

    @property
    def slice_size(self) -> int:
        return self.nx * self.ny

    @property
    def n_points(self) -> int:
        return self.slice_size * self.nt

    def flat_points(self):
        s = self.slice_size
        x = np.tile(self.x_slice, self.nt)
        y = np.tile(self.y_slice, self.nt)
        t = np.repeat(self.ts, s)
        return x, y, t

    def bin_of_slice(self, it: int) -> int:
        edge = self.t_end / M_BINS
        return min(M_BINS - 1, int(self.ts[it] / edge))


# -- pointwise physics ---------------------------------------------------------


def pde_residuals(fields: FieldBatch, derivs: FieldDerivs, eps):
    """First-order TEz Maxwell residuals at each collocation point."""
    res1 = derivs.ez_t - (derivs.hy_x - derivs.hx_y) / eps
    res2 = derivs.hx_t + derivs.ez_y
    res3 = derivs.hy_t - derivs.ez_x
    return res1, res2, res3


def physics_loss(residuals, eps, mode: str):
    """Combine residuals into the PDE loss for the given weighting mode.

    ``vac``: plain MSE of each residual. ``diel_balanced``: the first
    residual is averaged separately over vacuum and dielectric points so
    both regions weigh equally regardless of their point counts.
    ``intuitive``: pooled MSE with pointwise epsilon.
    """
    if mode not in PHYS_MODES:
        raise ConfigError(f"unknown physics loss mode {mode!r}")
    res1, res2, res3 = residuals
    loss = ops.mean(res2 * res2) + ops.mean(res3 * res3)
    if mode == "diel_balanced":
        eps_v = np.asarray(ops.value_of(eps))
        vac_idx = np.flatnonzero(eps_v == 1.0)
        diel_idx = np.flatnonzero(eps_v != 1.0)
        if diel_idx.size == 0:
            raise ConfigError("diel_balanced mode requires dielectric points")
        r1s = res1 * res1
        loss = loss + ops.mean(ops.take_idx(r1s, vac_idx))
        loss = loss + ops.mean(ops.take_idx(r1s, diel_idx))
    else:
        loss = loss + ops.mean(res1 * res1)
    return loss


def energy_residual(fields: FieldBatch, derivs: FieldDerivs, eps):
    """Pointwise Poynting balance r_E; algebraically equal to
    eps*Ez*res1 + Hx*res2 + Hy*res3."""
    ez, hx, hy = fields.ez, fields.hx, fields.hy
    rate = eps * ez * derivs.ez_t + hx * derivs.hx_t + hy * derivs.hy_t
    flux_x = derivs.ez_x * hy + ez * derivs.hy_x
    flux_y = derivs.ez_y * hx + ez * derivs.hx_y
    return rate - flux_x + flux_y


def energy_residual_loss(fields: FieldBatch, derivs: FieldDerivs, eps):
    r = energy_residual(fields, derivs, eps)
    return ops.mean(r * r)


def time_bin_weights(bin_losses: Sequence[float], kappa: float = 1.0) -> np.ndarray:
    """Causal gating: w_1 = 1, w_m = min(1, exp(-kappa * sum_{j<m} L_j))."""
    losses = np.asarray(bin_losses, dtype=np.float64)
    w = np.ones(len(losses))
    cum = 0.0
    for m in range(1, len(losses)):
        cum += losses[m - 1]
        w[m] = min(1.0, np.exp(-kappa * cum))
    return w


def total_loss(phys, ic, sym, energy, energy_enabled: bool = True):
    out = phys + IC_WEIGHT * ic + SYM_WEIGHT * sym
    if energy_enabled:
        out = out + ENERGY_WEIGHT * energy
    return out


# -- standalone model-facing losses (reference implementations) -------------------

# Parity terms: (field, mirror axis, sign); sign +1 penalizes f - f_mirror
# (even parity), -1 penalizes f + f_mirror (odd parity).
SYM_TERMS_VACUUM = (("ez", "x", 1.0), ("ez", "y", 1.0),
                    ("hx", "x", 1.0), ("hx", "y", -1.0),
                    ("hy", "x", -1.0), ("hy", "y", 1.0))
SYM_TERMS_DIELECTRIC = (("ez", "y", 1.0), ("hx", "y", -1.0), ("hy", "y", 1.0))


def sym_terms_for_case(case: str):
    if case == "vacuum":
        return SYM_TERMS_VACUUM
    if case == "dielectric":
        return SYM_TERMS_DIELECTRIC
    return ()


def ic_loss(model: Model, params: ParameterStore, x, y,
            pulse: PulseSpec) -> float:
    """Mean squared deviation from the Gaussian pulse at t = 0."""
    fb = model.predict(params, x, y, np.zeros_like(x))
    target = pulse.ez0(x, y)
    return float(np.mean((fb.ez - target) ** 2 + fb.hx ** 2 + fb.hy ** 2))


def symmetry_loss(model: Model, params: ParameterStore, x, y, t,
                  case: str) -> float:
    """Parity penalty via explicit mirrored evaluations (reference path)."""
    terms = sym_terms_for_case(case)
    if not terms:
        return 0.0
    fb = model.predict(params, x, y, t)
    mx = model.predict(params, -x, y, t)
    my = model.predict(params, x, -y, t)
    total = np.zeros_like(x)
    for name, axis, sign in terms:
        f = getattr(fb, name)
        m = getattr(mx if axis == "x" else my, name)
        total = total + (f - sign * m) ** 2
    return float(np.mean(total))


# -- fused epoch evaluator ----------------------------------------------------------


@dataclass
class LossBreakdown:
    phys: float
    ic: float
    sym: float
    energy: float
    total: float
    bin_phys: tuple = (0.0,) * M_BINS


@dataclass
class EpochEval:
    breakdown: LossBreakdown
    grad: Optional[np.ndarray] = None


@dataclass
class _Chunk:
    bin: int
    s0: int
    s1: int
    vac_idx: Optional[np.ndarray]
    diel_idx: Optional[np.ndarray]
    mirror_x: Optional[np.ndarray]
    mirror_y: Optional[np.ndarray]


class LossEvaluator:
    """All loss terms over a collocation grid in one chunked sweep.

    Chunks are whole time slices and never straddle a time bin, so mirror
    permutations, the t = 0 slice, and the bin bookkeeping all stay local
    to a chunk. In tape mode each chunk contributes its share of the total
    loss and is backpropagated immediately; leaf gradients accumulate
    across chunks, which is exact because the total is a fixed-coefficient
    sum of per-chunk partial sums.
    """

    def __init__(self, model: Model, grid: CollocationGrid, material: MaterialMap,
                 *, case: Optional[str] = None, phys_mode: Optional[str] = None,
                 energy_enabled: bool = True, pulse: Optional[PulseSpec] = None,
                 chunk_slices: int = 4, bin_chunks: bool = True):
        self.model = model
        self.grid = grid
        self.material = material
        self.case = case or material.case
        if phys_mode is None:
            phys_mode = "diel_balanced" if self.case == "dielectric" else "vac"
        if phys_mode not in PHYS_MODES:
            raise ConfigError(f"unknown physics loss mode {phys_mode!r}")
        self.phys_mode = phys_mode
        self.energy_enabled = energy_enabled
        self.pulse = pulse or PulseSpec.for_case(self.case)
        self.sym_terms = sym_terms_for_case(self.case)

        s = grid.slice_size
        self.eps_slice = material.epsilon_at(grid.x_slice, grid.y_slice)
        self.vac_local = np.flatnonzero(self.eps_slice == 1.0)
        self.diel_local = np.flatnonzero(self.eps_slice != 1.0)
        if self.phys_mode == "diel_balanced" and self.diel_local.size == 0:
            raise ConfigError("diel_balanced mode requires dielectric points")
        self.ic_target = self.pulse.ez0(grid.x_slice, grid.y_slice)

        self.bin_slices = np.array([grid.bin_of_slice(i) for i in range(grid.nt)])
        self.bin_counts = np.array([(self.bin_slices == m).sum() * s
                                    for m in range(M_BINS)], dtype=np.int64)
        # bin_chunks=False allows chunks to span time bins; only valid for
        # pooled (weights=None) evaluation, where bins never enter the loss
        self.bin_chunks = bin_chunks
        self.chunks: list[_Chunk] = []
        if bin_chunks:
            for m in range(M_BINS):
                slices = np.flatnonzero(self.bin_slices == m)
                for lo in range(0, len(slices), chunk_slices):
                    sub = slices[lo:lo + chunk_slices]
                    self.chunks.append(self._make_chunk(m, int(sub[0]), int(sub[-1]) + 1))
        else:
            for lo in range(0, grid.nt, chunk_slices):
                hi = min(lo + chunk_slices, grid.nt)
                self.chunks.append(self._make_chunk(int(self.bin_slices[lo]), lo, hi))

    def _make_chunk(self, m: int, s0: int, s1: int) -> _Chunk:
        s = self.grid.slice_size
        k = s1 - s0
        offs = (np.arange(k) * s)[:, None]
        split = self.phys_mode == "diel_balanced"
        vac = (offs + self.vac_local[None, :]).ravel() if split else None
        diel = (offs + self.diel_local[None, :]).ravel() if split else None
        mx = my = None
        if self.sym_terms:
            mx = (offs + self.grid.mirror_x_local[None, :]).ravel()
            my = (offs + self.grid.mirror_y_local[None, :]).ravel()
        return _Chunk(m, s0, s1, vac, diel, mx, my)

    def initial_bin_losses(self, params: ParameterStore) -> np.ndarray:
        """Per-bin physics losses of the current model (no gradients)."""
        return self.evaluate(params).breakdown.bin_phys

    def evaluate(self, params: ParameterStore,
                 weights: Optional[np.ndarray] = None,
                 tape: bool = False) -> EpochEval:
        """One full pass; ``weights`` (length 5, constants) gates the physics
        term per time bin; ``None`` gives the plain pooled formula."""
        grid, s = self.grid, self.grid.slice_size
        n_total = grid.n_points
        balanced = self.phys_mode == "diel_balanced"
        if weights is not None and not self.bin_chunks:
            raise ConfigError("time-bin weights require bin_chunks=True")
        bound = self.model.bind(params, tape=tape)

        # float accumulators for the logged breakdown
        bin_sums = {m: dict() for m in range(M_BINS)}
        sum_energy = 0.0
        sum_sym = 0.0
        sum_ic = 0.0

        for ch in self.chunks:
            k = ch.s1 - ch.s0
            nc = k * s
            x = np.tile(grid.x_slice, k)
            y = np.tile(grid.y_slice, k)
            t = np.repeat(grid.ts[ch.s0:ch.s1], s)
            eps = np.tile(self.eps_slice, k)
            fb, dv = self.model.forward(bound, x, y, t, derivs=True)
            res1, res2, res3 = pde_residuals(fb, dv, eps)

            parts = []  # (key, coefficient applied in the chunk scalar, sum node)

            r1s = res1 * res1
            if balanced:
                sv = ops.asum(ops.take_idx(r1s, ch.vac_idx))
                sd = ops.asum(ops.take_idx(r1s, ch.diel_idx))
                parts.append(("res1_vac", sv))
                parts.append(("res1_diel", sd))
            else:
                parts.append(("res1", ops.asum(r1s)))
            parts.append(("res2", ops.asum(res2 * res2)))
            parts.append(("res3", ops.asum(res3 * res3)))

            chunk_loss = None

            def add(term, coef):
                nonlocal chunk_loss
                if coef == 0.0:
                    return
                scaled = term * coef
                chunk_loss = scaled if chunk_loss is None else chunk_loss + scaled

            w_m = 1.0 if weights is None else float(weights[ch.bin])
            for key, node in parts:
                denom = self._phys_denom(key, ch.bin, weights is not None)
                add(node, w_m / denom)
                d = bin_sums[ch.bin]
                d[key] = d.get(key, 0.0) + float(ops.value_of(node))

            if self.energy_enabled:
                r_e = energy_residual(fb, dv, eps)
                se = ops.asum(r_e * r_e)
                add(se, ENERGY_WEIGHT / n_total)
                sum_energy += float(ops.value_of(se))

            if self.sym_terms:
                for name, axis, sign in self.sym_terms:
                    f = getattr(fb, name)
                    mir = ops.take_idx(f, ch.mirror_x if axis == "x" else ch.mirror_y)
                    d = f - mir if sign > 0 else f + mir
                    sq = ops.asum(d * d)
                    add(sq, SYM_WEIGHT / n_total)
                    sum_sym += float(ops.value_of(sq))

            if ch.s0 == 0:
                dz = fb.ez[0:s] - self.ic_target
                sic = ops.asum(dz * dz) + ops.asum(fb.hx[0:s] * fb.hx[0:s]) \
                    + ops.asum(fb.hy[0:s] * fb.hy[0:s])
                add(sic, IC_WEIGHT / s)
                sum_ic += float(ops.value_of(sic))

            if tape and chunk_loss is not None:
                chunk_loss.backward()

        bin_phys = tuple(self._bin_loss(m, bin_sums[m]) for m in range(M_BINS))
        if weights is None:
            phys = self._pooled_phys(bin_sums)
        else:
            phys = float(np.mean([weights[m] * bin_phys[m] for m in range(M_BINS)]))
        ic = sum_ic / s
        sym = sum_sym / n_total
        energy = sum_energy / n_total if self.energy_enabled else 0.0
        total = total_loss(phys, ic, sym, energy, self.energy_enabled)
        breakdown = LossBreakdown(phys=phys, ic=ic, sym=sym, energy=energy,
                                  total=total, bin_phys=bin_phys)
        grad = bound.collect_grad() if tape else None
        return EpochEval(breakdown, grad)

    # -- normalisation helpers ------------------------------------------------

    def _region_count(self, key: str, n_slices: int) -> int:
        s = self.grid.slice_size
        if key == "res1_vac":
            return n_slices * self.vac_local.size
        if key == "res1_diel":
            return n_slices * self.diel_local.size
        return n_slices * s

    def _phys_denom(self, key: str, m: int, weighted: bool) -> float:
        if weighted:
            n_slices = int((self.bin_slices == m).sum())
            return float(M_BINS * self._region_count(key, n_slices))
        return float(self._region_count(key, self.grid.nt))

    def _bin_loss(self, m: int, sums: dict) -> float:
        n_slices = int((self.bin_slices == m).sum())
        if n_slices == 0:
            return 0.0
        return sum(v / self._region_count(k, n_slices) for k, v in sums.items())

    def _pooled_phys(self, bin_sums: dict) -> float:
        keys = set()
        for d in bin_sums.values():
            keys.update(d)
        out = 0.0
        for k in keys:
            tot = sum(d.get(k, 0.0) for d in bin_sums.values())
            out += tot / self._region_count(k, self.grid.nt)
        return out
