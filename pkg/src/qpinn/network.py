"""Model construction: periodic input maps, RFF layer, dense trunk, PQC splice.

Four variants share the same front end (strict spatial periodicity plus a
frozen random Fourier feature expansion):

* ``classical_regular``  -- 4 tanh hidden layers, linear 3-field head
* ``classical_reduced``  -- one hidden layer fewer
* ``classical_extra``    -- one hidden layer more
* ``hybrid``             -- the second-to-last hidden layer is replaced by a
  tanh adapter onto the qubits, the parametrized circuit, and a linear head
  reading the per-qubit <Z> values.

The temporal period of the time embedding is a learned parameter, stored as
a raw offset and mapped through ``tau = T * (1 + softplus(raw))`` so it
stays positive; it is initialized at twice the simulated time span.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .ansatz import AnsatzKind, CircuitSpec, ScaleKind, build_circuit, quantum_layer_forward
from .autodiff import ops
from .autodiff.ops import BatchedDual, lift_inputs
from .autodiff.tape import Tensor
from .errors import ConfigError

VARIANTS = ("classical_regular", "classical_reduced", "classical_extra", "hybrid")
N_HIDDEN = {"classical_regular": 4, "classical_reduced": 3, "classical_extra": 5}
TAU_RAW_INIT = float(np.log(np.e - 1.0))  # softplus(raw) = 1  =>  tau = 2 T


@dataclass
class ModelConfig:
    variant: str = "hybrid"
    hidden_width: int = 128
    rff_features: int = 128
    n_qubits: int = 7
    n_layers_pqc: int = 4
    ansatz: Optional[str] = None
    scale: Optional[str] = None
    rff_sigma: float = 1.0
    seed: int = 0
    t_domain: float = 1.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.variant == "hybrid":
            if self.ansatz is None or self.scale is None:
                raise ConfigError("hybrid variant requires ansatz and scale")
            try:
                AnsatzKind(self.ansatz)
                ScaleKind(self.scale)
            except ValueError as e:
                raise ConfigError(str(e)) from e
        if self.rff_sigma <= 0:
            raise ConfigError("rff_sigma must be positive")


@dataclass
class RFFProjection:
    """Fixed Gaussian projection of the 6 periodic features; never trained."""
    omega: np.ndarray  # [rff_features, 6]


@dataclass
class ParameterStore:
    """Flat trainable vector: [classical ... tau_raw | quantum]."""
    flat: np.ndarray
    n_classical: int
    n_quantum: int
    t_domain: float

    @property
    def classical(self) -> np.ndarray:
        return self.flat[:self.n_classical]

    @property
    def quantum(self) -> np.ndarray:
        return self.flat[self.n_classical:self.n_classical + self.n_quantum]

    @property
    def tau_raw(self) -> float:
        return float(self.flat[self.n_classical - 1])

    @property
    def learned_time_period(self) -> float:
        return self.t_domain * (1.0 + float(np.logaddexp(0.0, self.tau_raw)))

    def copy(self) -> "ParameterStore":
        return ParameterStore(self.flat.copy(), self.n_classical,
                              self.n_quantum, self.t_domain)


@dataclass
class FieldBatch:
    ez: object
    hx: object
    hy: object


@dataclass
class FieldDerivs:
    """Per-field input jacobians, each of shape [3, batch] = (d/dx, d/dy, d/dt)."""
    ez: object
    hx: object
    hy: object

    @property
    def ez_x(self): return self.ez[0]
    @property
    def ez_y(self): return self.ez[1]
    @property
    def ez_t(self): return self.ez[2]
    @property
    def hx_x(self): return self.hx[0]
    @property
    def hx_y(self): return self.hx[1]
    @property
    def hx_t(self): return self.hx[2]
    @property
    def hy_x(self): return self.hy[0]
    @property
    def hy_y(self): return self.hy[1]
    @property
    def hy_t(self): return self.hy[2]


def periodic_map(x, y, t, lx: float = 2.0, ly: float = 2.0, tau=None):
    """Six periodic features: (sin, cos) of x, y with the fixed domain
    periods and of t with the learned period tau."""
    ax = x * (2.0 * np.pi / lx)
    ay = y * (2.0 * np.pi / ly)
    at = (t * (2.0 * np.pi)) / tau
    return ops.stack([ops.sin(ax), ops.cos(ax),
                      ops.sin(ay), ops.cos(ay),
                      ops.sin(at), ops.cos(at)], axis=1)


def rff_forward(features, omega: np.ndarray):
    """cos/sin random Fourier expansion: [batch, 6] -> [batch, 2*rff]."""
    proj = ops.matmul(features, omega.T)
    return ops.concat([ops.cos(proj), ops.sin(proj)], axis=1)


class BoundParams:
    """Parameter views for one forward pass: taped leaves or raw ndarrays.

    ``cache`` holds per-binding derived objects (the ansatz transfer matrix)
    that stay valid while the underlying flat vector is unchanged.
    """

    def __init__(self, store: ParameterStore, layout, tape: bool):
        self.store = store
        self.layout = layout
        self.tape = tape
        self.cache: dict = {}
        self.views = {}
        for name, off, shape in layout:
            view = store.flat[off:off + int(np.prod(shape, dtype=int))].reshape(shape)
            self.views[name] = Tensor(view) if tape else view

    def __getitem__(self, name):
        return self.views[name]

    def collect_grad(self) -> np.ndarray:
        out = np.zeros(self.store.flat.shape)
        for name, off, shape in self.layout:
            leaf = self.views[name]
            if isinstance(leaf, Tensor) and leaf.grad is not None:
                size = int(np.prod(shape, dtype=int))
                out[off:off + size] = leaf.grad.ravel()
        return out


class Model:
    """A built network: fixed layout, frozen RFF, optional circuit."""

    def __init__(self, config: ModelConfig):
        self.config = config
        h = config.hidden_width
        width_in = 2 * config.rff_features
        dims = [(width_in, h)]
        if config.variant == "hybrid":
            dims += [(h, h), (h, h)]
            self.circuit: Optional[CircuitSpec] = build_circuit(
                config.ansatz, config.n_qubits, config.n_layers_pqc)
            adapter = (h, config.n_qubits)
            out = (config.n_qubits, 3)
        else:
            dims += [(h, h)] * (N_HIDDEN[config.variant] - 1)
            self.circuit = None
            adapter = None
            out = (h, 3)

        layout = []
        off = 0

        def add(name, shape):
            nonlocal off
            layout.append((name, off, shape))
            off += int(np.prod(shape, dtype=int))

        for i, (fi, fo) in enumerate(dims):
            add(f"h{i}.W", (fi, fo))
            add(f"h{i}.b", (fo,))
        if adapter is not None:
            add("adapter.W", adapter)
            add("adapter.b", (adapter[1],))
        add("out.W", out)
        add("out.b", (3,))
        add("tau_raw", ())
        self.n_classical = off
        self.n_quantum = self.circuit.param_count if self.circuit else 0
        if self.circuit is not None:
            add("quantum", (self.n_quantum,))
        self.layout = tuple(layout)
        self.n_hidden = len(dims)
        self.total_parameter_count = self.n_classical + self.n_quantum
        self._omega = self._draw_omega(config)
        self._plain_transfer = None

    @staticmethod
    def _draw_omega(config: ModelConfig) -> np.ndarray:
        rng = np.random.default_rng([config.seed, 0])
        return rng.normal(0.0, config.rff_sigma, size=(config.rff_features, 6))

    @property
    def rff(self) -> RFFProjection:
        return RFFProjection(self._omega)

    # -- parameters ----------------------------------------------------------

    def init_params(self) -> ParameterStore:
        """Glorot-uniform dense weights, zero biases, tau at 2T, quantum
        angles uniform in [0, 2 pi) (the trainer may overwrite the quantum
        segment with another init strategy)."""
        rng = np.random.default_rng([self.config.seed, 1])
        flat = np.zeros(self.total_parameter_count)
        for name, off, shape in self.layout:
            size = int(np.prod(shape, dtype=int))
            if name.endswith(".W"):
                lim = np.sqrt(6.0 / (shape[0] + shape[1]))
                flat[off:off + size] = rng.uniform(-lim, lim, size)
            elif name == "tau_raw":
                flat[off] = TAU_RAW_INIT
        if self.n_quantum:
            qrng = np.random.default_rng([self.config.seed, 2])
            flat[self.n_classical:] = qrng.uniform(0.0, 2.0 * np.pi, self.n_quantum)
        return ParameterStore(flat, self.n_classical, self.n_quantum,
                              self.config.t_domain)

    def bind(self, params: ParameterStore, tape: bool = False) -> BoundParams:
        if params.flat.size != self.total_parameter_count:
            raise ConfigError("parameter vector length does not match model")
        return BoundParams(params, self.layout, tape)

    def _transfer_for(self, bound: BoundParams):
        """Ansatz transfer matrix, rebuilt only when the quantum segment
        changes (taped bindings rebuild once per binding)."""
        from .ansatz import _ansatz_transfer
        mat = bound.cache.get("transfer")
        if mat is not None:
            return mat
        if bound.tape:
            mat = _ansatz_transfer(self.circuit, bound["quantum"])
        else:
            key = bound.store.quantum.tobytes()
            cached = self._plain_transfer
            if cached is not None and cached[0] == key:
                mat = cached[1]
            else:
                mat = _ansatz_transfer(self.circuit, bound["quantum"])
                self._plain_transfer = (key, mat)
        bound.cache["transfer"] = mat
        return mat

    # -- forward -------------------------------------------------------------

    def forward(self, bound: BoundParams, x, y, t, derivs: bool = False):
        """Evaluate (E_z, H_x, H_y); optionally with d/d(x,y,t) jacobians."""
        if derivs:
            xin, yin, tin = lift_inputs(x, y, t)
        else:
            xin = np.asarray(x, dtype=np.float64)
            yin = np.asarray(y, dtype=np.float64)
            tin = np.asarray(t, dtype=np.float64)
        raw = bound["tau_raw"]
        tau = (1.0 + ops.softplus(raw)) * self.config.t_domain
        h = rff_forward(periodic_map(xin, yin, tin, tau=tau), self._omega)
        for i in range(self.n_hidden):
            h = ops.tanh(ops.matmul(h, bound[f"h{i}.W"]) + bound[f"h{i}.b"])
        if self.circuit is not None:
            a = ops.tanh(ops.matmul(h, bound["adapter.W"]) + bound["adapter.b"])
            h = quantum_layer_forward(a, bound["quantum"], self.circuit,
                                      self.config.scale,
                                      transfer=self._transfer_for(bound))
        out = ops.matmul(h, bound["out.W"]) + bound["out.b"]
        ez, hx, hy = out[:, 0], out[:, 1], out[:, 2]
        if not derivs:
            return FieldBatch(ez, hx, hy), None
        fields = FieldBatch(ez.val, hx.val, hy.val)
        jac = FieldDerivs(ez.tan, hx.tan, hy.tan)
        return fields, jac

    def predict(self, params: ParameterStore, x, y, t,
                chunk: int = 16384) -> FieldBatch:
        """Value-only evaluation in fixed-order chunks (plain ndarrays)."""
        bound = self.bind(params, tape=False)
        n = len(x)
        outs = ([], [], [])
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            fb, _ = self.forward(bound, x[lo:hi], y[lo:hi], t[lo:hi])
            for buf, v in zip(outs, (fb.ez, fb.hx, fb.hy)):
                buf.append(v)
        return FieldBatch(*(np.concatenate(b) for b in outs))

    def adapter_activations(self, params: ParameterStore, x, y, t) -> np.ndarray:
        """Pre-embedding tanh activations [batch, n_qubits] (hybrid only)."""
        if self.circuit is None:
            raise ConfigError("classical variants have no quantum adapter")
        bound = self.bind(params, tape=False)
        tau = (1.0 + ops.softplus(bound["tau_raw"])) * self.config.t_domain
        h = rff_forward(periodic_map(np.asarray(x, dtype=np.float64),
                                     np.asarray(y, dtype=np.float64),
                                     np.asarray(t, dtype=np.float64), tau=tau),
                        self._omega)
        for i in range(self.n_hidden):
            h = ops.tanh(ops.matmul(h, bound[f"h{i}.W"]) + bound[f"h{i}.b"])
        return ops.tanh(ops.matmul(h, bound["adapter.W"]) + bound["adapter.b"])


def build_model(config: ModelConfig) -> Model:
    return Model(config)


# -- checkpoints -----------------------------------------------------------------

CKPT_MAGIC = "qpinn-checkpoint"


def save_checkpoint(path, model: Model, params: ParameterStore) -> None:
    """JSON header line + little-endian float64 flat parameter payload."""
    header = {
        "format": CKPT_MAGIC,
        "version": 1,
        "config": asdict(model.config),
        "seed": model.config.seed,
        "counts": {
            "classical": model.n_classical,
            "quantum": model.n_quantum,
            "total": model.total_parameter_count,
        },
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path):
    """Rebuild (model, params) from a checkpoint file."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        payload = f.read()
    if header.get("format") != CKPT_MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file")
    model = Model(ModelConfig(**header["config"]))
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if flat.size != model.total_parameter_count:
        raise ConfigError(f"{path}: payload has {flat.size} parameters, "
                          f"expected {model.total_parameter_count}")
    params = ParameterStore(flat.copy(), model.n_classical, model.n_quantum,
                            model.config.t_domain)
    return model, params
