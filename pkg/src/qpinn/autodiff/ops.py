"""Forward-mode duals and backend-generic math.

``BatchedDual`` carries a value array plus a tangent block of shape
``(3, *value.shape)`` holding d/dx, d/dy, d/dt. Values and tangents may be
plain ndarrays (fast evaluation) or taped ``Tensor`` nodes (when parameter
gradients of a loss that consumes the tangents are needed). Reverse-mode is
thus applied over the forward-mode program: one tape, exact first input
derivatives, exact parameter gradients.

The module-level functions dispatch on BatchedDual, then Tensor, then
ndarray, so numerical kernels are written once and run under every backend.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidBatchError
from . import tape
from .tape import Tensor

__all__ = ["BatchedDual", "lift_inputs", "value_of", "sin", "cos", "tanh",
           "arcsin", "arccos", "exp", "sqrt", "softplus", "clamp_unit",
           "conj", "real", "imag", "abs2", "make_complex", "matmul",
           "reshape", "stack", "concat", "take_idx", "mean", "asum"]

N_TANGENTS = 3  # d/dx, d/dy, d/dt


# -- backend helpers (Tensor | ndarray) ---------------------------------------

def _b(fn_name, x, *args):
    if isinstance(x, Tensor):
        return getattr(x, fn_name)(*args)
    return getattr(np, fn_name)(x, *args)


def _b_reshape(x, shape):
    return x.reshape(shape)


def _b_make_complex(re_v, im_v):
    if isinstance(re_v, Tensor) or isinstance(im_v, Tensor):
        return re_v + (im_v * 1j if isinstance(im_v, Tensor) else np.asarray(im_v) * 1j)
    return re_v + 1j * np.asarray(im_v)


def _b_stack(parts, axis):
    if any(isinstance(p, Tensor) for p in parts):
        return tape.stack(parts, axis=axis)
    return np.stack(parts, axis=axis)


def _b_concat(parts, axis):
    if any(isinstance(p, Tensor) for p in parts):
        return tape.concat(parts, axis=axis)
    return np.concatenate(parts, axis=axis)


def _shift_axis(axis: int) -> int:
    """Map a value-array axis to the tangent-array axis (leading 3 dim)."""
    return axis if axis < 0 else axis + 1


class BatchedDual:
    """Value plus three input tangents propagated by the chain rule."""

    __slots__ = ("val", "tan")

    def __init__(self, val, tan):
        self.val = val
        self.tan = tan

    # keep numpy from absorbing duals into object arrays
    __array_ufunc__ = None

    @property
    def shape(self):
        return self.val.shape

    def __repr__(self):
        return f"BatchedDual(shape={self.val.shape})"

    @staticmethod
    def _tan_of(x):
        return x.tan if isinstance(x, BatchedDual) else None

    @staticmethod
    def _val_of(x):
        return x.val if isinstance(x, BatchedDual) else x

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, BatchedDual):
            return BatchedDual(self.val + other.val, self.tan + other.tan)
        return BatchedDual(self.val + other, self.tan)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, BatchedDual):
            return BatchedDual(self.val - other.val, self.tan - other.tan)
        return BatchedDual(self.val - other, self.tan)

    def __rsub__(self, other):
        return BatchedDual(other - self.val, -self.tan)

    def __neg__(self):
        return BatchedDual(-self.val, -self.tan)

    def __mul__(self, other):
        if isinstance(other, BatchedDual):
            return BatchedDual(self.val * other.val,
                               self.tan * other.val + other.tan * self.val)
        return BatchedDual(self.val * other, self.tan * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, BatchedDual):
            val = self.val / other.val
            return BatchedDual(val, (self.tan - val * other.tan) / other.val)
        return BatchedDual(self.val / other, self.tan / other)

    def __rtruediv__(self, other):
        val = other / self.val
        return BatchedDual(val, -val / self.val * self.tan)

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return BatchedDual(self.val[key], self.tan[(slice(None),) + key])


def lift_inputs(x, y, t):
    """Wrap coordinate batches as duals seeded with unit input tangents."""
    arrs = [np.asarray(a, dtype=np.float64) for a in (x, y, t)]
    n = arrs[0].shape
    if any(a.shape != n for a in arrs) or any(a.ndim != 1 for a in arrs):
        raise InvalidBatchError("x, y, t must be 1-D arrays of equal length")
    if any(not np.all(np.isfinite(a)) for a in arrs):
        raise InvalidBatchError("coordinate batches must be finite")
    out = []
    for i, a in enumerate(arrs):
        tan = np.zeros((N_TANGENTS,) + a.shape)
        tan[i] = 1.0
        out.append(BatchedDual(a, tan))
    return tuple(out)


def value_of(x):
    """Concrete ndarray value of a Dual/Tensor/ndarray."""
    if isinstance(x, BatchedDual):
        x = x.val
    if isinstance(x, Tensor):
        return x.value
    return np.asarray(x)


# -- generic elementwise functions ------------------------------------------

def sin(x):
    if isinstance(x, BatchedDual):
        return BatchedDual(_b("sin", x.val), _b("cos", x.val) * x.tan)
    return _b("sin", x)


def cos(x):
    if isinstance(x, BatchedDual):
        return BatchedDual(_b("cos", x.val), -_b("sin", x.val) * x.tan)
    return _b("cos", x)


def tanh(x):
    if isinstance(x, BatchedDual):
        th = _b("tanh", x.val)
        return BatchedDual(th, (1.0 - th * th) * x.tan)
    return _b("tanh", x)


def arcsin(x):
    if isinstance(x, BatchedDual):
        v = x.val
        return BatchedDual(_b("arcsin", v), x.tan / _b("sqrt", 1.0 - v * v))
    return _b("arcsin", x)


def arccos(x):
    if isinstance(x, BatchedDual):
        v = x.val
        return BatchedDual(_b("arccos", v), -(x.tan / _b("sqrt", 1.0 - v * v)))
    return _b("arccos", x)


def exp(x):
    if isinstance(x, BatchedDual):
        e = _b("exp", x.val)
        return BatchedDual(e, e * x.tan)
    return _b("exp", x)


def sqrt(x):
    if isinstance(x, BatchedDual):
        r = _b("sqrt", x.val)
        return BatchedDual(r, x.tan * (0.5 / r))
    return _b("sqrt", x)


def softplus(x):
    if isinstance(x, BatchedDual):
        raise TypeError("softplus is only used on parameters, not on duals")
    if isinstance(x, Tensor):
        return x.softplus()
    return np.logaddexp(0.0, x)


def clamp_unit(x):
    """Clip to [-1, 1] with pass-through derivative (dual and tape aware)."""
    if isinstance(x, BatchedDual):
        return BatchedDual(clamp_unit(x.val), x.tan)
    if isinstance(x, Tensor):
        return x.clamp_unit()
    return np.clip(x, -1.0, 1.0)


# -- complex bridges -----------------------------------------------------------

def conj(x):
    if isinstance(x, BatchedDual):
        return BatchedDual(conj(x.val), conj(x.tan))
    if isinstance(x, Tensor):
        return x.conj()
    return np.conj(x)


def real(x):
    if isinstance(x, BatchedDual):
        return BatchedDual(real(x.val), real(x.tan))
    if isinstance(x, Tensor):
        return x.real()
    return np.real(x)


def imag(x):
    if isinstance(x, BatchedDual):
        return BatchedDual(imag(x.val), imag(x.tan))
    if isinstance(x, Tensor):
        return x.imag()
    return np.imag(x)


def abs2(x):
    """|z|^2; for duals the tangent is 2 Re(conj(z) dz)."""
    if isinstance(x, BatchedDual):
        v = x.val
        return BatchedDual(abs2(v), 2.0 * real(conj(v) * x.tan))
    if isinstance(x, Tensor):
        return x.abs2()
    if np.iscomplexobj(x):
        return x.real * x.real + x.imag * x.imag
    return x * x


def make_complex(re_p, im_p):
    if isinstance(re_p, BatchedDual) or isinstance(im_p, BatchedDual):
        rv, rt = _split_dual(re_p)
        iv, it = _split_dual(im_p)
        tan = rt + it * 1j if rt is not None and it is not None else (
            rt if it is None else it * 1j)
        return BatchedDual(_b_make_complex(rv, iv), tan)
    return _b_make_complex(re_p, im_p)


def _split_dual(x):
    if isinstance(x, BatchedDual):
        return x.val, x.tan
    return x, None


# -- shape / linear algebra ------------------------------------------------------

def matmul(a, b):
    """a @ b where b is a parameter matrix or constant (never a dual)."""
    if isinstance(a, BatchedDual):
        tan = a.tan
        shp = tan.shape
        if len(shp) == 3:
            # one flat GEMM over the stacked tangent channels
            flat = matmul(reshape(tan, (shp[0] * shp[1], shp[2])), b)
            tan_out = reshape(flat, (shp[0], shp[1], flat.shape[-1]))
        else:
            tan_out = matmul(tan, b)
        return BatchedDual(matmul(a.val, b), tan_out)
    if isinstance(a, Tensor) or isinstance(b, Tensor):
        if not isinstance(a, Tensor):
            a = Tensor(a, track=False)
        return a @ b
    return a @ b


def reshape(x, shape):
    if isinstance(x, BatchedDual):
        return BatchedDual(_b_reshape(x.val, shape),
                           _b_reshape(x.tan, (N_TANGENTS,) + tuple(shape)))
    return _b_reshape(x, shape)


def stack(parts, axis=0):
    if any(isinstance(p, BatchedDual) for p in parts):
        vals = _b_stack([p.val for p in parts], axis)
        tans = _b_stack([p.tan for p in parts], _shift_axis(axis))
        return BatchedDual(vals, tans)
    return _b_stack(parts, axis)


def concat(parts, axis=0):
    if any(isinstance(p, BatchedDual) for p in parts):
        vals = _b_concat([p.val for p in parts], axis)
        tans = _b_concat([p.tan for p in parts], _shift_axis(axis))
        return BatchedDual(vals, tans)
    return _b_concat(parts, axis)


def take_idx(x, idx):
    """Gather along the first axis (dual-aware)."""
    if isinstance(x, BatchedDual):
        tan = x.tan.take_idx(idx, axis=1) if isinstance(x.tan, Tensor) else x.tan[:, idx]
        return BatchedDual(take_idx(x.val, idx), tan)
    if isinstance(x, Tensor):
        return x.take_idx(idx)
    return x[idx]


def mean(x):
    if isinstance(x, Tensor):
        return x.mean()
    return np.mean(x)


def asum(x, axis=None):
    if isinstance(x, Tensor):
        return x.sum(axis=axis)
    return np.sum(x, axis=axis)
