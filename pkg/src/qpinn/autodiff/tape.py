"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps an ndarray (float64 or complex128) and records the
operation that produced it, so a scalar result can be differentiated with
respect to every tracked leaf by a single reverse sweep. Complex tensors
carry Wirtinger-style adjoints: for a complex node ``z`` the accumulated
gradient is ``dL/d(Re z) + i dL/d(Im z)``. Whenever a complex adjoint flows
into a real-valued node only its real part is kept, which is the correct
projection for real parameters embedded in complex arithmetic.

All reductions are sequential numpy reductions in construction order, so
gradients are bit-identical across runs for identical inputs.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["Tensor", "concat", "stack"]


def _coerce(value) -> np.ndarray:
    a = np.asarray(value)
    if a.dtype == np.float64 or a.dtype == np.complex128:
        return a
    if np.iscomplexobj(a):
        return a.astype(np.complex128)
    return a.astype(np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    """A node in the reverse-mode computation graph."""

    __slots__ = ("value", "grad", "_parents", "_vjp", "track", "_grad_owned")

    def __init__(self, value, track: bool = True,
                 _parents: Sequence["Tensor"] = (),
                 _vjp: Optional[Callable[[np.ndarray], None]] = None):
        self.value = _coerce(value)
        self.grad: Optional[np.ndarray] = None
        self._parents = tuple(_parents)
        self._vjp = _vjp
        self.track = track
        self._grad_owned = False

    # numpy must not try to broadcast Tensor as a scalar object; returning
    # NotImplemented from ufuncs routes `ndarray <op> Tensor` to our r-ops.
    __array_ufunc__ = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.ndim

    def item(self) -> float:
        return self.value.item()

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, dtype={self.value.dtype})"

    # -- graph plumbing ----------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.track:
            return
        g = np.asarray(g)
        if np.iscomplexobj(g) and not np.iscomplexobj(self.value):
            g = g.real
        g = _unbroadcast(g, self.value.shape)
        if self.grad is None:
            # borrow the first contribution; upgrade to an owned buffer only
            # if a second one arrives (single-consumer nodes never copy)
            if g.shape != self.value.shape or (np.iscomplexobj(self.value)
                                               and not np.iscomplexobj(g)):
                dtype = np.complex128 if np.iscomplexobj(self.value) else np.float64
                self.grad = np.array(np.broadcast_to(g, self.value.shape), dtype=dtype)
                self._grad_owned = True
            else:
                self.grad = g
                self._grad_owned = False
        elif self._grad_owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._grad_owned = True

    def _own_grad(self) -> np.ndarray:
        """Gradient buffer that is safe to mutate in place."""
        dtype = np.complex128 if np.iscomplexobj(self.value) else np.float64
        if self.grad is None:
            self.grad = np.zeros(self.value.shape, dtype=dtype)
        elif not self._grad_owned:
            self.grad = np.array(self.grad, dtype=dtype)
        self._grad_owned = True
        return self.grad

    def backward(self) -> None:
        """Reverse sweep from a scalar node; fills ``grad`` on tracked leaves.

        Interior gradients are released as soon as they were consumed, so peak
        memory stays close to the forward tape itself.
        """
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar node")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack_: list[tuple[Tensor, bool]] = [(self, False)]
        while stack_:
            node, done = stack_.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.track:
                continue
            seen.add(id(node))
            stack_.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.track:
                    stack_.append((p, False))
        self.grad = np.ones_like(self.value)
        self._grad_owned = True
        for node in reversed(topo):
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)
            if node._parents:
                node.grad = None
                node._grad_owned = False

    # -- helpers -------------------------------------------------------------

    @staticmethod
    def _value_of(x):
        return x.value if isinstance(x, Tensor) else np.asarray(x)

    def _make(self, value, parents, vjp):
        track = any(p.track for p in parents)
        if not track:
            return Tensor(value, track=False)
        return Tensor(value, _parents=parents, _vjp=vjp)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if other.__class__.__name__ == "BatchedDual":
            return NotImplemented
        if isinstance(other, Tensor):
            out_v = self.value + other.value
            parents = (self, other)

            def vjp(g):
                self._accumulate(g)
                other._accumulate(g)
        else:
            bv = np.asarray(other)
            out_v = self.value + bv
            parents = (self,)

            def vjp(g):
                self._accumulate(g)
        return self._make(out_v, parents, vjp)

    __radd__ = __add__

    def __sub__(self, other):
        if other.__class__.__name__ == "BatchedDual":
            return NotImplemented
        if isinstance(other, Tensor):
            out_v = self.value - other.value
            parents = (self, other)

            def vjp(g):
                self._accumulate(g)
                other._accumulate(-g)
        else:
            out_v = self.value - np.asarray(other)
            parents = (self,)

            def vjp(g):
                self._accumulate(g)
        return self._make(out_v, parents, vjp)

    def __rsub__(self, other):
        out_v = np.asarray(other) - self.value

        def vjp(g):
            self._accumulate(-g)
        return self._make(out_v, (self,), vjp)

    def __neg__(self):
        def vjp(g):
            self._accumulate(-g)
        return self._make(-self.value, (self,), vjp)

    def __mul__(self, other):
        if other.__class__.__name__ == "BatchedDual":
            return NotImplemented
        if isinstance(other, Tensor):
            av, bv = self.value, other.value
            parents = (self, other)

            def vjp(g):
                self._accumulate(g * np.conj(bv))
                other._accumulate(g * np.conj(av))
        else:
            av = self.value
            bv = np.asarray(other)
            parents = (self,)

            def vjp(g):
                self._accumulate(g * np.conj(bv))
        return self._make(av * bv, parents, vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if other.__class__.__name__ == "BatchedDual":
            return NotImplemented
        if isinstance(other, Tensor):
            av, bv = self.value, other.value
            parents = (self, other)

            def vjp(g):
                self._accumulate(g * np.conj(1.0 / bv))
                other._accumulate(g * np.conj(-av / (bv * bv)))
        else:
            bv = np.asarray(other)
            parents = (self,)

            def vjp(g):
                self._accumulate(g * np.conj(1.0 / bv))
        return self._make(self.value / Tensor._value_of(other), parents, vjp)

    def __rtruediv__(self, other):
        av = np.asarray(other)
        bv = self.value

        def vjp(g):
            self._accumulate(g * np.conj(-av / (bv * bv)))
        return self._make(av / bv, (self,), vjp)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("Tensor ** expects a python scalar exponent")
        av = self.value

        def vjp(g):
            self._accumulate(g * p * av ** (p - 1.0))
        return self._make(av ** p, (self,), vjp)

    # -- elementwise functions ------------------------------------------------

    def sin(self):
        av = self.value

        def vjp(g):
            self._accumulate(g * np.cos(av))
        return self._make(np.sin(av), (self,), vjp)

    def cos(self):
        av = self.value

        def vjp(g):
            self._accumulate(-g * np.sin(av))
        return self._make(np.cos(av), (self,), vjp)

    def tanh(self):
        t = np.tanh(self.value)

        def vjp(g):
            self._accumulate(g * (1.0 - t * t))
        return self._make(t, (self,), vjp)

    def arcsin(self):
        av = self.value

        def vjp(g):
            self._accumulate(g / np.sqrt(1.0 - av * av))
        return self._make(np.arcsin(av), (self,), vjp)

    def arccos(self):
        av = self.value

        def vjp(g):
            self._accumulate(-g / np.sqrt(1.0 - av * av))
        return self._make(np.arccos(av), (self,), vjp)

    def exp(self):
        e = np.exp(self.value)

        def vjp(g):
            self._accumulate(g * np.conj(e))
        return self._make(e, (self,), vjp)

    def log(self):
        av = self.value

        def vjp(g):
            self._accumulate(g / av)
        return self._make(np.log(av), (self,), vjp)

    def sqrt(self):
        r = np.sqrt(self.value)

        def vjp(g):
            self._accumulate(g * (0.5 / r))
        return self._make(r, (self,), vjp)

    def softplus(self):
        av = self.value

        def vjp(g):
            self._accumulate(g * (0.5 * (1.0 + np.tanh(0.5 * av))))
        return self._make(np.logaddexp(0.0, av), (self,), vjp)

    def clamp_unit(self):
        """Clip values into [-1, 1]; the derivative passes through unchanged.

        Callers are responsible for having validated that excursions are at
        tolerance level (<= 1e-12), so pass-through derivatives are exact for
        all practical purposes.
        """
        av = self.value

        def vjp(g):
            self._accumulate(g)
        return self._make(np.clip(av, -1.0, 1.0), (self,), vjp)

    # -- complex bridges -------------------------------------------------------

    def conj(self):
        def vjp(g):
            self._accumulate(np.conj(g))
        return self._make(np.conj(self.value), (self,), vjp)

    def real(self):
        def vjp(g):
            self._accumulate(g)
        return self._make(self.value.real, (self,), vjp)

    def imag(self):
        def vjp(g):
            self._accumulate(1j * g)
        return self._make(self.value.imag, (self,), vjp)

    def abs2(self):
        """|z|^2 as a real tensor (z*conj(z) for complex, z**2 for real)."""
        zv = self.value
        if np.iscomplexobj(zv):
            out = zv.real * zv.real + zv.imag * zv.imag
        else:
            out = zv * zv

        def vjp(g):
            self._accumulate(2.0 * g * zv)
        return self._make(out, (self,), vjp)

    # -- shape ops ---------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.value.shape

        def vjp(g):
            self._accumulate(g.reshape(old))
        return self._make(self.value.reshape(shape), (self,), vjp)

    def __getitem__(self, key):
        out_v = self.value[key]

        def vjp(g):
            if not self.track:
                return
            buf = self._own_grad()
            if np.iscomplexobj(g) and not np.iscomplexobj(self.value):
                g = g.real
            buf[key] += g
        return self._make(out_v, (self,), vjp)

    def take_idx(self, idx: np.ndarray, axis: int = 0):
        """Gather along ``axis`` with an integer index array (duplicates OK)."""
        idx = np.asarray(idx)
        out_v = np.take(self.value, idx, axis=axis)
        key = (slice(None),) * axis + (idx,)

        def vjp(g):
            if not self.track:
                return
            buf = self._own_grad()
            if np.iscomplexobj(g) and not np.iscomplexobj(self.value):
                g = g.real
            np.add.at(buf, key, g)
        return self._make(out_v, (self,), vjp)

    # -- reductions / linear algebra -----------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        av_shape = self.value.shape
        out_v = self.value.sum(axis=axis, keepdims=keepdims)

        def vjp(g):
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                ax = axis if isinstance(axis, tuple) else (axis,)
                ax = tuple(a % len(av_shape) for a in ax)
                shape = tuple(1 if i in ax else n for i, n in enumerate(av_shape))
                gg = gg.reshape(shape)
            self._accumulate(np.broadcast_to(gg, av_shape))
        return self._make(out_v, (self,), vjp)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def __matmul__(self, other):
        bv = Tensor._value_of(other)
        av = self.value
        out_v = av @ bv
        if isinstance(other, Tensor):
            parents = (self, other)

            def vjp(g):
                self._accumulate(g @ np.conj(bv).swapaxes(-1, -2))
                other._accumulate(np.conj(av).swapaxes(-1, -2) @ g)
        else:
            parents = (self,)

            def vjp(g):
                self._accumulate(g @ np.conj(bv).swapaxes(-1, -2))
        return self._make(out_v, parents, vjp)

    def __rmatmul__(self, other):
        av = np.asarray(other)
        bv = self.value

        def vjp(g):
            self._accumulate(np.conj(av).swapaxes(-1, -2) @ g)
        return self._make(av @ bv, (self,), vjp)


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    """Concatenate tensors/arrays along ``axis`` (tracked if any part is)."""
    vals = [Tensor._value_of(p) for p in parts]
    out_v = np.concatenate(vals, axis=axis)
    tracked = [p for p in parts if isinstance(p, Tensor) and p.track]
    if not tracked:
        return Tensor(out_v, track=False)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if isinstance(p, Tensor) and p.track:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])
    return Tensor(out_v, _parents=tuple(tracked), _vjp=vjp)


def stack(parts: Sequence, axis: int = 0) -> Tensor:
    """Stack tensors/arrays along a new axis."""
    vals = [Tensor._value_of(p) for p in parts]
    out_v = np.stack(vals, axis=axis)
    tracked = [p for p in parts if isinstance(p, Tensor) and p.track]
    if not tracked:
        return Tensor(out_v, track=False)

    def vjp(g):
        for i, p in enumerate(parts):
            if isinstance(p, Tensor) and p.track:
                p._accumulate(np.take(g, i, axis=axis))
    return Tensor(out_v, _parents=tuple(tracked), _vjp=vjp)
