"""Scalar-loss gradients and the central-difference test oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..errors import ContractViolation
from .tape import Tensor

FD_STEP = 1e-4
FD_RTOL = 1e-5
FD_ATOL = 1e-8  # absolute floor on the admissible difference


@dataclass
class GradientReport:
    """Flat gradient plus the norm/variance diagnostics logged per epoch."""
    grad: np.ndarray
    norm: float
    variance: float

    @classmethod
    def from_grad(cls, grad: np.ndarray) -> "GradientReport":
        grad = np.asarray(grad, dtype=np.float64)
        return cls(grad=grad, norm=float(np.linalg.norm(grad)),
                   variance=float(np.var(grad)))


def loss_gradient(loss: Tensor, leaves) -> GradientReport:
    """Backpropagate a scalar loss and collect the flat parameter gradient.

    ``leaves`` is any object with a ``collect_grad() -> ndarray`` method
    (see ``network.BoundParams``); leaf tensors that received no adjoint
    contribute zeros.
    """
    if not isinstance(loss, Tensor):
        raise ContractViolation("loss must be a taped Tensor")
    if loss.value.size != 1:
        raise ContractViolation("loss must be scalar")
    loss.backward()
    return GradientReport.from_grad(leaves.collect_grad())


def central_difference(f: Callable[[np.ndarray], float], theta: np.ndarray,
                       h: float = FD_STEP,
                       indices: Optional[np.ndarray] = None) -> np.ndarray:
    """Central finite differences of a scalar function, one parameter at a time.

    This is the independent oracle used by the gradient tests; it only ever
    calls ``f`` on perturbed copies of ``theta``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if indices is None:
        indices = np.arange(theta.size)
    out = np.zeros(len(indices))
    for k, i in enumerate(indices):
        tp = theta.copy()
        tp[i] += h
        fp = f(tp)
        tm = theta.copy()
        tm[i] -= h
        fm = f(tm)
        out[k] = (fp - fm) / (2.0 * h)
    return out


def fd_compare(grad_ad: np.ndarray, grad_fd: np.ndarray,
               rtol: float = FD_RTOL, atol: float = FD_ATOL):
    """Check |ad - fd| <= rtol*|fd| + atol per entry.

    Returns (ok, worst_rel, worst_index) where worst_rel is the difference
    normalized by max(|fd|, atol/rtol) so that ``worst_rel <= rtol`` is
    exactly the pass condition.
    """
    grad_ad = np.asarray(grad_ad)
    grad_fd = np.asarray(grad_fd)
    diff = np.abs(grad_ad - grad_fd)
    denom = np.maximum(np.abs(grad_fd), atol / rtol)
    rel = diff / denom
    worst = int(np.argmax(rel))
    return bool(np.all(rel <= rtol)), float(rel[worst]), worst
