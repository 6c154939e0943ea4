"""Autodiff core: reverse-mode tape plus forward-mode input tangents.

Input derivatives travel as forward-mode tangents of width 3 (x, y, t);
parameter gradients are obtained by reverse mode applied over the
forward-mode program. Reductions run in fixed sequential order, so
gradients are deterministic bit-for-bit for identical seeds and inputs.
"""
from .gradcheck import (FD_ATOL, FD_RTOL, FD_STEP, GradientReport,
                        central_difference, fd_compare, loss_gradient)
from .ops import BatchedDual, lift_inputs, value_of
from .tape import Tensor

__all__ = ["Tensor", "BatchedDual", "lift_inputs", "value_of",
           "GradientReport", "loss_gradient", "central_difference",
           "fd_compare", "FD_STEP", "FD_RTOL", "FD_ATOL"]
