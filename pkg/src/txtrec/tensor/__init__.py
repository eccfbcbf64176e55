"""Dense tensors with reverse-mode automatic differentiation."""

from txtrec.tensor import ops
from txtrec.tensor.core import OpRecord, Tape, Tensor, active_tape, backward, tensor
from txtrec.tensor.gradcheck import GradCheckReport, analytic_gradients, check_gradients
from txtrec.tensor.ops import (
    elementwise,
    matmul,
    softmax_lastdim,
)
from txtrec.tensor.precision import get_dtype, get_precision, precision, set_precision
from txtrec.tensor.rng import make_rng

__all__ = [
    "GradCheckReport",
    "OpRecord",
    "Tape",
    "Tensor",
    "active_tape",
    "analytic_gradients",
    "backward",
    "check_gradients",
    "elementwise",
    "get_dtype",
    "get_precision",
    "make_rng",
    "matmul",
    "ops",
    "precision",
    "set_precision",
    "softmax_lastdim",
    "tensor",
]
