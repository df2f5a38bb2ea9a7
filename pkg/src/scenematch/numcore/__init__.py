"""Dense math primitives, the reverse-mode tape, and the gradient checker."""

from .autograd import (
    Tensor,
    as_tensor,
    concat,
    gather_rows,
    is_grad_enabled,
    l2_normalize_rows,
    no_grad,
    parameter,
    segment_sum,
    softmax as softmax_t,
    stack,
    take_along_axis,
)
from .functions import DenseMatrix, DenseVector, cosine_sim, leaky_relu, softmax
from .gradcheck import grad_check

__all__ = [
    "DenseMatrix",
    "DenseVector",
    "Tensor",
    "as_tensor",
    "concat",
    "cosine_sim",
    "gather_rows",
    "grad_check",
    "is_grad_enabled",
    "l2_normalize_rows",
    "leaky_relu",
    "no_grad",
    "parameter",
    "segment_sum",
    "softmax",
    "softmax_t",
    "stack",
    "take_along_axis",
]
