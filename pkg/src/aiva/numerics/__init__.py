from .tensor import (
    DEFAULT_DTYPE,
    NonFiniteError,
    NumericsError,
    ShapeError,
    Tensor,
    add,
    add_bias,
    backward,
    clamp_min,
    concat,
    embedding,
    exp,
    gelu,
    l2_normalize,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean_axis,
    mul,
    ones,
    randn,
    relu,
    reshape,
    scale,
    shift,
    slice_cols,
    softmax,
    stack_rows,
    sum_all,
    sum_axis,
    tensor,
    transpose,
    zeros,
)
from .gradcheck import GradCheckReport, grad_check, grad_check_params

__all__ = [
    "DEFAULT_DTYPE",
    "GradCheckReport",
    "NonFiniteError",
    "NumericsError",
    "ShapeError",
    "Tensor",
    "add",
    "add_bias",
    "backward",
    "clamp_min",
    "concat",
    "embedding",
    "exp",
    "gelu",
    "grad_check",
    "grad_check_params",
    "l2_normalize",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "mean_axis",
    "mul",
    "ones",
    "randn",
    "relu",
    "reshape",
    "scale",
    "shift",
    "slice_cols",
    "softmax",
    "stack_rows",
    "sum_all",
    "sum_axis",
    "tensor",
    "transpose",
    "zeros",
]
