from .tensor import (
    ACOSH_CLAMP,
    Tape,
    Tensor,
    absolute,
    acosh,
    acosh_over_sqrtm1,
    add,
    as_tensor,
    asinh,
    clamp,
    concat,
    cosh,
    cosh_sqrt,
    divide,
    elu,
    exp,
    is_tensor,
    log,
    matmul,
    mean,
    multiply,
    negative,
    norm,
    power,
    reshape,
    sigmoid,
    sinh,
    sinhc_sqrt,
    softmax,
    softmax_cross_entropy,
    sqrt,
    stack,
    subtract,
    sum_,
    take,
    take_along_axis,
    transpose,
    value_of,
    where,
)
from .convops import avg_pool2d, conv2d, same_padding
from .fdcheck import gradcheck, numeric_gradient
from .optim import Adam, adam_init, adam_step

__all__ = [
    "ACOSH_CLAMP", "Tape", "Tensor", "absolute", "acosh", "acosh_over_sqrtm1",
    "add", "as_tensor", "asinh", "clamp", "concat", "cosh", "cosh_sqrt",
    "divide", "elu", "exp", "is_tensor", "log", "matmul", "mean", "multiply",
    "negative", "norm", "power", "reshape", "sigmoid", "sinh", "sinhc_sqrt",
    "softmax", "softmax_cross_entropy", "sqrt", "stack", "subtract", "sum_",
    "take", "take_along_axis", "transpose", "value_of", "where",
    "avg_pool2d", "conv2d", "same_padding", "gradcheck", "numeric_gradient",
    "Adam", "adam_init", "adam_step",
]
