from . import ops
from .gradcheck import GradCheckResult, gradcheck
from .optim import Adam, adam_step
from .tensor import (Parameter, ShapeError, Tensor, backward, default_dtype, get_default_dtype,
                     no_grad, set_default_dtype)

__all__ = [
    "Adam", "GradCheckResult", "Parameter", "ShapeError", "Tensor", "adam_step", "backward",
    "default_dtype", "get_default_dtype", "gradcheck", "no_grad", "ops", "set_default_dtype",
]
