"""
diffkernel: exact forward- and reverse-mode differentiation over a closed
set of smooth primitives, 64-bit throughout.
"""

from diffkernel.engine import (
    DifferentiableFn,
    evaluate,
    grad,
    jvp,
    value_and_grad,
    value_and_jvp,
    vjp,
)
from diffkernel.errors import DiffKernelError, NonFiniteError, NotScalarError, ShapeError
from diffkernel.nets import SmoothNet
from diffkernel.primitives import PRIMITIVES, Primitive, register_primitive
from diffkernel.tracing import Node, bind, value_of

__all__ = [
    "DifferentiableFn",
    "evaluate",
    "grad",
    "jvp",
    "value_and_grad",
    "value_and_jvp",
    "vjp",
    "DiffKernelError",
    "NonFiniteError",
    "NotScalarError",
    "ShapeError",
    "SmoothNet",
    "PRIMITIVES",
    "Primitive",
    "register_primitive",
    "Node",
    "bind",
    "value_of",
]
