"""
Composite-friendly operations.

Each helper works on plain arrays and on traced Nodes alike, so a function
written with them can be evaluated, differentiated forward and
differentiated in reverse without change.
"""

from typing import Optional, Sequence, Tuple

from diffkernel.tracing import bind


def add(a, b):
    return bind("add", a, b)


def sub(a, b):
    return bind("sub", a, b)


def mul(a, b):
    return bind("mul", a, b)


def div(a, b):
    return bind("div", a, b)


def neg(x):
    return bind("neg", x)


def matmul(a, b):
    return bind("matmul", a, b)


def conv2d(x, k):
    """'same' convolution: image (C,H,W), kernel (O,C,kh,kw) with odd sides"""
    return bind("conv2d", x, k)


def tanh(x):
    return bind("tanh", x)


def softplus(x):
    return bind("softplus", x)


def exp(x):
    return bind("exp", x)


def log(x):
    return bind("log", x)


def sqrt(x):
    return bind("sqrt", x)


def reduce_sum(x, axis: Optional[int] = None):
    return bind("sum", x, axis=axis)


def reduce_mean(x, axis: Optional[int] = None):
    n = x.size if axis is None else x.shape[axis]
    return bind("sum", x, axis=axis) * (1.0 / n)


def logsumexp(x, axis: Optional[int] = None):
    return bind("logsumexp", x, axis=axis)


def reshape(x, shape: Tuple[int, ...]):
    return bind("reshape", x, shape=tuple(shape))


def getitem(x, index):
    return bind("getitem", x, index=index)


def concat(xs: Sequence, axis: int = 0):
    return bind("concat", *xs, axis=axis)


# -------------------------------------------------------------------------
# Convenience composites
# -------------------------------------------------------------------------

def square(x):
    return mul(x, x)


def affine(W, x, b):
    """W @ x + b"""
    return add(matmul(W, x), b)


def hadamard(a, b):
    return mul(a, b)


def masked_sum(x, mask):
    """Sum of x over the entries where mask is 1"""
    return reduce_sum(mul(x, mask))


def dot(a, b):
    return reduce_sum(mul(a, b))


def sq_norm(x):
    return reduce_sum(mul(x, x))
