"""
Differentiation engine exceptions
"""


class DiffKernelError(Exception):
    """Base error for the differentiation engine"""
    pass


class ShapeError(DiffKernelError):
    """Operand shapes do not fit the primitive or the declared signature"""
    pass


class NotScalarError(DiffKernelError):
    """grad() called on a function whose output is not a scalar"""
    pass


class NonFiniteError(DiffKernelError):
    """A value or derivative contains NaN or Inf"""
    pass
