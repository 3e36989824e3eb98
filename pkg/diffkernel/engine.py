"""
Differentiation engine.

Wraps a Python function built from diffkernel primitives as a
DifferentiableFn and exposes evaluate / grad / value_and_grad / jvp / vjp.
grad is vjp with a unit cotangent through the same code path, so the two
agree bit for bit.
"""

from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from diffkernel.errors import NotScalarError, ShapeError
from diffkernel.tracing import ForwardTrace, Node, ReverseTrace

Shape = Tuple[int, ...]
Inputs = Union[np.ndarray, Sequence[np.ndarray]]


class DifferentiableFn:
    """
    A function of one or more tensors composed from registered primitives.

    Args:
        fn: Callable taking `arity` tensors; must use diffkernel.ops or Node
            operators so it can be traced
        in_shapes: Declared input shapes; None entries accept any shape
        name: Used in diagnostics
    """

    def __init__(self, fn: Callable, in_shapes: Sequence[Optional[Shape]], name: str = "fn"):
        self.fn = fn
        self.in_shapes = tuple(None if s is None else tuple(s) for s in in_shapes)
        self.name = name

    @property
    def arity(self) -> int:
        return len(self.in_shapes)

    def __call__(self, *inputs):
        return self.fn(*inputs)

    def __repr__(self):
        return f"DifferentiableFn(name={self.name!r}, in_shapes={self.in_shapes})"

    def check_inputs(self, inputs: Sequence[np.ndarray], op: str) -> Tuple[np.ndarray, ...]:
        if len(inputs) != self.arity:
            raise ShapeError(f"{op}({self.name}): expected {self.arity} inputs, got {len(inputs)}")
        arrays = []
        for i, (x, declared) in enumerate(zip(inputs, self.in_shapes)):
            x = np.asarray(x, dtype=np.float64)
            if declared is not None and x.shape != declared:
                raise ShapeError(f"{op}({self.name}): input {i} has shape {x.shape}, declared {declared}")
            arrays.append(x)
        return tuple(arrays)


def _pack(f: DifferentiableFn, x: Inputs) -> Tuple[np.ndarray, ...]:
    if f.arity == 1:
        return (x,)
    return tuple(x)


def _unpack(f: DifferentiableFn, results):
    if f.arity == 1:
        return results[0]
    return tuple(results)


def _out_value(out) -> np.ndarray:
    return out.value if isinstance(out, Node) else np.asarray(out, dtype=np.float64)


def evaluate(f: DifferentiableFn, inputs: Inputs) -> np.ndarray:
    """f(inputs) on plain arrays"""
    arrays = f.check_inputs(_pack(f, inputs), "evaluate")
    return np.asarray(f.fn(*arrays), dtype=np.float64)


def jvp(f: DifferentiableFn, x: Inputs, v: Inputs) -> np.ndarray:
    """J_f(x)·v by forward-mode accumulation"""
    return value_and_jvp(f, x, v)[1]


def value_and_jvp(f: DifferentiableFn, x: Inputs, v: Inputs) -> Tuple[np.ndarray, np.ndarray]:
    """(f(x), J_f(x)·v) from one forward pass"""
    arrays = f.check_inputs(_pack(f, x), "jvp")
    tangents = _pack(f, v)
    if len(tangents) != len(arrays):
        raise ShapeError(f"jvp({f.name}): expected {len(arrays)} tangents, got {len(tangents)}")

    trace = ForwardTrace()
    nodes = []
    for i, (a, t) in enumerate(zip(arrays, tangents)):
        if t is not None and np.shape(t) != a.shape:
            raise ShapeError(f"jvp({f.name}): tangent {i} has shape {np.shape(t)}, input has {a.shape}")
        nodes.append(trace.input(a, t))

    out = f.fn(*nodes)
    if isinstance(out, Node):
        return out.value, out.tangent
    value = np.asarray(out, dtype=np.float64)
    return value, np.zeros_like(value)


def vjp(f: DifferentiableFn, x: Inputs, w: np.ndarray):
    """J_f(x)ᵀ·w by reverse-mode accumulation"""
    return _value_and_vjp(f, x, w, "vjp")[1]


def _value_and_vjp(f: DifferentiableFn, x: Inputs, w, op: str):
    arrays = f.check_inputs(_pack(f, x), op)

    trace = ReverseTrace()
    nodes = [trace.input(a) for a in arrays]
    out = f.fn(*nodes)
    value = _out_value(out)

    if w is None:
        if value.size != 1:
            raise NotScalarError(f"{op}({f.name}): output has shape {value.shape}, expected a scalar")
        w = np.ones(value.shape)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != value.shape:
        raise ShapeError(f"{op}({f.name}): cotangent has shape {w.shape}, output has {value.shape}")

    if isinstance(out, Node):
        grads = trace.backward(out, w, nodes)
    else:
        grads = [np.zeros_like(a) for a in arrays]
    return value, _unpack(f, grads)


def grad(f: DifferentiableFn, x: Inputs):
    """∇_x f for scalar-valued f"""
    return _value_and_vjp(f, x, None, "grad")[1]


def value_and_grad(f: DifferentiableFn, x: Inputs):
    """(f(x), ∇_x f(x)) from one reverse pass"""
    value, g = _value_and_vjp(f, x, None, "value_and_grad")
    return float(value.reshape(())), g
