"""
Traces for forward-mode (dual numbers) and reverse-mode (tape) accumulation.

A composite function is ordinary Python calling `bind` (directly or through
the operators on Node / the helpers in diffkernel.ops). On plain arrays bind
just runs the primitive's forward rule; on Nodes it also records what the
active trace needs. One trace at a time: mixing Nodes of different traces in
one primitive is rejected.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np

from diffkernel.errors import DiffKernelError, ShapeError
from diffkernel.primitives import primitive


class Node:
    """A traced value. Carries a tangent under ForwardTrace, tape links under ReverseTrace."""

    __slots__ = ("value", "tangent", "trace", "prim", "parents", "params")

    # numpy defers mixed array/Node arithmetic to the Node operators
    __array_ufunc__ = None

    def __init__(self, value, trace, tangent=None, prim=None, parents=(), params=None):
        self.value = value
        self.tangent = tangent
        self.trace = trace
        self.prim = prim
        self.parents = parents
        self.params = params or {}

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __repr__(self):
        return f"Node(shape={self.value.shape}, trace={type(self.trace).__name__})"

    def __add__(self, other):
        return bind("add", self, other)

    def __radd__(self, other):
        return bind("add", other, self)

    def __sub__(self, other):
        return bind("sub", self, other)

    def __rsub__(self, other):
        return bind("sub", other, self)

    def __mul__(self, other):
        return bind("mul", self, other)

    def __rmul__(self, other):
        return bind("mul", other, self)

    def __truediv__(self, other):
        return bind("div", self, other)

    def __rtruediv__(self, other):
        return bind("div", other, self)

    def __neg__(self):
        return bind("neg", self)

    def __matmul__(self, other):
        return bind("matmul", self, other)

    def __rmatmul__(self, other):
        return bind("matmul", other, self)

    def __getitem__(self, index):
        return bind("getitem", self, index=index)


class ForwardTrace:
    """Dual-number trace: tangents are pushed forward eagerly with every primitive."""

    def input(self, value: np.ndarray, tangent: Optional[np.ndarray]) -> Node:
        value = np.asarray(value, dtype=np.float64)
        tangent = np.zeros_like(value) if tangent is None else np.asarray(tangent, dtype=np.float64)
        return Node(value, self, tangent=tangent)

    def process(self, prim, args, params) -> Node:
        primals = [a.value if isinstance(a, Node) else a for a in args]
        tangents = [a.tangent if isinstance(a, Node) else None for a in args]
        out = _as_value(prim.forward(*primals, **params))
        tangent = _as_value(prim.jvp(primals, tangents, out, **params))
        return Node(out, self, tangent=tangent)


class ReverseTrace:
    """Tape trace: records every primitive, then pulls cotangents back in reverse order."""

    def __init__(self):
        self.tape: List[Node] = []

    def input(self, value: np.ndarray) -> Node:
        return Node(np.asarray(value, dtype=np.float64), self)

    def process(self, prim, args, params) -> Node:
        primals = [a.value if isinstance(a, Node) else a for a in args]
        out = _as_value(prim.forward(*primals, **params))
        node = Node(out, self, prim=prim, parents=tuple(args), params=params)
        self.tape.append(node)
        return node

    def backward(self, output: Node, cotangent: np.ndarray, inputs: Sequence[Node]) -> List[np.ndarray]:
        """
        Accumulate cotangents from output back to inputs

        Args:
            output: Node produced on this trace
            cotangent: Array shaped like output.value
            inputs: Input nodes whose cotangents are returned

        Returns:
            One cotangent per input, zeros where the output does not depend on it
        """
        grads: Dict[int, np.ndarray] = {id(output): np.asarray(cotangent, dtype=np.float64)}

        for node in reversed(self.tape):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            primals = [p.value if isinstance(p, Node) else p for p in node.parents]
            parent_grads = node.prim.vjp(g, primals, node.value, **node.params)
            for parent, pg in zip(node.parents, parent_grads):
                if not isinstance(parent, Node) or pg is None:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

        return [
            np.array(grads[id(x)], dtype=np.float64) if id(x) in grads else np.zeros_like(x.value)
            for x in inputs
        ]


def _as_value(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def bind(name: str, *args, **params):
    """
    Apply primitive `name` to args.

    Plain arrays in, plain array out. If any arg is a Node the active
    trace processes the call and a Node comes back.
    """
    prim = primitive(name)

    trace = None
    converted = []
    for a in args:
        if isinstance(a, Node):
            if trace is not None and a.trace is not trace:
                raise DiffKernelError(
                    f"{name}: operands come from different traces; nested differentiation is not supported"
                )
            trace = a.trace
            converted.append(a)
        else:
            converted.append(_as_value(a))

    try:
        if trace is None:
            return _as_value(prim.forward(*converted, **params))
        return trace.process(prim, converted, params)
    except ShapeError:
        raise
    except (ValueError, IndexError) as e:
        raise ShapeError(f"{name}: {e}") from e


def value_of(x) -> np.ndarray:
    """Underlying array of a Node or array"""
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)
