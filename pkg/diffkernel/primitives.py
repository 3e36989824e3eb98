"""
Primitive registry.

Every primitive carries three rules:
  forward(*primals, **params)                  -> output
  jvp(primals, tangents, out, **params)        -> output tangent
  vjp(cotangent, primals, out, **params)       -> one cotangent per operand

Tangents of operands that do not depend on the differentiated input are
passed as None; vjp rules may return None for operands that never need a
cotangent. All primitives are C1 so finite-difference checks apply.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from diffkernel.errors import ShapeError


@dataclass(frozen=True)
class Primitive:
    """A differentiable primitive operation"""
    name: str
    forward: Callable[..., np.ndarray]
    jvp: Callable[..., np.ndarray]
    vjp: Callable[..., tuple]


PRIMITIVES: Dict[str, Primitive] = {}


def register_primitive(name: str, forward, jvp, vjp) -> Primitive:
    """
    Register a primitive under name.
    Usage: register_primitive("cube", fwd, jvp_rule, vjp_rule)
    """
    prim = Primitive(name=name, forward=forward, jvp=jvp, vjp=vjp)
    PRIMITIVES[name] = prim
    return prim


# =========================================================================
# HELPERS
# =========================================================================

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast cotangent back down to an operand's shape"""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _accumulate(out_shape: tuple, *terms: Optional[np.ndarray]) -> np.ndarray:
    """Sum the non-None tangent terms and broadcast to the output shape"""
    acc = None
    for term in terms:
        if term is None:
            continue
        acc = term if acc is None else acc + term
    if acc is None:
        return np.zeros(out_shape)
    if acc.shape != out_shape:
        acc = np.broadcast_to(acc, out_shape).copy()
    return acc


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _expand(g: np.ndarray, shape: tuple, axis) -> np.ndarray:
    """Broadcast a reduced cotangent back over the reduced axes"""
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), shape).copy()


# =========================================================================
# ELEMENTWISE ARITHMETIC
# =========================================================================

def _binary_forward(fn):
    def forward(a, b):
        try:
            np.broadcast_shapes(np.shape(a), np.shape(b))
        except ValueError as e:
            raise ShapeError(f"{fn.__name__}: operands {np.shape(a)} and {np.shape(b)} do not broadcast") from e
        return fn(a, b)
    return forward


register_primitive(
    "add",
    _binary_forward(np.add),
    lambda p, t, out: _accumulate(out.shape, t[0], t[1]),
    lambda g, p, out: (_unbroadcast(g, p[0].shape), _unbroadcast(g, p[1].shape)),
)

register_primitive(
    "sub",
    _binary_forward(np.subtract),
    lambda p, t, out: _accumulate(out.shape, t[0], None if t[1] is None else -t[1]),
    lambda g, p, out: (_unbroadcast(g, p[0].shape), _unbroadcast(-g, p[1].shape)),
)

register_primitive(
    "mul",
    _binary_forward(np.multiply),
    lambda p, t, out: _accumulate(
        out.shape,
        None if t[0] is None else t[0] * p[1],
        None if t[1] is None else p[0] * t[1],
    ),
    lambda g, p, out: (_unbroadcast(g * p[1], p[0].shape), _unbroadcast(g * p[0], p[1].shape)),
)

register_primitive(
    "div",
    _binary_forward(np.divide),
    lambda p, t, out: _accumulate(
        out.shape,
        None if t[0] is None else t[0] / p[1],
        None if t[1] is None else -out * t[1] / p[1],
    ),
    lambda g, p, out: (_unbroadcast(g / p[1], p[0].shape), _unbroadcast(-g * out / p[1], p[1].shape)),
)

register_primitive(
    "neg",
    np.negative,
    lambda p, t, out: -t[0],
    lambda g, p, out: (-g,),
)


# =========================================================================
# LINEAR MAPS
# =========================================================================

def _matmul_forward(a, b):
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _matmul_vjp(g, p, out):
    a, b = p
    ga = np.outer(g, b) if b.ndim == 1 else g @ b.T
    return ga, a.T @ g


register_primitive(
    "matmul",
    _matmul_forward,
    lambda p, t, out: _accumulate(
        out.shape,
        None if t[0] is None else t[0] @ p[1],
        None if t[1] is None else p[0] @ t[1],
    ),
    _matmul_vjp,
)


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    padded = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    return sliding_window_view(padded, (kh, kw), axis=(1, 2))


def _conv_forward(x, k):
    if x.ndim != 3 or k.ndim != 4 or k.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d: image {x.shape} incompatible with kernel {k.shape}")
    if k.shape[2] % 2 == 0 or k.shape[3] % 2 == 0:
        raise ShapeError(f"conv2d: kernel sides must be odd, got {k.shape[2:]}")
    return np.einsum("chwij,ocij->ohw", _windows(x, k.shape[2], k.shape[3]), k)


def _conv_jvp(p, t, out):
    x, k = p
    return _accumulate(
        out.shape,
        None if t[0] is None else _conv_forward(t[0], k),
        None if t[1] is None else _conv_forward(x, t[1]),
    )


def _conv_vjp(g, p, out):
    x, k = p
    flipped = k[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    gx = _conv_forward(g, np.ascontiguousarray(flipped))
    gk = np.einsum("ohw,chwij->ocij", g, _windows(x, k.shape[2], k.shape[3]))
    return gx, gk


# 'same' zero padding, stride 1, odd kernels; image (C,H,W), kernel (O,C,kh,kw)
register_primitive("conv2d", _conv_forward, _conv_jvp, _conv_vjp)


# =========================================================================
# SMOOTH NONLINEARITIES
# =========================================================================

register_primitive(
    "tanh",
    np.tanh,
    lambda p, t, out: t[0] * (1.0 - out * out),
    lambda g, p, out: (g * (1.0 - out * out),),
)

register_primitive(
    "softplus",
    lambda x: np.logaddexp(0.0, x),
    lambda p, t, out: t[0] * _sigmoid(p[0]),
    lambda g, p, out: (g * _sigmoid(p[0]),),
)

register_primitive(
    "exp",
    np.exp,
    lambda p, t, out: t[0] * out,
    lambda g, p, out: (g * out,),
)

register_primitive(
    "log",
    np.log,
    lambda p, t, out: t[0] / p[0],
    lambda g, p, out: (g / p[0],),
)

register_primitive(
    "sqrt",
    np.sqrt,
    lambda p, t, out: t[0] / (2.0 * out),
    lambda g, p, out: (g / (2.0 * out),),
)


# =========================================================================
# REDUCTIONS AND RESHAPING
# =========================================================================

register_primitive(
    "sum",
    lambda x, axis=None: np.sum(x, axis=axis),
    lambda p, t, out, axis=None: np.asarray(np.sum(t[0], axis=axis)),
    lambda g, p, out, axis=None: (_expand(g, p[0].shape, axis),),
)


def _logsumexp_forward(x, axis=None):
    m = np.max(x, axis=axis, keepdims=True)
    y = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(y, axis=axis) if axis is not None else y.reshape(())


def _softmax_weights(x, out, axis):
    keep = out if axis is None else np.expand_dims(out, axis)
    return np.exp(x - keep)


register_primitive(
    "logsumexp",
    _logsumexp_forward,
    lambda p, t, out, axis=None: np.asarray(np.sum(_softmax_weights(p[0], out, axis) * t[0], axis=axis)),
    lambda g, p, out, axis=None: (_expand(g, p[0].shape, axis) * _softmax_weights(p[0], out, axis),),
)


def _reshape_forward(x, shape):
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}")
    return x.reshape(shape)


register_primitive(
    "reshape",
    _reshape_forward,
    lambda p, t, out, shape: t[0].reshape(shape),
    lambda g, p, out, shape: (g.reshape(p[0].shape),),
)


def _getitem_vjp(g, p, out, index):
    full = np.zeros_like(p[0])
    np.add.at(full, index, g)
    return (full,)


register_primitive(
    "getitem",
    lambda x, index: np.array(x[index]),
    lambda p, t, out, index: np.array(t[0][index]),
    _getitem_vjp,
)


def _concat_forward(*xs, axis=0):
    try:
        return np.concatenate(xs, axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: {e}") from e


def _concat_jvp(p, t, out, axis=0):
    parts = [np.zeros_like(x) if tx is None else tx for x, tx in zip(p, t)]
    return np.concatenate(parts, axis=axis)


def _concat_vjp(g, p, out, axis=0):
    cuts = np.cumsum([x.shape[axis] for x in p])[:-1]
    return tuple(np.split(g, cuts, axis=axis))


register_primitive("concat", _concat_forward, _concat_jvp, _concat_vjp)


def primitive(name: str) -> Primitive:
    """Look up a registered primitive"""
    try:
        return PRIMITIVES[name]
    except KeyError:
        available = ", ".join(sorted(PRIMITIVES))
        raise KeyError(f"Unknown primitive: '{name}'. Available primitives: {available}") from None


def primitive_names() -> Sequence[str]:
    return tuple(sorted(PRIMITIVES))
