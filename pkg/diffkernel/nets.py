"""Small smooth networks used as differentiation fixtures."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from diffkernel import ops
from diffkernel.engine import DifferentiableFn


@dataclass(frozen=True)
class SmoothNet:
    """y = W2·tanh(W1·x + b1) + b2"""
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def random(cls, seed: int, widths: Sequence[int] = (8, 16, 8), scale: float = 1.0) -> "SmoothNet":
        n_in, hidden, n_out = widths
        rng = np.random.default_rng(seed)
        return cls(
            W1=rng.normal(0.0, scale / np.sqrt(n_in), (hidden, n_in)),
            b1=rng.normal(0.0, 0.1, hidden),
            W2=rng.normal(0.0, scale / np.sqrt(hidden), (n_out, hidden)),
            b2=rng.normal(0.0, 0.1, n_out),
        )

    @property
    def n_in(self) -> int:
        return self.W1.shape[1]

    @property
    def n_out(self) -> int:
        return self.W2.shape[0]

    def forward(self, x):
        return ops.affine(self.W2, ops.tanh(ops.affine(self.W1, x, self.b1)), self.b2)

    def as_fn(self, name: str = "smooth_net") -> DifferentiableFn:
        return DifferentiableFn(self.forward, [(self.n_in,)], name=name)

    def summed(self) -> DifferentiableFn:
        """Scalar readout: sum of the outputs"""
        return DifferentiableFn(lambda x: ops.reduce_sum(self.forward(x)), [(self.n_in,)], name="smooth_net_sum")
