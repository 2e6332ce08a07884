"""Parameter construction helpers shared by the network components."""

import numpy as np

from .autograd import Tensor

INIT_SCALE = 0.08


class ParamBuilder:
    """Creates named parameter tensors in a fixed order from one rng.

    Construction order defines the random stream, so identical seeds give
    identical initializations. All parameters are uniform(-0.08, 0.08).
    """

    def __init__(self, rng, dtype):
        self.rng = rng
        self.dtype = np.dtype(dtype)
        self.params = {}

    def make(self, name, *shape):
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        data = self.rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape).astype(self.dtype)
        t = Tensor(data, requires_grad=True)
        self.params[name] = t
        return t


class Mlp2:
    """Two-layer perceptron w2 @ relu(w1 x + b1) + b2 producing one logit
    per row; the scoring head used by the attention modules."""

    def __init__(self, builder: ParamBuilder, name: str, in_dim: int, hidden: int, out_dim: int = 1):
        self.w1 = builder.make(f"{name}.w1", in_dim, hidden)
        self.b1 = builder.make(f"{name}.b1", hidden)
        self.w2 = builder.make(f"{name}.w2", hidden, out_dim)
        self.b2 = builder.make(f"{name}.b2", out_dim)

    def __call__(self, x):
        from .autograd import relu

        return relu(x @ self.w1 + self.b1) @ self.w2 + self.b2


class Linear:
    def __init__(self, builder: ParamBuilder, name: str, in_dim: int, out_dim: int):
        self.w = builder.make(f"{name}.w", in_dim, out_dim)
        self.b = builder.make(f"{name}.b", out_dim)

    def __call__(self, x):
        return x @ self.w + self.b
