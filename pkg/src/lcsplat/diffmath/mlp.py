"""Small fully connected networks on the autodiff tape."""

import numpy as np

from .tensor import Tensor, TapeError, add, matmul, relu, sigmoid

_ACTIVATIONS = ("relu", "sigmoid", "none")


class Mlp:
    """Stack of linear layers with per-layer activation tags.

    Weights start uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases at
    zero, drawn from the given seed so runs are reproducible.
    """

    def __init__(self, widths, activations, seed=0, name="mlp", dtype=np.float32):
        if len(activations) != len(widths) - 1:
            raise TapeError("need one activation tag per layer")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise TapeError(f"unknown activation {act!r}")
        self.widths = list(widths)
        self.activations = list(activations)
        self.name = name
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for li, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype)
            self.weights.append(Tensor(w, requires_grad=True, name=f"{name}.w{li}", dtype=dtype))
            self.biases.append(Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True,
                                      name=f"{name}.b{li}", dtype=dtype))

    def forward(self, x):
        if x.data.shape[-1] != self.widths[0]:
            raise TapeError(
                f"{self.name}: input width {x.data.shape[-1]} != first layer width {self.widths[0]}")
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = add(matmul(h, w), b)
            if act == "relu":
                h = relu(h)
            elif act == "sigmoid":
                h = sigmoid(h)
        return h

    __call__ = forward

    def parameters(self):
        return self.weights + self.biases

    def state_dict(self):
        out = {}
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{self.name}.w{li}"] = w.data
            out[f"{self.name}.b{li}"] = b.data
        return out

    def load_state_dict(self, arrays):
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            w.data = np.asarray(arrays[f"{self.name}.w{li}"], dtype=w.data.dtype).reshape(w.data.shape)
            b.data = np.asarray(arrays[f"{self.name}.b{li}"], dtype=b.data.dtype).reshape(b.data.shape)
