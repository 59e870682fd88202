"""Feed-forward encoder (affine -> ReLU ... -> affine -> L2 norm) with manual backprop."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError
from .numeric import FLOAT

MIN_NORM = 1e-12


@dataclass
class MlpEncoder:
    """``layers`` is a list of ``(W, b)`` with W of shape (fan_in, fan_out)."""

    layers: list

    def __post_init__(self):
        self.layers = [(np.asarray(W, dtype=FLOAT), np.asarray(b, dtype=FLOAT))
                       for W, b in self.layers]
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        for k, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise DimensionError(f"layer {k}: W {W.shape} and b {b.shape} do not match")
            if k and W.shape[0] != self.layers[k - 1][0].shape[1]:
                raise DimensionError(f"layer {k} input {W.shape[0]} does not chain "
                                     f"from {self.layers[k - 1][0].shape[1]}")

    @property
    def input_dim(self):
        return self.layers[0][0].shape[0]

    @property
    def output_dim(self):
        return self.layers[-1][0].shape[1]

    @property
    def dims(self):
        return [self.input_dim] + [W.shape[1] for W, _ in self.layers]

    @classmethod
    def init(cls, dims, rng):
        """He init for layers feeding a ReLU, 1/sqrt(fan_in) for the output layer."""
        if len(dims) < 2:
            raise ValueError("dims must list at least input and output sizes")
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            last = k == len(dims) - 2
            std = np.sqrt(1.0 / fan_in) if last else np.sqrt(2.0 / fan_in)
            layers.append((rng.normal(0.0, std, size=(fan_in, fan_out)), np.zeros(fan_out)))
        return cls(layers)

    def copy(self):
        return MlpEncoder([(W.copy(), b.copy()) for W, b in self.layers])


@dataclass
class ForwardTape:
    inputs: list  # input to each layer
    pre: list  # affine output of each layer
    u: np.ndarray  # final affine output, before normalization
    norm: np.ndarray
    z: np.ndarray
    squeeze: bool


def forward(enc, x):
    """Encode one vector or a batch of rows; returns ``(z, tape)`` with ||z|| = 1."""
    x = np.asarray(x, dtype=FLOAT)
    squeeze = x.ndim == 1
    X = x[None, :] if squeeze else x
    if X.ndim != 2 or X.shape[1] != enc.input_dim:
        raise DimensionError(f"encoder expects {enc.input_dim} features, got shape {x.shape}")

    inputs, pre = [], []
    h = X
    last = len(enc.layers) - 1
    for k, (W, b) in enumerate(enc.layers):
        inputs.append(h)
        a = h @ W + b
        pre.append(a)
        h = a if k == last else np.maximum(a, 0.0)
    u = h
    norm = np.sqrt(np.einsum("ij,ij->i", u, u))
    if np.any(norm < MIN_NORM):
        bad = np.flatnonzero(norm < MIN_NORM).tolist()
        raise DegenerateInputError(f"embedding norm below {MIN_NORM} for rows {bad}")
    z = u / norm[:, None]
    tape = ForwardTape(inputs, pre, u, norm, z, squeeze)
    return (z[0] if squeeze else z), tape


def normalize_backward(z, norm, grad_z):
    """Pull ``grad_z`` back through z = u / ||u||: (I - z z^T) grad_z / ||u||."""
    return (grad_z - z * np.einsum("ij,ij->i", z, grad_z)[:, None]) / norm[:, None]


def backward(enc, tape, grad_z=None, grad_u=None):
    """Gradients of a scalar loss given its gradient w.r.t. z and/or u.

    Returns ``(layer_grads, grad_x)`` where ``layer_grads`` is a list of
    ``(dW, db)`` aligned with ``enc.layers``.
    """
    if len(tape.inputs) != len(enc.layers):
        raise DimensionError(f"tape has {len(tape.inputs)} layers, encoder {len(enc.layers)}")

    def as_batch(g):
        g = np.asarray(g, dtype=FLOAT)
        g = g[None, :] if g.ndim == 1 else g
        if g.shape != tape.u.shape:
            raise DimensionError(f"upstream gradient shape {g.shape} != {tape.u.shape}")
        return g

    g = np.zeros_like(tape.u)
    if grad_z is not None:
        g = g + normalize_backward(tape.z, tape.norm, as_batch(grad_z))
    if grad_u is not None:
        g = g + as_batch(grad_u)

    grads = [None] * len(enc.layers)
    last = len(enc.layers) - 1
    for k in range(last, -1, -1):
        W, _ = enc.layers[k]
        if k != last:
            g = g * (tape.pre[k] > 0)
        grads[k] = (tape.inputs[k].T @ g, g.sum(axis=0))
        g = g @ W.T
    grad_x = g[0] if tape.squeeze else g
    return grads, grad_x
