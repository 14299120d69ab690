"""Small float32 MLPs with hand-rolled backprop.

A network is a flat list of layers: `Dense` instances interleaved with the
string `"relu"`. That is deliberately the same vocabulary as the bundle
format the weights are exported into, so the export step is a direct
translation. Everything trains in float32; the few lines of Adam below are
all the optimizer machinery desk-scale runs need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RELU = "relu"


@dataclass
class Dense:
    """One affine layer; weight is (d_in, d_out), applied as x @ W + b."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        self.weight = np.asarray(self.weight, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"bad dense shapes {self.weight.shape} / {self.bias.shape}"
            )


def init_mlp(dims, rng, relu_output=True) -> list:
    """He-initialized dense stack d0 -> d1 -> ... -> dk with ReLUs between.

    `relu_output=False` leaves the last layer linear (critic heads, decoder
    outputs).
    """
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError(f"need >= 2 positive dims, got {dims}")
    layers: list = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        scale = np.sqrt(2.0 / a).astype(np.float32)
        layers.append(
            Dense(
                rng.standard_normal((a, b), dtype=np.float32) * scale,
                np.zeros(b, dtype=np.float32),
            )
        )
        if relu_output or i < len(dims) - 2:
            layers.append(RELU)
    return layers


def forward(layers, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    for layer in layers:
        if isinstance(layer, Dense):
            x = x @ layer.weight + layer.bias
        elif layer == RELU:
            x = np.maximum(x, np.float32(0.0))
        else:
            raise TypeError(f"unsupported layer {layer!r}")
    return x


def forward_cached(layers, x: np.ndarray):
    """Forward pass keeping each layer's input, for backprop."""
    x = np.asarray(x, dtype=np.float32)
    caches = []
    for layer in layers:
        caches.append(x)
        if isinstance(layer, Dense):
            x = x @ layer.weight + layer.bias
        else:
            x = np.maximum(x, np.float32(0.0))
    return x, caches


def backward(layers, caches, grad: np.ndarray):
    """Backprop `grad` (d loss / d output) through the stack.

    Returns (param_grads, grad_input) where param_grads lists one
    (dW, db) pair per Dense layer, in layer order.
    """
    grad = np.asarray(grad, dtype=np.float32)
    param_grads: list = [None] * len(layers)
    for idx in range(len(layers) - 1, -1, -1):
        layer, x = layers[idx], caches[idx]
        if isinstance(layer, Dense):
            param_grads[idx] = (x.T @ grad, grad.sum(axis=0))
            grad = grad @ layer.weight.T
        else:
            grad = grad * (x > 0)
    return [g for g in param_grads if g is not None], grad


def parameters(layers) -> list[np.ndarray]:
    """The trainable arrays, in the order `backward` reports grads."""
    out = []
    for layer in layers:
        if isinstance(layer, Dense):
            out.extend((layer.weight, layer.bias))
    return out


class Adam:
    """Adam on a fixed list of float32 arrays, updated in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = np.float32(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        flat = []
        for dw, db in grads:
            flat.extend((dw, db))
        if len(flat) != len(self.params):
            raise ValueError(f"got {len(flat)} grads for {len(self.params)} params")
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, flat, self.m, self.v):
            g = g.astype(np.float32)
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
