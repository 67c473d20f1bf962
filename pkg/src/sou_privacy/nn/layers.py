"""Layers with explicit forward/backward passes.

Every layer exposes ``forward(x, train, rng) -> (y, cache)`` and
``backward(dy, cache) -> (dx, grads)``, where ``grads`` maps parameter names
to arrays shaped like ``params``.  Feature maps are channel-last
(B, H, W, C) inside the stack; :class:`~.model.ModelGraph` converts from and
to the public (B, C, H, W) layout.  Layers compute in the dtype of their
inputs, so a graph cast to float32 runs in single precision end to end.  ``output_shape`` works in (C, H, W).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Layer",
    "Conv3x3",
    "BatchNorm",
    "ReLU",
    "MaxPool2x2",
    "Dropout",
    "GlobalAvgPool",
    "Flatten",
    "Dense",
    "LAYER_TYPES",
]


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def config(self) -> list[float]:
        """Hyperparameters needed to rebuild the layer from a saved file."""
        return []

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy, cache, need_dx=True):
        """Return ``(dx, grads)``; ``dx`` may be None when ``need_dx`` is false."""
        raise NotImplementedError

    def __repr__(self):
        cfg = ", ".join(f"{v:g}" for v in self.config())
        return f"{type(self).__name__}({cfg})"


def _kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Conv3x3(Layer):
    """3x3 convolution, stride 1, zero padding 1.  Weights are (out, in, 3, 3)."""

    kind = "conv3x3"

    def __init__(self, in_ch: int, out_ch: int, rng=None):
        super().__init__()
        self.in_ch, self.out_ch = int(in_ch), int(out_ch)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = _kaiming_uniform(rng, (self.out_ch, self.in_ch, 3, 3), self.in_ch * 9)
        self.params["bias"] = np.zeros(self.out_ch)

    def config(self):
        return [self.in_ch, self.out_ch]

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise ValueError(f"conv expects {self.in_ch} input channels, got {c}")
        return (self.out_ch, h, w)

    def _wmat(self):
        # rows ordered (ki, kj, c) to match the patch layout below
        return self.params["weight"].transpose(0, 2, 3, 1).reshape(self.out_ch, 9 * self.in_ch)

    def forward(self, x, train=False, rng=None):
        b, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, 9 * c)
        y = cols @ self._wmat().T
        y += self.params["bias"]
        return y.reshape(b, h, w, self.out_ch), (cols, x.shape)

    def backward(self, dy, cache, need_dx=True):
        cols, (b, h, w, c) = cache
        dmat = dy.reshape(b * h * w, self.out_ch)
        gw = (dmat.T @ cols).reshape(self.out_ch, 3, 3, c).transpose(0, 3, 1, 2)
        grads = {"weight": np.ascontiguousarray(gw), "bias": dmat.sum(axis=0)}
        if not need_dx:
            return None, grads
        dcols = (dmat @ self._wmat()).reshape(b, h, w, 3, 3, c)
        dxp = np.zeros((b, h + 2, w + 2, c), dtype=dy.dtype)
        for i in range(3):
            for j in range(3):
                dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, 1:-1, 1:-1, :], grads


class BatchNorm(Layer):
    """Per-channel batch normalization over every axis but the last."""

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.channels = int(channels)
        self.momentum, self.eps = float(momentum), float(eps)
        self.params["gamma"] = np.ones(self.channels)
        self.params["beta"] = np.zeros(self.channels)
        self.buffers["running_mean"] = np.zeros(self.channels)
        self.buffers["running_var"] = np.ones(self.channels)

    def config(self):
        return [self.channels, self.momentum, self.eps]

    def output_shape(self, in_shape):
        if in_shape[0] != self.channels:
            raise ValueError(f"batchnorm expects {self.channels} channels, got {in_shape[0]}")
        return in_shape

    def forward(self, x, train=False, rng=None):
        x2 = x.reshape(-1, self.channels)
        n = len(x2)
        if train:
            ones = np.ones(n, dtype=x.dtype)
            mean = (ones @ x2) / n
            centered = x2 - mean
            var = np.einsum("ij,ij->j", centered, centered) / n
            m = self.momentum
            self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
            unbiased = var * n / (n - 1) if n > 1 else var
            self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * unbiased
        else:
            centered = x2 - self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = centered
        xhat *= inv_std
        y = xhat * self.params["gamma"]
        y += self.params["beta"]
        return y.reshape(x.shape), (xhat, inv_std, train)

    def backward(self, dy, cache, need_dx=True):
        xhat, inv_std, train = cache
        dy2 = dy.reshape(-1, self.channels)
        n = len(dy2)
        grads = {"gamma": np.einsum("ij,ij->j", dy2, xhat), "beta": np.ones(n, dtype=dy.dtype) @ dy2}
        scale = self.params["gamma"] * inv_std
        if not train:
            return (dy2 * scale).reshape(dy.shape), grads
        # dx = gamma*inv_std * (dy - mean(dy) - xhat*mean(dy*xhat))
        dx = dy2 - grads["beta"] / n
        dx -= xhat * (grads["gamma"] / n)
        dx *= scale
        return dx.reshape(dy.shape), grads


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache, need_dx=True):
        return dy * cache, {}


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; an odd trailing row or column is dropped.

    Ties route the gradient to the first maximal element in row-major order.
    """

    kind = "maxpool2x2"

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ValueError(f"cannot pool a {h}x{w} map")
        return (c, h // 2, w // 2)

    def forward(self, x, train=False, rng=None):
        b, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        q = [x[:, i : 2 * h2 : 2, j : 2 * w2 : 2, :] for i in (0, 1) for j in (0, 1)]
        y = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
        taken = np.zeros(y.shape, dtype=bool)
        masks = []
        for part in q:
            m = (part == y) & ~taken
            taken |= m
            masks.append(m)
        return y, (masks, x.shape)

    def backward(self, dy, cache, need_dx=True):
        masks, (b, h, w, c) = cache
        h2, w2 = h // 2, w // 2
        dx = np.zeros((b, h, w, c), dtype=dy.dtype)
        for k, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            dx[:, i : 2 * h2 : 2, j : 2 * w2 : 2, :] = dy * masks[k]
        return dx, {}


class Dropout(Layer):
    """Inverted dropout; identity in eval mode."""

    kind = "dropout"

    def __init__(self, p: float = 0.2):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout p must lie in [0, 1)")
        self.p = float(p)

    def config(self):
        return [self.p]

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            return x, None
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        mask = (rng.random(x.shape, dtype=x.dtype) >= self.p) / x.dtype.type(1.0 - self.p)
        return x * mask, mask

    def backward(self, dy, cache, need_dx=True):
        return (dy if cache is None else dy * cache), {}


class GlobalAvgPool(Layer):
    """Mean over the spatial axes: (B, H, W, C) -> (B, C)."""

    kind = "globalavgpool"

    def output_shape(self, in_shape):
        return (in_shape[0],)

    def forward(self, x, train=False, rng=None):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dy, cache, need_dx=True):
        b, h, w, c = cache
        return np.broadcast_to(dy[:, None, None, :] / (h * w), cache).copy(), {}


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        return x.reshape(len(x), -1), x.shape

    def backward(self, dy, cache, need_dx=True):
        return dy.reshape(cache), {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim: int, out_dim: int, rng=None, bias: bool = True):
        super().__init__()
        self.in_dim, self.out_dim = int(in_dim), int(out_dim)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = _kaiming_uniform(rng, (self.out_dim, self.in_dim), self.in_dim)
        if bias:
            self.params["bias"] = np.zeros(self.out_dim)

    def config(self):
        return [self.in_dim, self.out_dim, float("bias" in self.params)]

    def output_shape(self, in_shape):
        if in_shape != (self.in_dim,):
            raise ValueError(f"dense expects ({self.in_dim},) inputs, got {in_shape}")
        return (self.out_dim,)

    def forward(self, x, train=False, rng=None):
        y = x @ self.params["weight"].T
        if "bias" in self.params:
            y = y + self.params["bias"]
        return y, x

    def backward(self, dy, cache, need_dx=True):
        grads = {"weight": dy.T @ cache}
        if "bias" in self.params:
            grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"], grads


LAYER_TYPES = {cls.kind: cls for cls in (Conv3x3, BatchNorm, ReLU, MaxPool2x2, Dropout, GlobalAvgPool, Flatten, Dense)}
