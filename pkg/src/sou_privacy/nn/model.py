"""Sequential CNN graph with forward, backward and input gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm, Conv3x3, Dense, Dropout, Flatten, GlobalAvgPool, Layer, MaxPool2x2, ReLU

__all__ = [
    "ModelGraph",
    "ForwardCache",
    "softmax",
    "log_softmax",
    "cross_entropy",
    "cross_entropy_grad",
    "conv_block",
    "gender_cnn",
    "diagnosis_cnn",
]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_targets(logits: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ValueError(f"expected {logits.shape[0]} labels, got shape {labels.shape}")
    if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
        raise ValueError(f"labels must lie in [0, {logits.shape[1]})")
    return labels.astype(np.intp)


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = _check_targets(logits, labels)
    return float(-log_softmax(logits)[np.arange(len(labels)), labels].mean())


def cross_entropy_grad(logits: np.ndarray, labels) -> np.ndarray:
    """d(mean CE)/d(logits) = (softmax - one_hot) / batch."""
    labels = _check_targets(logits, labels)
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


@dataclass
class ForwardCache:
    caches: list
    logits: np.ndarray
    train: bool
    input_shape: tuple[int, ...]
    model_id: int


class ModelGraph:
    """Ordered layers plus an input shape ``(channels, height, width)``.

    ``mode`` is ``"train"`` or ``"eval"``; eval mode disables dropout and uses
    BatchNorm running statistics, so it is a pure function of the input.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...], mode: str = "eval"):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.mode = mode
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        self.output_shape = shape

    @property
    def n_classes(self) -> int:
        return self.output_shape[0]

    @property
    def dtype(self) -> np.dtype:
        params = self.get_params()
        return params[0].dtype if params else np.dtype(np.float64)

    def astype(self, dtype) -> "ModelGraph":
        """Cast every parameter and running statistic in place; returns self."""
        for layer in self.layers:
            for store in (layer.params, layer.buffers):
                for name in store:
                    store[name] = store[name].astype(dtype)
        return self

    # parameter access ------------------------------------------------------
    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{name}", arr) for i, layer in enumerate(self.layers) for name, arr in layer.params.items()]

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return [(f"{i}.{name}", arr) for i, layer in enumerate(self.layers) for name, arr in layer.buffers.items()]

    def get_params(self) -> list[np.ndarray]:
        return [arr for _, arr in self.named_params()]

    def set_params(self, params: list[np.ndarray]) -> None:
        it = iter(params)
        for layer in self.layers:
            for name in layer.params:
                new = next(it)
                if new.shape != layer.params[name].shape:
                    raise ValueError(f"parameter shape mismatch for {name}: {new.shape} vs {layer.params[name].shape}")
                layer.params[name] = new

    def n_params(self) -> int:
        return sum(a.size for a in self.get_params())

    # passes ------------------------------------------------------------------
    def forward(self, x: np.ndarray, mode: str | None = None, rng=None) -> tuple[np.ndarray, ForwardCache]:
        mode = mode or self.mode
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim < 2 or x.shape[1:] != self.input_shape:
            raise ValueError(f"model expects inputs of shape (batch, {self.input_shape}), got {x.shape}")
        train = mode == "train"
        in_shape = x.shape
        if x.ndim == 4:
            x = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, train=train, rng=rng)
            caches.append(cache)
        return x, ForwardCache(caches, x, train, in_shape, id(self))

    def backward_from_logits(self, cache: ForwardCache, dlogits: np.ndarray, need_input_grad: bool = True):
        if cache.model_id != id(self) or len(cache.caches) != len(self.layers):
            raise ValueError("forward cache does not belong to this model")
        if dlogits.shape != cache.logits.shape:
            raise ValueError("gradient shape does not match the cached logits")
        grads: list[dict] = [None] * len(self.layers)
        d = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            d, grads[i] = self.layers[i].backward(d, cache.caches[i], need_dx=need_input_grad or i > 0)
        if d is not None and d.ndim == 4:
            d = np.ascontiguousarray(d.transpose(0, 3, 1, 2))
        param_grads = [g[name] for layer, g in zip(self.layers, grads) for name in layer.params]
        return param_grads, d

    def backward(self, cache: ForwardCache, labels, need_input_grad: bool = True):
        """Gradients of mean cross-entropy w.r.t. every parameter and the input."""
        return self.backward_from_logits(cache, cross_entropy_grad(cache.logits, labels), need_input_grad)

    def loss_and_grads(self, x, labels, mode: str | None = None, rng=None, need_input_grad: bool = True):
        logits, cache = self.forward(x, mode, rng)
        param_grads, dx = self.backward(cache, labels, need_input_grad)
        return cross_entropy(logits, labels), param_grads, dx

    def input_gradient(self, x, labels) -> tuple[float, np.ndarray]:
        """Eval-mode loss and its gradient with respect to ``x``."""
        logits, cache = self.forward(x, "eval")
        _, dx = self.backward(cache, labels)
        return cross_entropy(logits, labels), dx

    def predict_proba(self, x, batch_size: int = 256) -> np.ndarray:
        x = np.asarray(x)
        out = [
            softmax(self.forward(x[i : i + batch_size], "eval")[0].astype(np.float64))
            for i in range(0, len(x), batch_size)
        ]
        return np.concatenate(out) if out else np.empty((0, self.n_classes))

    def __repr__(self):
        body = ", ".join(repr(layer) for layer in self.layers)
        return f"ModelGraph(input_shape={self.input_shape}, mode={self.mode!r}, layers=[{body}])"


def conv_block(in_ch: int, out_ch: int, rng, dropout: float = 0.2) -> list[Layer]:
    """Conv3x3 - BatchNorm - ReLU - MaxPool2x2 - Dropout."""
    return [Conv3x3(in_ch, out_ch, rng), BatchNorm(out_ch), ReLU(), MaxPool2x2(), Dropout(dropout)]


def gender_cnn(
    input_shape=(1, 64, 52),
    channels=(16, 32),
    hidden: int = 64,
    n_classes: int = 2,
    dropout: float = 0.2,
    seed: int = 0,
    dtype=np.float64,
) -> ModelGraph:
    """Conv blocks, global average pooling, then a one-hidden-layer MLP."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    c = input_shape[0]
    for out in channels:
        layers += conv_block(c, out, rng, dropout)
        c = out
    layers += [GlobalAvgPool(), Dense(c, hidden, rng), ReLU(), Dense(hidden, n_classes, rng)]
    return ModelGraph(layers, input_shape).astype(dtype)


def diagnosis_cnn(
    input_shape=(1, 64, 52),
    channels=(16, 32, 64),
    hidden: int = 128,
    n_classes: int = 2,
    dropout: float = 0.2,
    seed: int = 0,
    dtype=np.float64,
) -> ModelGraph:
    """Conv blocks, flatten, a 128-unit hidden layer and the output layer."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    c, h, w = input_shape
    for out in channels:
        layers += conv_block(c, out, rng, dropout)
        c, h, w = out, h // 2, w // 2
    layers += [Flatten(), Dense(c * h * w, hidden, rng), ReLU(), Dense(hidden, n_classes, rng)]
    return ModelGraph(layers, input_shape).astype(dtype)
