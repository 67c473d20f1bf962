"""Mini-batch training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ModelGraph
from .optim import adam_init, adam_step

__all__ = ["TrainConfig", "iter_batches", "train"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    shuffle: bool = True
    lr: float = 1e-3

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def iter_batches(n: int, batch_size: int, rng=None):
    """Index arrays covering ``range(n)``; the final partial batch is kept."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train(model: ModelGraph, X: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig()):
    """Train ``model`` in place with Adam on mean cross-entropy.

    Returns ``(model, history)`` where ``history`` holds the mean batch loss of
    each epoch.  The model is left in eval mode.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} inputs but {len(y)} labels")
    rng = np.random.default_rng(cfg.seed)
    state = adam_init(model.get_params(), lr=cfg.lr)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        losses = []
        for idx in iter_batches(len(X), cfg.batch_size, rng if cfg.shuffle else None):
            loss, grads, _ = model.loss_and_grads(X[idx], y[idx], mode="train", rng=rng, need_input_grad=False)
            params, state = adam_step(model.get_params(), grads, state)
            model.set_params(params)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        log.debug("epoch %d/%d loss %.5f", epoch + 1, cfg.epochs, history[-1])
    model.mode = "eval"
    return model, history
