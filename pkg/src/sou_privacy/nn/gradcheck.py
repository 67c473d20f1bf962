"""Central finite-difference checks of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelGraph, cross_entropy

__all__ = ["GradCheckResult", "relative_error", "check_gradients"]


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """``max |a - n| / max(|a|, |n|, floor)`` over all entries.

    The floor keeps entries whose true gradient is zero (a conv bias followed
    by BatchNorm, for instance) from dividing rounding noise by ~0.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


@dataclass(frozen=True)
class GradCheckResult:
    param_errors: dict
    input_error: float

    @property
    def max_error(self) -> float:
        return max([self.input_error, *self.param_errors.values()])


def check_gradients(model: ModelGraph, x, labels, mode: str = "train", h: float = 1e-5, seed: int = 0) -> GradCheckResult:
    """Compare backprop gradients of mean cross-entropy with central differences.

    Every loss evaluation reseeds the dropout generator, so train mode sees
    the same mask throughout.  Run in float64.
    """
    x = np.array(x, dtype=np.float64)

    def loss_at(inp):
        logits, _ = model.forward(inp, mode, np.random.default_rng(seed))
        return cross_entropy(logits, labels)

    logits, cache = model.forward(x, mode, np.random.default_rng(seed))
    grads, dx = model.backward(cache, labels)

    param_errors = {}
    for (name, p), g in zip(model.named_params(), grads):
        num = np.empty_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_at(x)
            p[idx] = old - h
            down = loss_at(x)
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        param_errors[name] = relative_error(g, num)

    num_x = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = loss_at(x)
        x[idx] = old - h
        down = loss_at(x)
        x[idx] = old
        num_x[idx] = (up - down) / (2 * h)
    return GradCheckResult(param_errors, relative_error(dx, num_x))
