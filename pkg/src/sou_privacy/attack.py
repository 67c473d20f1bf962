"""Protective adversarial perturbation of feature maps: FGSM and L-infinity PGD.

The protector ascends the attacker classifier's loss on the true label::

    x_{t+1} = clip(x_t + alpha * sign(grad_x L(theta, x_t, y)), x - eps, x + eps)

Perturbations live in the standardized log-mel domain the classifier reads;
no additional value-range clamp is applied.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .features import FeatureTensor
from .nn.model import ModelGraph
from .validation import check_feature_batch

__all__ = [
    "AttackConfig",
    "PerturbationResult",
    "project_linf",
    "fgsm",
    "pgd",
    "protect_dataset",
    "PGDProtector",
]


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.1
    alpha: float = 0.0005
    iterations: int = 20
    method: str = "pgd"
    random_start: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0 or self.alpha < 0:
            raise ValueError("epsilon and alpha must be non-negative")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.method not in ("pgd", "fgsm"):
            raise ValueError(f"method must be 'pgd' or 'fgsm', got {self.method!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class PerturbationResult:
    x_adv: FeatureTensor
    linf_delta: float
    loss_trace: list[float] = field(default_factory=list)


def project_linf(x_adv: np.ndarray, x_orig: np.ndarray, eps: float) -> np.ndarray:
    """Clamp ``x_adv - x_orig`` to ``[-eps, eps]`` elementwise.

    Written as a clip to ``[x_orig - eps, x_orig + eps]``, which leaves points
    already inside the ball bit-for-bit unchanged.
    """
    x_adv = np.asarray(x_adv, dtype=np.float64)
    x_orig = np.asarray(x_orig, dtype=np.float64)
    if x_adv.shape != x_orig.shape:
        raise ValueError(f"shape mismatch: {x_adv.shape} vs {x_orig.shape}")
    return np.clip(x_adv, x_orig - eps, x_orig + eps)


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def _loss_grad(model: ModelGraph, x: np.ndarray, y: int) -> tuple[float, np.ndarray]:
    if x.shape != model.input_shape[1:]:
        raise ValueError(f"feature shape {x.shape} does not match model input {model.input_shape[1:]}")
    loss, dx = model.input_gradient(x[None, None], np.array([y]))
    return loss, dx[0, 0].astype(np.float64)


def _wrap(x, values: np.ndarray) -> FeatureTensor:
    if isinstance(x, FeatureTensor):
        return dataclasses.replace(x, values=values)
    return FeatureTensor(values, standardized=True)


def fgsm(model: ModelGraph, x, y: int, eps: float) -> PerturbationResult:
    """Single signed-gradient step of size ``eps``; ``sign(0) == 0``."""
    x0 = _values(x)
    loss, g = _loss_grad(model, x0, y)
    x_adv = x0 + eps * np.sign(g)
    return PerturbationResult(_wrap(x, x_adv), float(np.max(np.abs(x_adv - x0))), [loss])


def pgd(model: ModelGraph, x, y: int, cfg: AttackConfig = AttackConfig(), rng=None) -> PerturbationResult:
    """Iterated signed-gradient ascent, projected onto the eps-ball after every step.

    ``loss_trace[t]`` is the loss at ``x_t``, the point whose gradient drives
    step ``t``.
    """
    x0 = _values(x)
    if cfg.random_start:
        rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        x_t = project_linf(x0 + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x0.shape), x0, cfg.epsilon)
    else:
        x_t = x0.copy()
    trace = []
    for _ in range(cfg.iterations):
        loss, g = _loss_grad(model, x_t, y)
        trace.append(loss)
        x_t = project_linf(x_t + cfg.alpha * np.sign(g), x0, cfg.epsilon)
    return PerturbationResult(_wrap(x, x_t), float(np.max(np.abs(x_t - x0))), trace)


def protect_dataset(model: ModelGraph, features, cfg: AttackConfig = AttackConfig()) -> list[PerturbationResult]:
    """Perturb each ``(feature, label)`` pair independently, preserving order.

    Random starts draw from a generator seeded with ``(cfg.seed, index)``, so
    every item's noise depends only on its position and the config seed.
    """
    if model.mode != "eval":
        raise ValueError("attack models must be in eval mode")
    results = []
    for i, (x, y) in enumerate(features):
        try:
            if cfg.method == "fgsm":
                results.append(fgsm(model, x, int(y), cfg.epsilon))
            else:
                rng = np.random.default_rng([cfg.seed, i]) if cfg.random_start else None
                results.append(pgd(model, x, int(y), cfg, rng))
        except Exception as exc:
            raise RuntimeError(f"perturbation failed for item {i}: {exc}") from exc
    return results


class PGDProtector(TransformerMixin, BaseEstimator):
    """Supervised transformer that perturbs feature stacks against a fitted classifier.

    ``estimator`` is a fitted :class:`~sou_privacy.nn.CNNClassifier` (the
    attacker's model).  ``transform(X, y)`` needs the true labels, since the
    perturbation ascends the loss of the true class.
    """

    def __init__(self, estimator=None, epsilon=0.1, alpha=0.0005, iterations=20, method="pgd", random_start=False, random_state=0):
        self.estimator = estimator
        self.epsilon = epsilon
        self.alpha = alpha
        self.iterations = iterations
        self.method = method
        self.random_state = random_state
        self.random_start = random_start

    @property
    def config(self) -> AttackConfig:
        return AttackConfig(self.epsilon, self.alpha, self.iterations, self.method, self.random_start, self.random_state)

    def fit(self, X=None, y=None):
        if self.estimator is None:
            raise ValueError("PGDProtector needs a fitted estimator")
        check_is_fitted(self.estimator, "model_")
        self.config_ = self.config
        return self

    def transform(self, X, y=None):
        if y is None:
            raise ValueError("PGDProtector.transform needs the true labels y")
        check_is_fitted(self, "config_")
        X = check_feature_batch(X)
        y_idx = self.estimator.encode(y)
        results = protect_dataset(self.estimator.model_, zip(X, y_idx), self.config_)
        self.linf_ = np.array([r.linf_delta for r in results])
        self.loss_traces_ = [r.loss_trace for r in results]
        return np.stack([r.x_adv.values for r in results]) if results else X.copy()

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y).transform(X, y)
