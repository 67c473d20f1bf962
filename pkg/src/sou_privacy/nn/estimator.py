"""scikit-learn classifier wrapper around the CNN graphs."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..validation import check_model_input
from .model import diagnosis_cnn, gender_cnn
from .training import TrainConfig, train

__all__ = ["CNNClassifier", "ARCHITECTURES"]

ARCHITECTURES = {"gender": gender_cnn, "diagnosis": diagnosis_cnn}


class CNNClassifier(ClassifierMixin, BaseEstimator):
    """Small CNN over log-mel feature maps.

    ``X`` is ``(n, n_mels, n_frames)`` or ``(n, 1, n_mels, n_frames)``.  The
    fitted graph is ``model_``; ``history_`` holds per-epoch mean losses.

    Parameters
    ----------
    architecture : {"gender", "diagnosis"}
        ``gender``: two conv blocks, global average pooling, MLP.
        ``diagnosis``: three conv blocks, flatten, 128-unit hidden layer.
    channels, hidden : optional
        Override the conv widths and hidden size of the chosen architecture.
    dtype : str
        Working precision of the graph; float32 trains roughly twice as fast.
    """

    def __init__(
        self,
        architecture="gender",
        channels=None,
        hidden=None,
        dropout=0.2,
        batch_size=32,
        epochs=30,
        learning_rate=1e-3,
        shuffle=True,
        random_state=0,
        dtype="float32",
    ):
        self.architecture = architecture
        self.channels = channels
        self.hidden = hidden
        self.dropout = dropout
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.shuffle = shuffle
        self.random_state = random_state
        self.dtype = dtype

    def _build(self, input_shape, n_classes):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {sorted(ARCHITECTURES)}, got {self.architecture!r}")
        kwargs = {"input_shape": input_shape, "n_classes": n_classes, "dropout": self.dropout, "seed": self.random_state, "dtype": np.dtype(self.dtype)}
        if self.channels is not None:
            kwargs["channels"] = tuple(self.channels)
        if self.hidden is not None:
            kwargs["hidden"] = self.hidden
        return ARCHITECTURES[self.architecture](**kwargs)

    def fit(self, X, y):
        X = check_model_input(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"{len(X)} inputs but {len(y)} labels")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes to fit a classifier")
        self.model_ = self._build(X.shape[1:], len(self.classes_))
        cfg = TrainConfig(self.batch_size, self.epochs, self.random_state, self.shuffle, self.learning_rate)
        self.model_, self.history_ = train(self.model_, X, y_idx, cfg)
        return self

    @classmethod
    def from_model(cls, model, classes, architecture="gender"):
        """Wrap an already trained graph (e.g. one read with ``load_model``)."""
        est = cls(architecture=architecture)
        est.model_ = model
        est.classes_ = np.asarray(classes)
        est.history_ = []
        return est

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_model_input(X, self.model_.input_shape)
        return self.model_.predict_proba(X)

    def predict(self, X):
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def encode(self, y) -> np.ndarray:
        """Map class labels to the integer indices the graph was trained on."""
        check_is_fitted(self, "classes_")
        y = np.asarray(y)
        idx = np.searchsorted(self.classes_, y)
        if np.any(idx >= len(self.classes_)) or np.any(self.classes_[np.minimum(idx, len(self.classes_) - 1)] != y):
            raise ValueError("labels outside the fitted classes")
        return idx
