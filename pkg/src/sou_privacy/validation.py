"""Input validation helpers shared by the estimators."""
from __future__ import annotations

import numpy as np

__all__ = ["check_chunk_batch", "check_feature_batch", "check_model_input", "check_labels"]


def _finite_float(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return X


def check_chunk_batch(X, min_len: int = 1) -> np.ndarray:
    """Waveform chunks as a 2-D float array ``(n_chunks, chunk_len)``."""
    X = _finite_float(X, "chunk batch")
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected (n_chunks, chunk_len), got shape {X.shape}")
    if X.shape[1] < min_len:
        raise ValueError(f"chunks of {X.shape[1]} samples are shorter than the {min_len}-sample window")
    return X


def check_feature_batch(X, n_mels: int | None = None) -> np.ndarray:
    """Feature stack as a 3-D float array ``(n, n_mels, n_frames)``."""
    X = _finite_float(X, "feature batch")
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or 0 in X.shape:
        raise ValueError(f"expected (n, n_mels, n_frames), got shape {X.shape}")
    if n_mels is not None and X.shape[1] != n_mels:
        raise ValueError(f"expected {n_mels} mel bins, got {X.shape[1]}")
    return X


def check_model_input(X, input_shape: tuple[int, ...] | None = None) -> np.ndarray:
    """Classifier input as ``(batch, 1, H, W)``; 3-D feature stacks gain the channel axis."""
    X = _finite_float(X, "model input")
    if X.ndim == 3:
        X = X[:, None]
    if X.ndim != 4:
        raise ValueError(f"expected (batch, channels, height, width), got shape {X.shape}")
    if input_shape is not None and X.shape[1:] != tuple(input_shape):
        raise ValueError(f"model expects inputs of shape {tuple(input_shape)}, got {X.shape[1:]}")
    return X


def check_labels(y, n: int, n_classes: int | None = None) -> np.ndarray:
    """Integer class indices of length ``n``."""
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n:
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("labels must be integer class indices")
    if n_classes is not None and (np.any(y < 0) or np.any(y >= n_classes)):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return y.astype(np.intp)
