"""Log-mel features: STFT power, mel filterbank, dB conversion and standardization.

The functional API works on single chunks (:func:`featurize_chunk`) and lists
of :class:`FeatureTensor`.  :class:`LogMelFeaturizer` and
:class:`FeatureStandardizer` wrap the same code as scikit-learn transformers
over stacked arrays of shape ``(n_chunks, n_mels, n_frames)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .audio import EXPECTED_RATE, AudioChunk
from .validation import check_chunk_batch, check_feature_batch

__all__ = [
    "DB_FLOOR",
    "StftConfig",
    "MelConfig",
    "FeatureTensor",
    "Standardizer",
    "hz_to_mel",
    "mel_to_hz",
    "n_frames",
    "stft_power",
    "mel_filterbank",
    "featurize_chunk",
    "fit_standardizer",
    "apply_standardizer",
    "invert_standardizer",
    "LogMelFeaturizer",
    "FeatureStandardizer",
]

DB_FLOOR = 1e-10  # power floor before log: -100 dB


@dataclass(frozen=True)
class StftConfig:
    window_len: int = int(0.015 * EXPECTED_RATE)  # 661
    hop: int = int(0.015 * EXPECTED_RATE) // 2  # 330
    fft_size: int = 1024

    def __post_init__(self):
        if not 1 <= self.hop <= self.window_len <= self.fft_size:
            raise ValueError(f"need 1 <= hop <= window_len <= fft_size, got {self}")

    @classmethod
    def for_rate(cls, sample_rate: int, window_seconds: float = 0.015) -> "StftConfig":
        window_len = int(window_seconds * sample_rate)
        fft_size = 1 << (window_len - 1).bit_length()
        return cls(window_len, window_len // 2, fft_size)


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 64
    f_min: float = 0.0
    f_max: float | None = None  # None means Nyquist


@dataclass(frozen=True)
class FeatureTensor:
    values: np.ndarray  # (n_mels, n_frames)
    recording_id: str = ""
    chunk_index: int = 0
    standardized: bool = False
    fitted_on: str | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    eps: float = 1e-8
    fitted_on: str = "train"


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def n_frames(n_samples: int, cfg: StftConfig = StftConfig()) -> int:
    if n_samples < cfg.window_len:
        return 0
    return (n_samples - cfg.window_len) // cfg.hop + 1


def _frames(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Frame the last axis: ``(..., n) -> (..., n_frames, window_len)``, no centering."""
    count = n_frames(x.shape[-1], cfg)
    return sliding_window_view(x, cfg.window_len, axis=-1)[..., : (count - 1) * cfg.hop + 1 : cfg.hop, :]


def _power_frames(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    window = np.hanning(cfg.window_len)
    spec = np.fft.rfft(_frames(x, cfg) * window, n=cfg.fft_size, axis=-1)
    return spec.real**2 + spec.imag**2  # (..., n_frames, n_bins)


def stft_power(chunk: AudioChunk | np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Squared-magnitude one-sided spectrum, shape ``(fft_size // 2 + 1, n_frames)``."""
    x = np.asarray(getattr(chunk, "samples", chunk), dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("stft_power expects a 1-D signal")
    if len(x) < cfg.window_len:
        raise ValueError(f"chunk of {len(x)} samples is shorter than the {cfg.window_len}-sample window")
    return _power_frames(x, cfg).T


def mel_filterbank(cfg: MelConfig = MelConfig(), fft_size: int = 1024, sample_rate: int = EXPECTED_RATE) -> np.ndarray:
    """Triangular filters, shape ``(n_mels, fft_size // 2 + 1)``, each row peak-normalized to 1.

    Filter ``i`` rises from edge ``i`` to a peak at edge ``i + 1`` and falls to
    edge ``i + 2``, where the ``n_mels + 2`` edges are equally spaced in mel
    between ``f_min`` and ``f_max``.
    """
    nyquist = sample_rate / 2.0
    f_max = nyquist if cfg.f_max is None else cfg.f_max
    if cfg.n_mels < 2:
        raise ValueError("n_mels must be at least 2")
    if not 0.0 <= cfg.f_min < f_max <= nyquist:
        raise ValueError(f"need 0 <= f_min < f_max <= {nyquist}, got f_min={cfg.f_min}, f_max={f_max}")

    edges = mel_to_hz(np.linspace(hz_to_mel(cfg.f_min), hz_to_mel(f_max), cfg.n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1, keepdims=True)
    if np.any(peaks == 0.0):
        raise ValueError("a mel filter falls between FFT bins; lower n_mels or raise fft_size")
    return fb / peaks


def _log_mel(power: np.ndarray, fb: np.ndarray) -> np.ndarray:
    return 10.0 * np.log10(np.maximum(fb @ power, DB_FLOOR))


def featurize_chunk(
    chunk: AudioChunk | np.ndarray,
    scfg: StftConfig = StftConfig(),
    mcfg: MelConfig = MelConfig(),
    sample_rate: int = EXPECTED_RATE,
) -> FeatureTensor:
    """Log-mel matrix (dB) of one chunk, shape ``(n_mels, n_frames)``."""
    fb = mel_filterbank(mcfg, scfg.fft_size, sample_rate)
    values = _log_mel(stft_power(chunk, scfg), fb)
    return FeatureTensor(
        values,
        recording_id=getattr(chunk, "parent_id", ""),
        chunk_index=getattr(chunk, "chunk_index", 0),
    )


def fit_standardizer(train_features: list[FeatureTensor], fitted_on: str = "train", eps: float = 1e-8) -> Standardizer:
    """Per-mel-bin mean and population std pooled over every frame of every tensor."""
    if not train_features:
        raise ValueError("cannot fit a standardizer on no features")
    shapes = {f.values.shape[0] for f in train_features}
    if len(shapes) != 1:
        raise ValueError(f"features disagree on n_mels: {sorted(shapes)}")
    if any(f.standardized for f in train_features):
        raise ValueError("fit_standardizer expects unstandardized features")
    pooled = np.concatenate([f.values for f in train_features], axis=1)
    return Standardizer(pooled.mean(axis=1), pooled.std(axis=1), eps, fitted_on)


def apply_standardizer(f: FeatureTensor, s: Standardizer) -> FeatureTensor:
    if f.standardized:
        raise ValueError("features are already standardized")
    if f.values.shape[0] != s.mean.shape[0]:
        raise ValueError(f"n_mels mismatch: features {f.values.shape[0]}, standardizer {s.mean.shape[0]}")
    values = (f.values - s.mean[:, None]) / (s.std[:, None] + s.eps)
    return dataclasses.replace(f, values=values, standardized=True, fitted_on=s.fitted_on)


def invert_standardizer(f: FeatureTensor, s: Standardizer) -> FeatureTensor:
    if not f.standardized:
        raise ValueError("features are not standardized")
    values = f.values * (s.std[:, None] + s.eps) + s.mean[:, None]
    return dataclasses.replace(f, values=values, standardized=False, fitted_on=None)


class LogMelFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer: chunk waveforms ``(n, chunk_len)`` to log-mel ``(n, n_mels, n_frames)``."""

    def __init__(self, sample_rate=EXPECTED_RATE, window_len=661, hop=330, fft_size=1024, n_mels=64, f_min=0.0, f_max=None):
        self.sample_rate = sample_rate
        self.window_len = window_len
        self.hop = hop
        self.fft_size = fft_size
        self.n_mels = n_mels
        self.f_min = f_min
        self.f_max = f_max

    @property
    def stft_config(self) -> StftConfig:
        return StftConfig(self.window_len, self.hop, self.fft_size)

    @property
    def mel_config(self) -> MelConfig:
        return MelConfig(self.n_mels, self.f_min, self.f_max)

    def fit(self, X, y=None):
        X = check_chunk_batch(X, min_len=self.window_len)
        self.filterbank_ = mel_filterbank(self.mel_config, self.fft_size, self.sample_rate)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_chunk_batch(X, min_len=self.window_len)
        fb = getattr(self, "filterbank_", None)
        if fb is None:
            fb = mel_filterbank(self.mel_config, self.fft_size, self.sample_rate)
        out = np.empty((len(X), self.n_mels, n_frames(X.shape[1], self.stft_config)))
        for i, x in enumerate(X):
            out[i] = _log_mel(_power_frames(x, self.stft_config).T, fb)
        return out


class FeatureStandardizer(TransformerMixin, BaseEstimator):
    """Per-mel-bin standardization of ``(n, n_mels, n_frames)`` feature stacks."""

    def __init__(self, eps=1e-8):
        self.eps = eps

    def fit(self, X, y=None):
        X = check_feature_batch(X)
        pooled = X.transpose(1, 0, 2).reshape(X.shape[1], -1)
        self.mean_ = pooled.mean(axis=1)
        self.std_ = pooled.std(axis=1)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, ["mean_", "std_"])
        X = check_feature_batch(X, n_mels=self.n_features_in_)
        return (X - self.mean_[:, None]) / (self.std_[:, None] + self.eps)

    def inverse_transform(self, X):
        check_is_fitted(self, ["mean_", "std_"])
        X = check_feature_batch(X, n_mels=self.n_features_in_)
        return X * (self.std_[:, None] + self.eps) + self.mean_[:, None]

    def to_standardizer(self, fitted_on: str = "train") -> Standardizer:
        check_is_fitted(self, ["mean_", "std_"])
        return Standardizer(self.mean_.copy(), self.std_.copy(), self.eps, fitted_on)

    @classmethod
    def from_standardizer(cls, s: Standardizer) -> "FeatureStandardizer":
        est = cls(eps=s.eps)
        est.mean_, est.std_ = s.mean.copy(), s.std.copy()
        est.n_features_in_ = len(s.mean)
        return est
