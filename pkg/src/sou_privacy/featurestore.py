"""On-disk feature stores and standardizer sidecars in the SOUM container.

A feature store holds one float32 entry per chunk named
``"{recording_id}#{chunk_index}"`` with shape ``(n_mels, n_frames)``.  Labels
are not stored; they are joined back from the manifest by recording id.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import ContainerError, read_container, write_container
from .features import Standardizer

__all__ = ["FeatureSet", "save_features", "load_features", "save_standardizer", "load_standardizer"]


@dataclass
class FeatureSet:
    """Stacked chunk features of one split with their per-chunk labels."""

    X: np.ndarray  # (n, n_mels, n_frames)
    recording_ids: list[str]
    chunk_index: np.ndarray
    split: str
    gender: np.ndarray = field(default_factory=lambda: np.array([], dtype=object))
    diagnosis: np.ndarray = field(default_factory=lambda: np.array([], dtype=object))
    standardized: bool = False
    fitted_on: str | None = None

    def __len__(self) -> int:
        return len(self.X)

    def with_values(self, X: np.ndarray) -> "FeatureSet":
        return FeatureSet(
            X, list(self.recording_ids), self.chunk_index.copy(), self.split, self.gender.copy(),
            self.diagnosis.copy(), self.standardized, self.fitted_on,
        )

    def attach_labels(self, labels_by_recording: dict[str, dict]) -> "FeatureSet":
        missing = sorted({r for r in self.recording_ids if r not in labels_by_recording})
        if missing:
            raise KeyError(f"no labels for recording(s) {', '.join(missing[:5])}")
        self.gender = np.array([labels_by_recording[r]["gender"] for r in self.recording_ids])
        self.diagnosis = np.array([labels_by_recording[r]["diagnosis"] for r in self.recording_ids])
        return self


def save_features(path, fs: FeatureSet) -> None:
    entries = {}
    for rid, k, x in zip(fs.recording_ids, fs.chunk_index, fs.X):
        name = f"{rid}#{int(k)}"
        if name in entries:
            raise ValueError(f"duplicate chunk {name}")
        entries[name] = x.astype(np.float32)
    write_container(path, entries)


def load_features(path, split: str, standardized: bool = True, fitted_on: str | None = "train") -> FeatureSet:
    entries = read_container(path)
    ids, idx, mats = [], [], []
    for name, arr in entries.items():
        rid, sep, k = name.rpartition("#")
        if not sep or arr.ndim != 2:
            raise ContainerError(f"{path}: entry {name!r} is not a chunk record")
        ids.append(rid)
        idx.append(int(k))
        mats.append(arr.astype(np.float64))
    X = np.stack(mats) if mats else np.empty((0, 0, 0))
    return FeatureSet(X, ids, np.array(idx, dtype=np.int64), split, standardized=standardized, fitted_on=fitted_on)


def save_standardizer(path, s: Standardizer) -> None:
    write_container(
        path,
        {
            "mean": s.mean.astype(np.float64),
            "std": s.std.astype(np.float64),
            "eps": np.array([s.eps]),
            f"fitted_on={s.fitted_on}": np.zeros(0),
        },
    )


def load_standardizer(path) -> Standardizer:
    entries = read_container(path)
    tags = [k.split("=", 1)[1] for k in entries if k.startswith("fitted_on=")]
    if not {"mean", "std", "eps"} <= set(entries) or len(tags) != 1:
        raise ContainerError(f"{path}: not a standardizer sidecar")
    return Standardizer(entries["mean"].copy(), entries["std"].copy(), float(entries["eps"][0]), tags[0])
