"""Model files in the SOUM container format.

Each layer ``i`` stores a config entry ``"{i:03d}:{kind}"`` holding its
hyperparameters, followed by ``"{i:03d}:{kind}.{name}"`` for every parameter
and running statistic.  Arrays keep their float32/float64 dtype, so a round
trip is bit-exact.
"""
from __future__ import annotations

import numpy as np

from ..container import ContainerError, read_container, write_container
from .layers import LAYER_TYPES, BatchNorm, Conv3x3, Dense, Dropout
from .model import ModelGraph

__all__ = ["model_entries", "model_from_entries", "save_model", "load_model"]


def model_entries(model: ModelGraph) -> dict[str, np.ndarray]:
    entries = {"input_shape": np.asarray(model.input_shape, dtype=np.float64)}
    for i, layer in enumerate(model.layers):
        key = f"{i:03d}:{layer.kind}"
        entries[key] = np.asarray(layer.config(), dtype=np.float64)
        for name, arr in {**layer.params, **layer.buffers}.items():
            entries[f"{key}.{name}"] = arr
    return entries


def _build(kind: str, cfg: np.ndarray):
    if kind == "conv3x3":
        return Conv3x3(int(cfg[0]), int(cfg[1]))
    if kind == "batchnorm":
        return BatchNorm(int(cfg[0]), float(cfg[1]), float(cfg[2]))
    if kind == "dropout":
        return Dropout(float(cfg[0]))
    if kind == "dense":
        return Dense(int(cfg[0]), int(cfg[1]), bias=bool(cfg[2]))
    return LAYER_TYPES[kind]()


def model_from_entries(entries: dict[str, np.ndarray]) -> ModelGraph:
    if "input_shape" not in entries:
        raise ContainerError("not a model file: missing input_shape")
    layers = []
    for key, arr in entries.items():
        if key == "input_shape" or "." in key:
            continue
        _, kind = key.split(":", 1)
        if kind not in LAYER_TYPES:
            raise ContainerError(f"unknown layer kind {kind!r}")
        layer = _build(kind, arr)
        for store in (layer.params, layer.buffers):
            for name in store:
                stored = entries.get(f"{key}.{name}")
                if stored is None or stored.shape != store[name].shape:
                    raise ContainerError(f"{key}: missing or misshapen {name}")
                store[name] = stored.copy()
        layers.append(layer)
    return ModelGraph(layers, tuple(int(d) for d in entries["input_shape"]), mode="eval")


def save_model(model: ModelGraph, path) -> None:
    if model.mode != "eval":
        raise ValueError("switch the model to eval mode before saving")
    write_container(path, model_entries(model))


def load_model(path) -> ModelGraph:
    return model_from_entries(read_container(path))
