"""Minimal numpy CNN stack: layers, graphs, Adam, training and persistence."""
from .estimator import CNNClassifier
from .gradcheck import GradCheckResult, check_gradients, relative_error
from .layers import BatchNorm, Conv3x3, Dense, Dropout, Flatten, GlobalAvgPool, MaxPool2x2, ReLU
from .model import ModelGraph, cross_entropy, cross_entropy_grad, diagnosis_cnn, gender_cnn, softmax
from .optim import AdamState, adam_init, adam_step
from .persist import load_model, save_model
from .training import TrainConfig, train

__all__ = [
    "AdamState",
    "BatchNorm",
    "CNNClassifier",
    "Conv3x3",
    "Dense",
    "Dropout",
    "Flatten",
    "GlobalAvgPool",
    "GradCheckResult",
    "MaxPool2x2",
    "ModelGraph",
    "ReLU",
    "TrainConfig",
    "adam_init",
    "adam_step",
    "check_gradients",
    "cross_entropy",
    "cross_entropy_grad",
    "diagnosis_cnn",
    "gender_cnn",
    "load_model",
    "relative_error",
    "save_model",
    "softmax",
    "train",
]
