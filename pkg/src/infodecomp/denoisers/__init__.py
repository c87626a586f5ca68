"""Denoiser implementations: exact mixture oracle, toy MLP, remote bridge."""

from .base import Denoiser, predict_eps
from .gmm import GmmModel
from .mlp import MlpDenoiser, TrainConfig, train_toy_denoiser
from .bridge import BridgeClient, BridgedDenoiser

__all__ = [
    "Denoiser",
    "predict_eps",
    "GmmModel",
    "MlpDenoiser",
    "TrainConfig",
    "train_toy_denoiser",
    "BridgeClient",
    "BridgedDenoiser",
]
