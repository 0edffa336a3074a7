"""Arbitrary-scale dual-branch image super-resolution with self-texture
enhancement: library, CLI, and tile-inference service."""

__version__ = "0.1.0"

from .model import IsteModel, ModelConfig, VARIANTS, build_model, load_model
from .data import TrainConfig, load_corpus, synth_corpus, train

__all__ = [
    "IsteModel",
    "ModelConfig",
    "TrainConfig",
    "VARIANTS",
    "build_model",
    "load_model",
    "load_corpus",
    "synth_corpus",
    "train",
]
