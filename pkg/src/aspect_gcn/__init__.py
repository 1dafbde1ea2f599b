"""Aspect-based sentiment classification with graph convolutions over
dependency trees, trained end to end on a small reverse-mode autodiff core."""

from .data import CLASS_NAMES, Example, Vocabulary
from .models import ModelConfig, ParameterStore, build_model, forward, predict
from .training import evaluate, paired_t_test, train

__all__ = [
    "CLASS_NAMES",
    "Example",
    "Vocabulary",
    "ModelConfig",
    "ParameterStore",
    "build_model",
    "forward",
    "predict",
    "evaluate",
    "paired_t_test",
    "train",
]

__version__ = "0.1.0"
