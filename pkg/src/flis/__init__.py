"""Patch-based CT segmentation with per-class discriminative dictionaries."""
from .errors import FlisError
from .kernels import BACKEND
from .pipeline import Model, PipelineConfig, load_model, save_model, segment, train
from .train import FlisHyperParams

__all__ = [
    "BACKEND",
    "FlisError",
    "FlisHyperParams",
    "Model",
    "PipelineConfig",
    "load_model",
    "save_model",
    "segment",
    "train",
]
__version__ = "0.1.0"
