"""Camouflaged-object detection: region-focused attention, latent-graph
interaction across stages, and a confidence-gated decoder, on a small
float64 autodiff core. Pure numpy; CPU-sized profiles."""

__version__ = "0.1.0"

from .config import ModelConfig, desk_profile
from .data import SamplePair, SynthSpec, load_dataset, make_pair, synth_generate
from .errors import HGIError
from .losses import total_loss
from .metrics import MetricReport, evaluate_pair
from .model import Model, build, checkpoint_load, checkpoint_save
from .train import TrainSettings, train

__all__ = [
    "HGIError",
    "MetricReport",
    "Model",
    "ModelConfig",
    "SamplePair",
    "SynthSpec",
    "TrainSettings",
    "__version__",
    "build",
    "checkpoint_load",
    "checkpoint_save",
    "desk_profile",
    "evaluate_pair",
    "load_dataset",
    "make_pair",
    "synth_generate",
    "total_loss",
    "train",
]
