"""Encoder-decoder change detection on stacked image pairs."""

from .losses import dice_loss
from .model import ENCODER_KINDS, ChangeUNet, ModelSpec, build_model, count_parameters
from .training import TrainConfig, encoder_features, forward, load_model, predict_mask, train

__all__ = [
    "ENCODER_KINDS", "ChangeUNet", "ModelSpec", "TrainConfig", "build_model", "count_parameters",
    "dice_loss", "encoder_features", "forward", "load_model", "predict_mask", "train",
]
