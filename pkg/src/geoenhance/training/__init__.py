"""Loss, metrics, the assembled enhancer, training and evaluation."""

from .loss import PerceptualStack, loss, perceptual_stack
from .metrics import psnr, ssim
from .model import Enhancer, ViewInput, forward, to_image
from .train import (
    FitResult,
    TrainConfig,
    build_model,
    desk_config,
    enhance_view,
    evaluate_scene,
    fit,
    pack_checkpoint,
    train_step,
    unpack_checkpoint,
)

__all__ = [
    "Enhancer",
    "FitResult",
    "PerceptualStack",
    "TrainConfig",
    "ViewInput",
    "build_model",
    "desk_config",
    "enhance_view",
    "evaluate_scene",
    "fit",
    "forward",
    "loss",
    "pack_checkpoint",
    "perceptual_stack",
    "psnr",
    "ssim",
    "to_image",
    "train_step",
    "unpack_checkpoint",
]
