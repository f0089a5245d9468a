"""Posed-scene data model, synthetic scenes, degradation and pose noise, file I/O."""

from .degrade import degrade, degrade_dataset, degrade_rgb, perturb_poses
from .files import load_scene, read_pfm, save_scene, write_pfm
from .synth import SceneSpec, look_at_pose, synth_scene
from .types import (
    POSE_NOISE_PRESETS,
    CameraPose,
    DegradationConfig,
    PinholeIntrinsics,
    PosedImage,
    PoseNoiseConfig,
    SceneDataset,
    split_indices,
)


def split_dataset(dataset: SceneDataset) -> tuple[list[int], list[int]]:
    """(train indices, test indices) with every eighth view held out."""
    return split_indices(len(dataset))


__all__ = [
    "POSE_NOISE_PRESETS",
    "CameraPose",
    "DegradationConfig",
    "PinholeIntrinsics",
    "PoseNoiseConfig",
    "PosedImage",
    "SceneDataset",
    "SceneSpec",
    "degrade",
    "degrade_dataset",
    "degrade_rgb",
    "load_scene",
    "look_at_pose",
    "perturb_poses",
    "read_pfm",
    "save_scene",
    "split_dataset",
    "synth_scene",
    "write_pfm",
]
