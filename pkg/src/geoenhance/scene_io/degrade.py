"""Render-degradation simulator and camera-pose noise."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.ndimage import gaussian_filter

from ..numerics.ops import resize_matrix
from ..rotations import euler_zyx_matrix, orthonormalize
from .types import CameraPose, DegradationConfig, PoseNoiseConfig, PosedImage, SceneDataset


def _resize(img: np.ndarray, h: int, w: int) -> np.ndarray:
    my = resize_matrix(img.shape[0], h)
    mx = resize_matrix(img.shape[1], w)
    return np.einsum("ij,jkc,lk->ilc", my, img, mx)


def degrade_rgb(rgb: np.ndarray, cfg: DegradationConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Blur, bilinear down/up resample, add clipped Gaussian noise."""
    out = np.asarray(rgb, dtype=np.float64)
    if cfg.blur_sigma > 0:
        out = gaussian_filter(out, sigma=(cfg.blur_sigma, cfg.blur_sigma, 0), mode="reflect")
    f = int(cfg.down_up_factor)
    if f > 1:
        h, w = out.shape[:2]
        small = _resize(out, max(1, round(h / f)), max(1, round(w / f)))
        out = _resize(small, h, w)
    if cfg.noise_sigma > 0:
        rng = rng or np.random.default_rng(cfg.seed)
        out = out + rng.normal(0.0, cfg.noise_sigma, out.shape)
    return np.clip(out, 0.0, 1.0)


def degrade(image: PosedImage, cfg: DegradationConfig, rng: np.random.Generator | None = None) -> PosedImage:
    """Degraded copy of ``image``; depth, pose and intrinsics are untouched."""
    return replace(image, rgb=degrade_rgb(image.rgb, cfg, rng))


def degrade_dataset(dataset: SceneDataset, cfg: DegradationConfig) -> SceneDataset:
    """Attach degraded renders to every view (one noise stream per scene seed).

    With ``cfg.depth_noise > 0`` the depth maps are also scaled by
    ``1 + N(0, depth_noise)`` per pixel, for exercising visibility leniency.
    """
    rng = np.random.default_rng(cfg.seed)
    renders = [degrade_rgb(v.rgb, cfg, rng) for v in dataset.views]
    views = dataset.views
    if cfg.depth_noise > 0:
        views = [
            replace(v, depth=np.maximum(v.depth * (1.0 + rng.normal(0.0, cfg.depth_noise, v.depth.shape)), 1e-6))
            for v in views
        ]
    meta = dict(dataset.meta)
    meta["degradation"] = {
        "blur_sigma": cfg.blur_sigma,
        "down_up_factor": cfg.down_up_factor,
        "noise_sigma": cfg.noise_sigma,
        "seed": cfg.seed,
        "depth_noise": cfg.depth_noise,
    }
    return SceneDataset(list(views), renders, meta)


def pose_noise_draws(count: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit-variance draws (angles, offsets) shared by every noise level.

    Scaling the same draws keeps presets nested: a larger preset perturbs each
    camera in the same direction, only further.
    """
    rng = np.random.default_rng(seed)
    draws = rng.standard_normal((count, 6))
    return draws[:, :3], draws[:, 3:]


def perturb_pose(pose: CameraPose, angles_deg, offset) -> CameraPose:
    angles = np.radians(np.asarray(angles_deg, dtype=np.float64))
    if not angles.any():
        R = pose.R
    else:
        R = orthonormalize(euler_zyx_matrix(*angles) @ pose.R)
    return CameraPose(R, pose.t + np.asarray(offset, dtype=np.float64))


def perturb_poses(dataset: SceneDataset, cfg: PoseNoiseConfig, views=None) -> SceneDataset:
    """Add zero-mean Gaussian Euler-angle (degrees) and translation noise.

    ``views`` restricts the perturbation to a subset of indices; draws are
    made for every view regardless so the subset does not change them.
    """
    unit_ang, unit_pos = pose_noise_draws(len(dataset), cfg.seed)
    chosen = set(range(len(dataset)) if views is None else views)
    poses = []
    for i, p in enumerate(dataset.poses):
        if i in chosen:
            p = perturb_pose(p, unit_ang[i] * cfg.rot_sigma_deg, unit_pos[i] * cfg.pos_sigma)
        poses.append(p)
    out = dataset.with_poses(poses)
    out.meta["pose_noise"] = {"rot_sigma_deg": cfg.rot_sigma_deg, "pos_sigma": cfg.pos_sigma, "seed": cfg.seed}
    return out
