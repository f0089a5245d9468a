"""Camera maths: pose distances, neighbour selection, reprojection, visibility,
and gathering neighbour features into the novel view.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import ops
from .numerics.tensor import Tensor, as_tensor
from .rotations import euler_zyx, euler_zyx_matrix, wrap_angle
from .scene_io.types import CameraPose, PinholeIntrinsics, rotation_problem

DEFAULT_LENIENCY = 0.25
STAGE_ONE = 5


def euler_from_rotation(R: np.ndarray) -> np.ndarray:
    """Intrinsic Z-Y-X Euler angles (yaw, pitch, roll) in radians."""
    problem = rotation_problem(R, tol=1e-6)
    if problem:
        raise ValueError(problem)
    return euler_zyx(R)


def rotation_from_euler(angles) -> np.ndarray:
    return euler_zyx_matrix(*angles)


def dist_ang(Rk: np.ndarray, Ri: np.ndarray) -> float:
    """Mean absolute (wrapped) Euler-angle difference."""
    d = wrap_angle(euler_from_rotation(Rk) - euler_from_rotation(Ri))
    return float(np.abs(d).sum() / 3.0)


def dist_pos(tk, ti) -> float:
    return float(np.abs(np.asarray(tk, dtype=np.float64) - np.asarray(ti, dtype=np.float64)).sum() / 3.0)


def camera_descriptor(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Orientation and position of a camera in the world frame.

    Returns (camera-to-world rotation, camera centre); distances and camera
    attention are computed on these rather than on the world-to-camera pair,
    whose translation is not the camera position.
    """
    return pose.R.T, pose.center


def select_neighbors(query: CameraPose, candidates: Sequence[CameraPose], n: int) -> list[int]:
    """Indices of the ``n`` nearest candidates.

    Stage one keeps the five positionally closest cameras; stage two keeps the
    ``n`` of those with the smallest angular distance.  Ties go to the lower
    candidate index; the result is ordered by angular distance.
    """
    if len(candidates) < STAGE_ONE:
        raise ValueError(f"neighbour selection needs at least {STAGE_ONE} candidates, got {len(candidates)}")
    if not 1 <= n <= STAGE_ONE:
        raise ValueError(f"n must be in 1..{STAGE_ONE}, got {n}")
    qR, qc = camera_descriptor(query)
    pos = [dist_pos(qc, camera_descriptor(c)[1]) for c in candidates]
    stage1 = sorted(range(len(candidates)), key=lambda j: (pos[j], j))[:STAGE_ONE]
    ang = {j: dist_ang(qR, camera_descriptor(candidates[j])[0]) for j in stage1}
    return sorted(stage1, key=lambda j: (ang[j], j))[:n]


def relative_transform(Ck: CameraPose, Ci: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation taking camera-k coordinates to camera-i coordinates."""
    R = Ci.R @ Ck.R.T
    return R, Ci.t - R @ Ck.t


def reproject_coord(xk, Kk: PinholeIntrinsics, Ck: CameraPose, Ki: PinholeIntrinsics, Ci: CameraPose):
    """Map pixel ``(x, y)`` at depth ``z`` in camera k into camera i.

    Returns ``(x', y', z', valid)`` where ``valid`` is False when the point
    lands behind camera i.
    """
    x, y, z = (float(v) for v in xk)
    if not z > 0:
        raise ValueError(f"depth must be positive, got {z}")
    p = z * (Kk.K_inv @ np.array([x, y, 1.0]))
    R, t = relative_transform(Ck, Ci)
    q = R @ p + t
    h = Ki.K @ q
    zp = q[2]
    if zp <= 0:
        return float("nan"), float("nan"), float(zp), False
    return float(h[0] / h[2]), float(h[1] / h[2]), float(zp), True


@dataclass
class ReprojectionGrid:
    coords: np.ndarray  # H x W x 2, (x, y) in neighbour pixels
    zproj: np.ndarray  # H x W
    valid: np.ndarray  # H x W bool


def reproject_map(Dk: np.ndarray, Kk: PinholeIntrinsics, Ck: CameraPose, Ki: PinholeIntrinsics, Ci: CameraPose) -> ReprojectionGrid:
    """Dense reprojection of every novel-view pixel into the neighbour view."""
    Dk = np.asarray(Dk, dtype=np.float64)
    h, w = Dk.shape
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    rays = np.stack([u, v, np.ones_like(u)], axis=-1) @ Kk.K_inv.T
    pts = rays * Dk[..., None]
    R, t = relative_transform(Ck, Ci)
    q = pts @ R.T + t
    zp = q[..., 2]
    proj = q @ Ki.K.T
    with np.errstate(divide="ignore", invalid="ignore"):
        coords = proj[..., :2] / proj[..., 2:3]
    front = (zp > 0) & (Dk > 0) & np.isfinite(Dk)
    eps = 1e-6  # absorb round-off for pixels landing exactly on the border
    inside = (
        (coords[..., 0] >= -eps)
        & (coords[..., 0] <= Ki.width - 1 + eps)
        & (coords[..., 1] >= -eps)
        & (coords[..., 1] <= Ki.height - 1 + eps)
    )
    valid = front & inside & np.isfinite(coords).all(axis=-1)
    # park invalid samples outside the image so sampling them yields zeros
    coords = np.where(valid[..., None], coords, -10.0)
    return ReprojectionGrid(coords, np.where(valid, zp, 0.0), valid)


def sample_map(img: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Bilinear zero-padded lookup of an H x W (or H x W x C) array."""
    arr = np.asarray(img, dtype=np.float64)
    chw = arr[None, None] if arr.ndim == 2 else arr.transpose(2, 0, 1)[None]
    out = ops.grid_sample(Tensor(chw), coords).data[0]
    return out[0] if arr.ndim == 2 else out.transpose(1, 2, 0)


def visibility(grid: ReprojectionGrid, Di: np.ndarray, leniency: float = DEFAULT_LENIENCY) -> np.ndarray:
    """Depth-ratio visibility test with H(0) = 1; invalid pixels are 0."""
    if leniency < 0:
        raise ValueError("leniency must be non-negative")
    zi = sample_map(Di, grid.coords)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = 1.0 - grid.zproj / zi + leniency
    vis = grid.valid & (zi > 0) & (score >= 0)
    return vis.astype(np.float64)


def gather_aligned(features: Tensor, Di: np.ndarray, grid: ReprojectionGrid, mask: np.ndarray):
    """Sample neighbour features (N x C x H x W) and depth into the novel view,
    zeroing occluded and out-of-frame pixels.
    """
    features = as_tensor(features)
    sampled = ops.grid_sample(features, grid.coords)
    m = np.asarray(mask, dtype=features.dtype)[None, None]
    aligned = ops.mul(sampled, Tensor(m))
    depth = sample_map(Di, grid.coords) * mask
    return aligned, depth
