"""Posed-image data model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


def rotation_problem(R: np.ndarray, tol: float = ORTHO_TOL) -> str | None:
    """Why ``R`` is not a proper rotation, or None if it is one."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        return "rotation must be a finite 3x3 matrix"
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        return "rotation is not orthonormal"
    if abs(np.linalg.det(R) - 1.0) > tol:
        return "rotation determinant is not +1"
    return None


@dataclass(frozen=True)
class CameraPose:
    """World-to-camera transform ``x_cam = R @ x_world + t``.

    Camera looks down +z, image x points right and y points down.
    """

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))
        problem = rotation_problem(self.R)
        if problem:
            raise ValueError(problem)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.t

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    @property
    def inverse_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.R.T
        m[:3, 3] = -self.R.T @ self.t
        return m

    def __eq__(self, other):
        return isinstance(other, CameraPose) and np.array_equal(self.R, other.R) and np.array_equal(self.t, other.t)

    __hash__ = None


@dataclass
class PosedImage:
    rgb: np.ndarray
    depth: np.ndarray
    pose: CameraPose
    intrinsics: PinholeIntrinsics

    def __post_init__(self):
        h, w = self.intrinsics.height, self.intrinsics.width
        if self.rgb.shape != (h, w, 3):
            raise ValueError(f"rgb shape {self.rgb.shape} does not match intrinsics {(h, w, 3)}")
        if self.depth.shape != (h, w):
            raise ValueError(f"depth shape {self.depth.shape} does not match intrinsics {(h, w)}")


def split_indices(count: int) -> tuple[list[int], list[int]]:
    """Every eighth view (0, 8, 16, ...) is held out for testing."""
    if count < 8:
        raise ValueError(f"need at least 8 views to split, got {count}")
    test = list(range(0, count, 8))
    train = [i for i in range(count) if i % 8]
    return train, test


@dataclass
class SceneDataset:
    """Ground-truth views plus (optionally) their degraded renders."""

    views: list[PosedImage]
    renders: list[np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.views)

    @property
    def intrinsics(self) -> PinholeIntrinsics:
        return self.views[0].intrinsics

    @property
    def poses(self) -> list[CameraPose]:
        return [v.pose for v in self.views]

    @property
    def split(self) -> tuple[list[int], list[int]]:
        return split_indices(len(self.views))

    def with_poses(self, poses: list[CameraPose]) -> "SceneDataset":
        views = [replace(v, pose=p) for v, p in zip(self.views, poses)]
        return SceneDataset(views, self.renders, dict(self.meta))


@dataclass(frozen=True)
class DegradationConfig:
    blur_sigma: float = 1.5
    down_up_factor: int = 2
    noise_sigma: float = 0.01
    seed: int = 0
    depth_noise: float = 0.0

    def __post_init__(self):
        if self.blur_sigma < 0 or self.noise_sigma < 0 or self.depth_noise < 0:
            raise ValueError("degradation parameters must be non-negative")
        if int(self.down_up_factor) != self.down_up_factor or self.down_up_factor < 1:
            raise ValueError(f"down_up_factor must be an integer >= 1, got {self.down_up_factor}")


POSE_NOISE_PRESETS = {
    "none": (0.0, 0.0),
    "small": (6.25e-2, 3.125e-3),
    "medium": (12.5e-2, 6.25e-3),
    "large": (25e-2, 12.5e-3),
}


@dataclass(frozen=True)
class PoseNoiseConfig:
    rot_sigma_deg: float = 0.0
    pos_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.rot_sigma_deg < 0 or self.pos_sigma < 0:
            raise ValueError("pose noise sigmas must be non-negative")

    @classmethod
    def preset(cls, name: str, seed: int = 0) -> "PoseNoiseConfig":
        try:
            rot, pos = POSE_NOISE_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown pose-noise preset {name!r}; choose from {sorted(POSE_NOISE_PRESETS)}") from None
        return cls(rot, pos, seed)
