"""Ray-traced synthetic scenes: a textured ground plane with spheres resting on
or floating above it, seen by cameras on an arc that all face the centre.

Depth is the exact camera-frame z of the first hit at each pixel centre.
Colour is Lambertian under a fixed directional light, so it does not depend on
the viewpoint and views agree photometrically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .types import CameraPose, PinholeIntrinsics, PosedImage, SceneDataset

LIGHT_DIR = np.array([0.4, -0.3, 0.866])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)

DEFAULT_SPHERES = (
    ((0.0, 0.0, 0.35), 0.35),
    ((0.55, -0.35, 0.22), 0.22),
    ((-0.5, 0.4, 0.45), 0.2),
)


@dataclass
class SceneSpec:
    texture_seed: int = 0
    spheres: tuple = DEFAULT_SPHERES
    ground: bool = True
    view_count: int = 24
    width: int = 96
    height: int = 96
    fov_deg: float = 45.0
    radius: float = 1.8
    cam_height: float = 2.6
    arc_deg: float = 120.0
    arc_start_deg: float = -150.0
    look_at: tuple = (0.0, 0.0, 0.15)
    checker_freq: float = 5.0
    supersample: int = 3
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        if "spheres" in d:
            d["spheres"] = tuple((tuple(map(float, c)), float(r)) for c, r in d["spheres"])
        if "look_at" in d:
            d["look_at"] = tuple(map(float, d["look_at"]))
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "texture_seed": self.texture_seed,
            "spheres": [[list(c), r] for c, r in self.spheres],
            "ground": self.ground,
            "view_count": self.view_count,
            "width": self.width,
            "height": self.height,
            "fov_deg": self.fov_deg,
            "radius": self.radius,
            "cam_height": self.cam_height,
            "arc_deg": self.arc_deg,
            "arc_start_deg": self.arc_start_deg,
            "look_at": list(self.look_at),
            "checker_freq": self.checker_freq,
            "supersample": self.supersample,
        }


def look_at_pose(center, target, up=(0.0, 0.0, 1.0)) -> CameraPose:
    center = np.asarray(center, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - center
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ValueError("degenerate camera: centre coincides with look-at point")
    fwd /= norm
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValueError("degenerate camera: viewing direction parallel to up vector")
    right /= rn
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return CameraPose(R, -R @ center)


def intrinsics_for(width: int, height: int, fov_deg: float) -> PinholeIntrinsics:
    f = (height / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
    return PinholeIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


def arc_poses(spec: SceneSpec) -> list[CameraPose]:
    n = spec.view_count
    poses = []
    for i in range(n):
        if spec.arc_deg >= 360.0:
            ang = math.radians(spec.arc_start_deg + 360.0 * i / n)
        else:
            ang = math.radians(spec.arc_start_deg + spec.arc_deg * i / max(n - 1, 1))
        c = (spec.radius * math.cos(ang), spec.radius * math.sin(ang), spec.cam_height)
        poses.append(look_at_pose(c, spec.look_at))
    return poses


# ---------------------------------------------------------------------------
# texture
# ---------------------------------------------------------------------------

class SolidTexture:
    """Checkerboard plus octaves of trilinear value noise in world space."""

    def __init__(self, seed: int, checker_freq: float, lattice: int = 64, octaves=(3.0, 7.0, 15.0)):
        rng = np.random.default_rng(seed)
        self.table = rng.random((lattice, lattice, lattice))
        self.lattice = lattice
        self.freq = checker_freq
        self.octaves = octaves
        self.palettes = rng.uniform(0.05, 0.95, size=(8, 2, 3))

    def _noise(self, p: np.ndarray) -> np.ndarray:
        L = self.lattice
        base = np.floor(p)
        f = p - base
        f = f * f * (3 - 2 * f)
        i = base.astype(np.int64) % L
        j = (i + 1) % L
        out = 0.0
        for dx in (0, 1):
            ix = j[..., 0] if dx else i[..., 0]
            wx = f[..., 0] if dx else 1 - f[..., 0]
            for dy in (0, 1):
                iy = j[..., 1] if dy else i[..., 1]
                wy = f[..., 1] if dy else 1 - f[..., 1]
                for dz in (0, 1):
                    iz = j[..., 2] if dz else i[..., 2]
                    wz = f[..., 2] if dz else 1 - f[..., 2]
                    out = out + self.table[ix, iy, iz] * wx * wy * wz
        return out

    def albedo(self, p: np.ndarray, obj: np.ndarray) -> np.ndarray:
        q = p * self.freq
        checker = (np.floor(q).astype(np.int64).sum(axis=-1) & 1).astype(np.float64)
        noise = np.zeros(p.shape[:-1])
        amp, norm = 1.0, 0.0
        for k, freq in enumerate(self.octaves):
            noise += amp * self._noise(p * freq + 17.0 * k)
            norm += amp
            amp *= 0.55
        noise /= norm
        mix = np.clip(0.55 * checker + 0.45 * noise, 0.0, 1.0)[..., None]
        pal = self.palettes[obj % len(self.palettes)]
        return pal[..., 0, :] * (1 - mix) + pal[..., 1, :] * mix


# ---------------------------------------------------------------------------
# ray casting
# ---------------------------------------------------------------------------

def intersect(origin: np.ndarray, dirs: np.ndarray, spheres, ground: bool = True):
    """First hit along ``origin + s * dirs``.

    Returns (s, object id, normal); s = inf and id = -1 where nothing is hit.
    Object 0 is the ground plane z = 0, objects 1.. are the spheres.
    """
    shape = dirs.shape[:-1]
    best = np.full(shape, np.inf)
    obj = np.full(shape, -1, dtype=np.int64)
    if ground:
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = -origin[2] / dz
        s = np.where((dz < 0) & (s > 0), s, np.inf) if origin[2] > 0 else np.where((dz > 0) & (s > 0), s, np.inf)
        hit = s < best
        best = np.where(hit, s, best)
        obj = np.where(hit, 0, obj)
    for k, (c, r) in enumerate(spheres, start=1):
        oc = origin - np.asarray(c, dtype=np.float64)
        a = np.einsum("...i,...i->...", dirs, dirs)
        b = np.einsum("...i,i->...", dirs, oc)
        cc = oc @ oc - r * r
        disc = b * b - a * cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        s0 = (-b - sq) / a
        s1 = (-b + sq) / a
        s = np.where(s0 > 1e-9, s0, np.where(s1 > 1e-9, s1, np.inf))
        s = np.where(disc >= 0, s, np.inf)
        hit = s < best
        best = np.where(hit, s, best)
        obj = np.where(hit, k, obj)
    pts = origin + best[..., None] * dirs
    normal = np.zeros(shape + (3,))
    normal[..., 2] = 1.0
    for k, (c, r) in enumerate(spheres, start=1):
        m = obj == k
        normal[m] = (pts[m] - np.asarray(c)) / r
    return best, obj, normal, pts


def pixel_rays(pose: CameraPose, K: PinholeIntrinsics, du: float = 0.0, dv: float = 0.0) -> np.ndarray:
    """World-space ray directions with unit camera-z component for every pixel."""
    v, u = np.mgrid[0 : K.height, 0 : K.width].astype(np.float64)
    cam = np.stack([(u + du - K.cx) / K.fx, (v + dv - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    return cam @ pose.R  # rows: R^T @ d


def render_view(spec: SceneSpec, pose: CameraPose, K: PinholeIntrinsics, texture: SolidTexture) -> PosedImage:
    origin = pose.center
    s, obj, _, _ = intersect(origin, pixel_rays(pose, K), spec.spheres, spec.ground)
    if not np.isfinite(s).all():
        raise ValueError("camera sees empty sky; tilt cameras further down or narrow the field of view")
    depth = s  # ray directions have unit camera-z, so the ray parameter is the depth
    ss = max(int(spec.supersample), 1)
    rgb = np.zeros((K.height, K.width, 3))
    offsets = [(i + 0.5) / ss - 0.5 for i in range(ss)]
    for dv in offsets:
        for du in offsets:
            s2, obj2, n2, p2 = intersect(origin, pixel_rays(pose, K, du, dv), spec.spheres, spec.ground)
            p2 = np.where(np.isfinite(s2)[..., None], p2, 0.0)
            alb = texture.albedo(p2, np.maximum(obj2, 0))
            shade = 0.35 + 0.65 * np.clip(n2 @ LIGHT_DIR, 0.0, 1.0)
            rgb += alb * shade[..., None]
    rgb /= ss * ss
    return PosedImage(np.clip(rgb, 0.0, 1.0), depth, pose, K)


def synth_scene(spec: SceneSpec | None = None) -> SceneDataset:
    spec = spec or SceneSpec()
    if spec.view_count < 8:
        raise ValueError(f"need at least 8 views, got {spec.view_count}")
    if spec.width < 32 or spec.height < 32:
        raise ValueError(f"resolution must be at least 32x32, got {spec.width}x{spec.height}")
    K = intrinsics_for(spec.width, spec.height, spec.fov_deg)
    tex = SolidTexture(spec.texture_seed, spec.checker_freq)
    views = [render_view(spec, p, K, tex) for p in arc_poses(spec)]
    return SceneDataset(views, meta={"spec": spec.to_dict()})
