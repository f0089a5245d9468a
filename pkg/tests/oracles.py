"""Independent reference implementations shared by unit and acceptance tests."""

import itertools

import numpy as np
from scipy.spatial.transform import Rotation

from geoenhance.scene_io import SceneSpec

# one sphere floating well above the ground plane
FLOATING = SceneSpec(spheres=(((0.0, 0.0, 1.1), 0.3),), view_count=8, width=64, height=64, supersample=1)


def random_rotation(rng):
    return Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()


def centre(pose):
    return -pose.R.T @ pose.t


def _euler(R_c2w):
    return Rotation.from_matrix(R_c2w).as_euler("ZYX")


def _ang(qR, R):
    d = _euler(qR) - _euler(R)
    return np.abs((d + np.pi) % (2 * np.pi) - np.pi).mean()


def neighbors_by_subsets(query, cands, n):
    """Score every 5-subset by its sorted (distance, index) keys; rank the winner by angle."""
    qc = centre(query)
    pos = [np.abs(qc - centre(c)).mean() for c in cands]
    best = min(itertools.combinations(range(len(cands)), 5), key=lambda s: sorted((pos[j], j) for j in s))
    ang = {j: _ang(query.R.T, cands[j].R.T) for j in best}
    return sorted(best, key=lambda j: (ang[j], j))[:n]


def neighbors_by_counting(query, cands, n):
    """Rank each candidate by counting how many others beat it, in both stages."""
    qc = centre(query)
    pos = [np.abs(qc - centre(c)).mean() for c in cands]
    m = len(cands)
    rank1 = [sum((pos[k], k) < (pos[j], j) for k in range(m)) for j in range(m)]
    stage1 = [j for j in range(m) if rank1[j] < 5]
    ang = {j: _ang(query.R.T, cands[j].R.T) for j in stage1}
    rank2 = {j: sum((ang[k], k) < (ang[j], j) for k in stage1) for j in stage1}
    return [j for r in range(n) for j in stage1 if rank2[j] == r]


def dense_reprojection(x, y, z, Kk, Ck, Ki, Ci):
    """4 x 4 homogeneous matrices: pixel -> camera k -> world -> camera i -> pixel."""
    def k4(K):
        m = np.eye(4)
        m[:3, :3] = K.K
        return m

    p = np.array([x * z, y * z, z, 1.0])
    q = k4(Ki) @ Ci.matrix @ Ck.inverse_matrix @ np.linalg.inv(k4(Kk)) @ p
    return q[0] / q[2], q[1] / q[2], q[2]


def occluded_by_marching(p, c, spheres):
    """Sphere-trace from surface point p toward camera centre c."""
    seg = c - p
    length = np.linalg.norm(seg)
    d = seg / length
    t = 1e-4
    while t < length:
        q = p + t * d
        sdf = min(np.linalg.norm(q - np.asarray(sc)) - r for sc, r in spheres)
        sdf = min(sdf, q[2]) if t > 1e-3 else sdf  # the plane cannot block a camera above it
        if sdf < 1e-7:
            return True
        t += max(sdf, 1e-5)
    return False


def visibility_agreement(data, pairs, leniency=0.25):
    """(agreeing pixels, valid pixels) between the depth-ratio mask and ray marching."""
    from geoenhance import geometry

    agree = total = 0
    for k, i in pairs:
        a, b = data.views[k], data.views[i]
        g = geometry.reproject_map(a.depth, a.intrinsics, a.pose, b.intrinsics, b.pose)
        mask = geometry.visibility(g, b.depth, leniency) > 0
        K = a.intrinsics
        for r, col in zip(*np.nonzero(g.valid)):
            cam = np.array([(col - K.cx) / K.fx, (r - K.cy) / K.fy, 1.0]) * a.depth[r, col]
            p = a.pose.R.T @ (cam - a.pose.t)
            visible = not occluded_by_marching(p, centre(b.pose), data.meta["spec"]["spheres"])
            agree += visible == mask[r, col]
            total += 1
    return agree, total


def photometric_error(scene, pairs):
    from geoenhance import geometry

    errs = []
    for k, i in pairs:
        a, b = scene.views[k], scene.views[i]
        g = geometry.reproject_map(a.depth, a.intrinsics, a.pose, b.intrinsics, b.pose)
        m = geometry.visibility(g, b.depth) > 0
        errs.append(np.abs(geometry.sample_map(b.rgb, g.coords) - a.rgb)[m].mean())
    return float(np.mean(errs))
