"""Intrinsic Z-Y-X Euler angles and rotation helpers."""

from __future__ import annotations

import math

import numpy as np

GIMBAL_EPS = 1e-7


def euler_zyx_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cz, sz = math.cos(yaw), math.sin(yaw)
    cy, sy = math.cos(pitch), math.sin(pitch)
    cx, sx = math.cos(roll), math.sin(roll)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx


def euler_zyx(R: np.ndarray) -> np.ndarray:
    """(yaw, pitch, roll) with ``R = Rz(yaw) Ry(pitch) Rx(roll)``.

    Near gimbal lock (|cos pitch| < 1e-7) roll is fixed to 0.
    """
    R = np.asarray(R, dtype=np.float64)
    cos_pitch = math.hypot(R[0, 0], R[1, 0])
    pitch = math.atan2(-R[2, 0], cos_pitch)
    if cos_pitch < GIMBAL_EPS:
        return np.array([math.atan2(-R[0, 1], R[1, 1]), pitch, 0.0])
    return np.array([math.atan2(R[1, 0], R[0, 0]), pitch, math.atan2(R[2, 1], R[2, 2])])


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest proper rotation in the Frobenius sense."""
    u, _, vt = np.linalg.svd(R)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def geodesic_angle(Ra: np.ndarray, Rb: np.ndarray) -> float:
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return float(math.acos(max(-1.0, min(1.0, c))))
