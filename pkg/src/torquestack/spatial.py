"""Minimal 6D spatial-vector algebra used by the kinematics and dynamics passes.

Spatial motion vectors are ordered (angular, linear); spatial force vectors
are ordered (couple, force). Both are expressed in the coordinates of a body
frame unless stated otherwise.
"""

from __future__ import annotations

import numpy as np


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    c = np.cos(angle)
    s = np.sin(angle)
    k = skew(axis)
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis XYZ convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def matrix_to_rpy(r: np.ndarray) -> tuple[float, float, float]:
    """Inverse of rpy_to_matrix; pitch returned in [-pi/2, pi/2]."""
    pitch = np.arcsin(np.clip(-r[2, 0], -1.0, 1.0))
    if abs(r[2, 0]) < 1.0 - 1e-12:
        roll = np.arctan2(r[2, 1], r[2, 2])
        yaw = np.arctan2(r[1, 0], r[0, 0])
    else:
        # gimbal lock: yaw set to zero, roll absorbs the remainder
        roll = np.arctan2(-r[1, 2], r[1, 1])
        yaw = 0.0
    return float(roll), float(pitch), float(yaw)


def motion_xform(e: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Plucker coordinate transform for motion vectors, frame A to frame B.

    e rotates A coordinates into B coordinates; r is the origin of B
    expressed in A. Force vectors transform with the inverse transpose,
    i.e. forces map B -> A through the transpose of this matrix.
    """
    x = np.zeros((6, 6))
    x[:3, :3] = e
    x[3:, 3:] = e
    x[3:, :3] = -e @ skew(r)
    return x


def crm(v: np.ndarray) -> np.ndarray:
    """Spatial cross product matrix for motion vectors (v x m)."""
    out = np.zeros((6, 6))
    w = skew(v[:3])
    out[:3, :3] = w
    out[3:, 3:] = w
    out[3:, :3] = skew(v[3:])
    return out


def crf(v: np.ndarray) -> np.ndarray:
    """Spatial cross product matrix for force vectors (v x* f)."""
    return -crm(v).T


def spatial_inertia(mass: float, com: np.ndarray, inertia_com: np.ndarray) -> np.ndarray:
    """6x6 spatial inertia about the body-frame origin.

    inertia_com is the 3x3 rotational inertia about the center of mass,
    expressed in body coordinates.
    """
    c = skew(com)
    out = np.zeros((6, 6))
    out[:3, :3] = inertia_com + mass * (c @ c.T)
    out[:3, 3:] = mass * c
    out[3:, :3] = mass * c.T
    out[3:, 3:] = mass * np.eye(3)
    return out
