"""Rigid-body dynamics over kinematic trees.

Provides recursive Newton-Euler inverse dynamics, the composite-rigid-body
mass matrix, nonlinear (Coriolis/centrifugal/gravity) effects, and forward
dynamics for simulation. Conventions:

    M(q) qdd + h(q, qd) - sum_k J_k^T f_k = tau

External wrenches are given per link as 6-vectors (force, torque), world
frame, acting at the link frame origin. Gravity is folded into h.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import ROOT_PARENT, FIXED, RobotModel, compute_world_kinematics, joint_motion_xforms
from .spatial import crm, spatial_inertia

Wrenches = dict[int, np.ndarray] | None


def _check_vec(model: RobotModel, v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (model.dof_count,):
        raise ValueError(f"{name} must have length {model.dof_count}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite {name}")
    return v


def _spatial_inertias(model: RobotModel) -> list[np.ndarray]:
    return [spatial_inertia(l.mass, l.com, l.inertia) for l in model.links]


def rnea(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    qdd: np.ndarray,
    external_forces: Wrenches = None,
) -> np.ndarray:
    """Inverse dynamics: joint torques realizing qdd at state (q, qd).

    Two O(n) passes: outward velocity/acceleration propagation with the
    gravity trick (base acceleration set to -g), inward force accumulation.
    """
    q = _check_vec(model, q, "q")
    qd = _check_vec(model, qd, "qd")
    qdd = _check_vec(model, qdd, "qdd")

    xforms, axes = joint_motion_xforms(model, q)
    inertias = _spatial_inertias(model)
    n_links = model.n_links

    ext_body = None
    if external_forces:
        kin = compute_world_kinematics(model, q)
        ext_body = {}
        for link, wrench in external_forces.items():
            w = np.asarray(wrench, dtype=float)
            if w.shape != (6,):
                raise ValueError("external wrench must be a 6-vector (force, torque)")
            r_t = kin.rotations[link].T
            ext_body[link] = np.concatenate([r_t @ w[3:], r_t @ w[:3]])

    v = np.zeros((n_links, 6))
    a = np.zeros((n_links, 6))
    f = np.zeros((n_links, 6))
    a_base = np.concatenate([np.zeros(3), -model.gravity])

    for i, joint in enumerate(model.joints):
        x = xforms[i]
        if joint.parent == ROOT_PARENT:
            v_p, a_p = np.zeros(6), a_base
        else:
            v_p, a_p = v[joint.parent], a[joint.parent]
        if joint.kind == FIXED:
            v[i] = x @ v_p
            a[i] = x @ a_p
        else:
            d = model.dof_index(i)
            vj = axes[i] * qd[d]
            v[i] = x @ v_p + vj
            a[i] = x @ a_p + axes[i] * qdd[d] + crm(v[i]) @ vj
        ii = inertias[i]
        f[i] = ii @ a[i] + (-crm(v[i]).T) @ (ii @ v[i])
        if ext_body is not None and i in ext_body:
            f[i] -= ext_body[i]

    tau = np.zeros(model.dof_count)
    for i in range(n_links - 1, -1, -1):
        joint = model.joints[i]
        if joint.kind != FIXED:
            tau[model.dof_index(i)] = axes[i] @ f[i]
        if joint.parent != ROOT_PARENT:
            f[joint.parent] += xforms[i].T @ f[i]
    return tau


def nonlinear_effects(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Coriolis, centrifugal and gravity torques: h = rnea(q, qd, 0)."""
    return rnea(model, q, qd, np.zeros(model.dof_count))


def crba(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Joint-space mass matrix via composite rigid bodies; symmetric PD."""
    q = _check_vec(model, q, "q")
    xforms, axes = joint_motion_xforms(model, q)
    composites = _spatial_inertias(model)
    n_links = model.n_links
    m = np.zeros((model.dof_count, model.dof_count))

    for i in range(n_links - 1, -1, -1):
        parent = model.joints[i].parent
        if parent != ROOT_PARENT:
            composites[parent] = composites[parent] + xforms[i].T @ composites[i] @ xforms[i]

    for i in range(n_links):
        if model.joints[i].kind == FIXED:
            continue
        di = model.dof_index(i)
        fc = composites[i] @ axes[i]
        m[di, di] = axes[i] @ fc
        j = i
        while model.joints[j].parent != ROOT_PARENT:
            fc = xforms[j].T @ fc
            j = model.joints[j].parent
            if model.joints[j].kind != FIXED:
                dj = model.dof_index(j)
                m[di, dj] = m[dj, di] = axes[j] @ fc
    return m


def forward_dynamics(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    tau: np.ndarray,
    external_forces: Wrenches = None,
) -> np.ndarray:
    """Joint accelerations given torques and external wrenches.

    Solves M qdd = tau - rnea(q, qd, 0, external) by Cholesky; raises if the
    mass matrix is numerically singular (non-physical model).
    """
    tau = _check_vec(model, tau, "tau")
    bias = rnea(model, q, qd, np.zeros(model.dof_count), external_forces)
    m = crba(model, q)
    m = 0.5 * (m + m.T)
    try:
        factor = cho_factor(m, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"mass matrix is not positive definite: {exc}") from None
    return cho_solve(factor, tau - bias, check_finite=False)
