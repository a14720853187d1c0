"""Prioritized torque controllers.

Three hierarchical schemes over the same task abstractions:

* ``uf_control``   - weighted-pseudoinverse recursion: each task is solved
  on its own and the solution is projected into the null space of the
  higher-priority tasks. Sound but not optimal; torque assembled by inverse
  dynamics, no mass matrix required.
* ``wbcf_control`` - operational-space cascade: per level a task-space mass
  matrix and force are computed with dynamically-consistent projections.
  Sound and optimal; requires the mass matrix and its inverse.
* ``tsid_control`` - acceleration-level lexicographic recursion with
  orthogonal projectors followed by inverse dynamics. Sound and optimal;
  the control path never materializes the mass matrix.

Force tasks use the constraint-force convention: ``f_star`` is the desired
contact force exerted by the environment on the robot.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from . import dynamics
from .model import (
    RobotModel,
    RobotState,
    compute_body_motion,
    compute_world_kinematics,
    jdot_qdot,
    point_jacobian,
)
from .numlin import (
    PinvConfig,
    PinvInfo,
    WeightSpec,
    damped_pinv,
    recursive_projector_update,
    weighted_null_projector,
    weighted_pinv,
)
from .tasks import (
    MotionTask,
    PosturalTask,
    RigidForceTask,
    SpringForceTask,
    TaskSpec,
    pd_reference,
    postural_reference,
    validate_hierarchy,
)


@dataclass(frozen=True)
class HierarchyInput:
    """One controller evaluation: plant model, state, ordered task stack."""

    model: RobotModel
    state: RobotState
    tasks: tuple[TaskSpec, ...]
    pinv_cfg: PinvConfig = field(default_factory=PinvConfig)
    weight: WeightSpec = field(default_factory=WeightSpec)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if any(isinstance(t, SpringForceTask) for t in self.tasks):
            raise TypeError("translate SpringForceTask to a motion task first")
        validate_hierarchy(self.tasks, require_postural=False)
        n = self.model.dof_count
        if self.state.q.shape != (n,):
            raise ValueError("state dimension does not match model")
        for t in self.tasks:
            if isinstance(t, PosturalTask) and t.q_p.shape != (n,):
                raise ValueError("postural target dimension does not match model")


@dataclass(frozen=True)
class LevelDiagnostics:
    """Numerical summary of one resolution level."""

    name: str
    sigma_max: float
    sigma_min_retained: float
    rank: int
    projector_rank: int


@dataclass(frozen=True)
class ControlOutput:
    tau: np.ndarray
    qdd_levels: tuple[np.ndarray, ...]
    diagnostics: tuple[LevelDiagnostics, ...]
    eval_time: float
    level_data: tuple = ()


@dataclass(frozen=True)
class WBCFLevelData:
    """Per-level prioritized Jacobian, task-space mass matrix and force."""

    j_p: np.ndarray
    lambda_p: np.ndarray
    f_p: np.ndarray


class _TaskRows:
    """Resolved task matrices at the current state: J, bias, desired acc."""

    __slots__ = ("jac", "bias", "xdd_star", "name")

    def __init__(self, jac, bias, xdd_star, name):
        self.jac = jac
        self.bias = bias
        self.xdd_star = xdd_star
        self.name = name


def _resolve_motion(model, state, task: MotionTask, kin, motion) -> _TaskRows:
    jac = point_jacobian(model, state.q, task.body, task.point, kin)
    bias = jdot_qdot(model, state.q, state.qd, task.body, task.point, motion)
    if task.selection is not None:
        rows = list(task.selection)
        jac = jac[rows, :]
        bias = bias[rows]
    if task.xdd_star is not None:
        xdd = np.asarray(task.xdd_star, dtype=float)
        if xdd.shape[0] != jac.shape[0]:
            raise ValueError(f"task {task.name}: xdd_star has wrong dimension")
    elif task.ref is not None:
        x_full = kin.rotations[task.body] @ np.asarray(task.point, float) + kin.translations[task.body]
        x = x_full[list(task.selection)] if task.selection is not None else x_full
        xd = jac @ state.qd
        xdd = pd_reference(task.gains, task.ref, x, xd)
    else:
        raise ValueError(f"task {task.name}: needs a reference or xdd_star")
    return _TaskRows(jac, bias, xdd, task.name)


def _resolve_postural(model, state, task: PosturalTask) -> _TaskRows:
    n = model.dof_count
    if task.qdd_star is not None:
        xdd = np.asarray(task.qdd_star, dtype=float)
    else:
        xdd = postural_reference(task.gains.kp, task.gains.kd, task.q_p, state.q, state.qd)
    return _TaskRows(np.eye(n), np.zeros(n), xdd, task.name)


def _resolve_contact(model, state, task: RigidForceTask, kin, motion):
    jac = point_jacobian(model, state.q, task.body, task.point, kin)
    bias = jdot_qdot(model, state.q, state.qd, task.body, task.point, motion)
    if task.hold_damping > 0.0:
        # velocity-level constraint stabilization folded into the bias
        bias = bias + task.hold_damping * (jac @ state.qd)
    f_star = np.atleast_1d(np.asarray(task.f_star, dtype=float))
    if f_star.shape[0] != jac.shape[0]:
        raise ValueError("contact force target must have one entry per contact row")
    return jac, bias, f_star


def _split_hierarchy(input: HierarchyInput):
    """(force task or None, motion tasks, postural task or None) plus rows."""
    tasks = input.tasks
    force = tasks[0] if tasks and isinstance(tasks[0], RigidForceTask) else None
    postural = tasks[-1] if tasks and isinstance(tasks[-1], PosturalTask) else None
    start = 1 if force is not None else 0
    stop = len(tasks) - 1 if postural is not None else len(tasks)
    motions = tasks[start:stop]
    if any(not isinstance(t, MotionTask) for t in motions):
        raise TypeError("middle hierarchy levels must be motion tasks")
    return force, motions, postural


def _kinematics(input: HierarchyInput):
    kin = compute_world_kinematics(input.model, input.state.q)
    motion = compute_body_motion(input.model, input.state.q, input.state.qd)
    return kin, motion


def _diag(name: str, info: PinvInfo, projector: np.ndarray) -> LevelDiagnostics:
    return LevelDiagnostics(
        name=name,
        sigma_max=info.sigma_max,
        sigma_min_retained=info.sigma_min_retained,
        rank=info.rank,
        projector_rank=int(round(float(np.trace(projector)))),
    )


# ---------------------------------------------------------------------------
# single-task weighted law (cross-check reference)


def single_task_control(input: HierarchyInput, tau0: np.ndarray) -> ControlOutput:
    """Weighted single-task law with a free joint-torque term tau0:

        tau = M J+_W (xdd* - Jdot qd + J M^-1 h) + M N^W M^-1 tau0

    With W = M^-1 this is the operational-space law; with W = identity it is
    the inverse-kinematics form. Reference implementation used to cross-check
    the hierarchical controllers on one-level stacks.
    """
    t0 = time.perf_counter()
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is not None or postural is not None or len(motions) != 1:
        raise ValueError("single_task_control expects exactly one motion task")
    kin, motion = _kinematics(input)
    rows = _resolve_motion(model, state, motions[0], kin, motion)

    m = dynamics.crba(model, state.q)
    h = dynamics.nonlinear_effects(model, state.q, state.qd)
    factor = cho_factor(0.5 * (m + m.T), check_finite=False)
    m_inv_h = cho_solve(factor, h, check_finite=False)

    w = input.weight.resolve(m)
    cfg = input.pinv_cfg
    pinv, info = weighted_pinv(rows.jac, w, cfg.damping, cfg.sigma_min, return_info=True)
    proj = weighted_null_projector(rows.jac, w, cfg.sigma_min)

    qdd_task = pinv @ (rows.xdd_star - rows.bias + rows.jac @ m_inv_h)
    tau = m @ qdd_task + m @ (proj @ cho_solve(factor, np.asarray(tau0, float), check_finite=False))
    return ControlOutput(
        tau=tau,
        qdd_levels=(qdd_task,),
        diagnostics=(_diag(rows.name, info, proj),),
        eval_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# weighted-pseudoinverse recursion (UF)


def uf_control(input: HierarchyInput) -> ControlOutput:
    """Prioritized control by null-space projection of per-task solutions.

    Backward recursion from the highest-priority task:

        qdd_i = qdd_{i+1} + N_i J_i+_W (xdd_i* - Jdot_i qd)

    with N_i the W-weighted projector onto the null space of all
    higher-priority tasks. Solutions are computed independently and then
    projected, which is sound but not optimal. Torque is assembled by
    inverse dynamics: tau = M qdd_1 + h, evaluated with one RNEA pass.
    """
    t0 = time.perf_counter()
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is not None:
        raise ValueError("uf_control does not take rigid force tasks (see uf_hybrid_control)")
    kin, motion = _kinematics(input)
    cfg = input.pinv_cfg
    w = input.weight.resolve(dynamics.crba(model, state.q) if input.weight.kind == "mass_inverse" else None)

    n = model.dof_count
    proj = np.eye(n)
    qdd = np.zeros(n)
    levels, diags = [], []
    stack = [_resolve_motion(model, state, t, kin, motion) for t in motions]
    if postural is not None:
        stack.append(_resolve_postural(model, state, postural))
    for rows in stack:
        pinv, info = weighted_pinv(rows.jac, w, cfg.damping, cfg.sigma_min, return_info=True)
        qdd = qdd + proj @ (pinv @ (rows.xdd_star - rows.bias))
        proj = recursive_projector_update(proj, rows.jac, w, cfg.sigma_min)
        levels.append(qdd.copy())
        diags.append(_diag(rows.name, info, proj))
    tau = dynamics.rnea(model, state.q, state.qd, qdd)
    return ControlOutput(tau, tuple(levels), tuple(diags), time.perf_counter() - t0)


def uf_hybrid_control(input: HierarchyInput) -> ControlOutput:
    """Weighted-pseudoinverse recursion with a rigid-contact force task.

    Two-task form (one motion task, one force task, no postural level):

        tau = M J+_W (xdd* - Jdot qd) + h - M N^W M^-1 Jc^T f*

    i.e. the contact feedforward acts in the null space of the tracking
    task. For richer hierarchies (several motion tasks plus a postural
    level) the contact instead initializes the recursion as a
    highest-priority hold level, lower tasks are resolved inside its null
    space, and the feedforward -Jc^T f* is applied unprojected, mirroring
    how the rigid-contact torque splits in the other frameworks.
    """
    t0 = time.perf_counter()
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is None:
        raise ValueError("uf_hybrid_control needs a rigid force task at top priority")
    kin, motion = _kinematics(input)
    cfg = input.pinv_cfg
    j_c, bias_c, f_star = _resolve_contact(model, state, force, kin, motion)

    if postural is None and len(motions) == 1:
        # two-task law, null-space force transmission
        m = dynamics.crba(model, state.q)
        factor = cho_factor(0.5 * (m + m.T), check_finite=False)
        w = input.weight.resolve(m)
        rows = _resolve_motion(model, state, motions[0], kin, motion)
        pinv, info = weighted_pinv(rows.jac, w, cfg.damping, cfg.sigma_min, return_info=True)
        proj = weighted_null_projector(rows.jac, w, cfg.sigma_min)
        qdd_track = pinv @ (rows.xdd_star - rows.bias)
        h = dynamics.nonlinear_effects(model, state.q, state.qd)
        tau = (
            m @ qdd_track
            + h
            - m @ (proj @ cho_solve(factor, j_c.T @ f_star, check_finite=False))
        )
        return ControlOutput(
            tau,
            (qdd_track,),
            (_diag(rows.name, info, proj),),
            time.perf_counter() - t0,
        )

    # general hierarchy: contact-hold level initializes the recursion
    w = input.weight.resolve(dynamics.crba(model, state.q) if input.weight.kind == "mass_inverse" else None)
    n = model.dof_count
    proj = np.eye(n)
    qdd = np.zeros(n)
    levels, diags = [], []
    pinv_c, info = weighted_pinv(j_c, w, cfg.damping, cfg.sigma_min, return_info=True)
    qdd = pinv_c @ (-bias_c)
    proj = recursive_projector_update(proj, j_c, w, cfg.sigma_min)
    levels.append(qdd.copy())
    diags.append(_diag(force.name, info, proj))
    stack = [_resolve_motion(model, state, t, kin, motion) for t in motions]
    if postural is not None:
        stack.append(_resolve_postural(model, state, postural))
    for rows in stack:
        pinv, info = weighted_pinv(rows.jac, w, cfg.damping, cfg.sigma_min, return_info=True)
        qdd = qdd + proj @ (pinv @ (rows.xdd_star - rows.bias))
        proj = recursive_projector_update(proj, rows.jac, w, cfg.sigma_min)
        levels.append(qdd.copy())
        diags.append(_diag(rows.name, info, proj))
    tau = dynamics.rnea(model, state.q, state.qd, qdd) - j_c.T @ f_star
    return ControlOutput(tau, tuple(levels), tuple(diags), time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# operational-space cascade (WBCF)


def wbcf_control(input: HierarchyInput) -> ControlOutput:
    """Prioritized operational-space control.

    Per level, with P the dynamically-consistent null-space accumulator:

        J_p = J_i P
        Lambda_p = (J_p M^-1 J_p^T)^+
        F_p = Lambda_p (xdd_i* - Jdot_i qd + J_i M^-1 (h - tau_so_far))
        tau += J_p^T F_p
        P -= J_p+_{M^-1} J_p

    The mass matrix and its inverse are computed explicitly; each level of
    the hierarchy is re-optimized inside the null space of the levels above,
    so the cascade is optimal.
    """
    t0 = time.perf_counter()
    out = _wbcf_core(input, omega_f=None)
    return ControlOutput(out.tau, out.qdd_levels, out.diagnostics, time.perf_counter() - t0, out.level_data)


def wbcf_hybrid_control(input: HierarchyInput, omega_f: np.ndarray | None = None) -> ControlOutput:
    """Operational-space cascade with a force/motion split on the contact.

    On the contact level the operational force is F_p = Of fc + Lambda_p
    (Om xdd* - Jdot qd + J M^-1 (h - tau_so_far)) with Of + Om = I diagonal
    0/1 selections; fc is the commanded operational force, i.e. the negated
    desired reaction f_star. Default omega_f is the identity (pure force
    level, motion rows hold the contact kinematics).
    """
    t0 = time.perf_counter()
    force = input.tasks[0] if input.tasks and isinstance(input.tasks[0], RigidForceTask) else None
    if force is None:
        raise ValueError("wbcf_hybrid_control needs a rigid force task at top priority")
    if omega_f is None:
        omega_f = np.eye(force.dim)
    omega_f = np.atleast_2d(np.asarray(omega_f, dtype=float))
    d = np.diag(omega_f)
    if not (np.allclose(omega_f, np.diag(d)) and np.all((d == 0.0) | (d == 1.0))):
        raise ValueError("omega_f must be a diagonal 0/1 selection")
    out = _wbcf_core(input, omega_f=omega_f)
    return ControlOutput(out.tau, out.qdd_levels, out.diagnostics, time.perf_counter() - t0, out.level_data)


def _wbcf_core(input: HierarchyInput, omega_f: np.ndarray | None) -> ControlOutput:
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is not None and omega_f is None:
        raise ValueError("wbcf_control does not take rigid force tasks (see wbcf_hybrid_control)")
    kin, motion = _kinematics(input)
    cfg = input.pinv_cfg
    n = model.dof_count

    m = dynamics.crba(model, state.q)
    m = 0.5 * (m + m.T)
    chol_l = cholesky(m, lower=True, check_finite=False)
    m_inv = cho_solve((chol_l, True), np.eye(n), check_finite=False)
    h = dynamics.nonlinear_effects(model, state.q, state.qd)

    levels: list[tuple[np.ndarray, np.ndarray, np.ndarray, str, np.ndarray | None, np.ndarray | None]] = []
    if force is not None:
        j_c, bias_c, f_star = _resolve_contact(model, state, force, kin, motion)
        levels.append((j_c, bias_c, np.zeros(j_c.shape[0]), force.name, -f_star, omega_f))
    for t in motions:
        rows = _resolve_motion(model, state, t, kin, motion)
        levels.append((rows.jac, rows.bias, rows.xdd_star, rows.name, None, None))
    if postural is not None:
        rows = _resolve_postural(model, state, postural)
        levels.append((rows.jac, rows.bias, rows.xdd_star, rows.name, None, None))

    # One SVD of the mass-scaled prioritized Jacobian per level drives three
    # filters: the damped task-space mass matrix Lambda = (Gram + damping^2)^-1
    # on the retained subspace (damping therefore acts on the same
    # Jacobian-singular-value scale as in the other controllers), the torque
    # map J_p^T Lambda, and the truncated dynamically-consistent pseudoinverse
    # for the projector recursion. The force-channel torque is absorbed by
    # the contact reaction, so lower levels must not compensate it; only the
    # motion components enter the per-level compensation sum.
    w_factor = solve_triangular(chol_l, np.eye(n), lower=True, trans="T", check_finite=False)
    proj = np.eye(n)
    tau_motion = np.zeros(n)
    tau_ff = np.zeros(n)
    qdd_levels, diags, level_data = [], [], []
    for jac, bias, xdd_star, name, f_cmd, of in levels:
        j_p = jac @ proj
        u, s, vt = np.linalg.svd(j_p @ w_factor, full_matrices=False)
        floor = 100.0 * np.finfo(float).eps * (s[0] if s.size else 0.0)
        keep = s > max(cfg.sigma_min, floor)
        u_k, s_k, vt_k = u[:, keep], s[keep], vt[keep]
        info = PinvInfo(
            sigma_max=float(s[0]) if s.size else 0.0,
            sigma_min_retained=float(s_k[-1]) if s_k.size else 0.0,
            rank=int(keep.sum()),
        )
        # damping applies to the task-error feedback; the nonlinear-term and
        # accumulated-torque compensation goes through the truncated inverse,
        # otherwise the damping deficit turns gravity into a constant bias
        # on the open-loop contact directions
        lam = (u_k / (s_k**2 + cfg.damping**2)) @ u_k.T
        lam_exact = (u_k / s_k**2) @ u_k.T
        jdc_trunc = w_factor @ (vt_k.T / s_k) @ u_k.T
        compensation = lam_exact @ (jac @ (m_inv @ (h - tau_motion)))
        if f_cmd is not None:
            om = np.eye(len(f_cmd)) - of
            f_p = lam @ (om @ xdd_star - bias) + compensation
            tau_ff = tau_ff + j_p.T @ (of @ f_cmd)
            f_total = of @ f_cmd + f_p
        else:
            f_p = lam @ (xdd_star - bias) + compensation
            f_total = f_p
        tau_motion = tau_motion + j_p.T @ f_p
        proj = proj - jdc_trunc @ j_p
        qdd_levels.append(m_inv @ (tau_motion - h))
        diags.append(_diag(name, info, proj))
        level_data.append(WBCFLevelData(j_p=j_p, lambda_p=lam, f_p=f_total))
    tau = tau_motion + tau_ff
    return ControlOutput(tau, tuple(qdd_levels), tuple(diags), 0.0, tuple(level_data))


# ---------------------------------------------------------------------------
# inverse kinematics + inverse dynamics (TSID)


def tsid_control(input: HierarchyInput) -> ControlOutput:
    """Prioritized control by lexicographic acceleration resolution.

    Kinematic recursion with orthogonal projectors:

        qdd_i = qdd_{i+1} + (J_i N_i)^+ (xdd_i* - Jdot_i qd - J_i qdd_{i+1})
        N_{i-1} = N_i - (J_i N_i)^+ (J_i N_i)

    followed by posture resolution in the remaining null space and a single
    inverse-dynamics pass: tau = rnea(q, qd, qdd_1 + N_0 qdd_p*). The mass
    matrix is never formed; every level re-optimizes the residual task error
    inside the null space of the levels above, so the stack is optimal.
    """
    t0 = time.perf_counter()
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is not None:
        raise ValueError("tsid_control does not take rigid force tasks (see tsid_force_control)")
    kin, motion = _kinematics(input)
    qdd, levels, diags = _tsid_recursion(input, None, motions, postural, kin, motion)
    tau = dynamics.rnea(model, state.q, state.qd, qdd)
    return ControlOutput(tau, tuple(levels), tuple(diags), time.perf_counter() - t0)


def tsid_force_control(input: HierarchyInput) -> ControlOutput:
    """TSID with a rigid-contact force task at the highest priority.

    The contact level initializes the recursion (holonomic contact:
    desired contact acceleration zero), lower-priority motion tasks are
    resolved in the contact null space, and the torque is assembled as
    tau = rnea(q, qd, qdd) - Jc^T f_star. Kinematics and dynamics stay
    decoupled; no mass matrix is formed.
    """
    t0 = time.perf_counter()
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is None:
        raise ValueError("tsid_force_control needs a rigid force task at top priority")
    kin, motion = _kinematics(input)
    qdd, levels, diags = _tsid_recursion(input, force, motions, postural, kin, motion)
    j_c, _, f_star = _resolve_contact(model, state, force, kin, motion)
    tau = dynamics.rnea(model, state.q, state.qd, qdd) - j_c.T @ f_star
    return ControlOutput(tau, tuple(levels), tuple(diags), time.perf_counter() - t0)


def _tsid_recursion(input, force, motions, postural, kin, motion):
    model, state = input.model, input.state
    cfg = input.pinv_cfg
    n = model.dof_count
    proj = np.eye(n)
    qdd = np.zeros(n)
    levels, diags = [], []

    stack: list[_TaskRows] = []
    if force is not None:
        j_c, bias_c, _ = _resolve_contact(model, state, force, kin, motion)
        stack.append(_TaskRows(j_c, bias_c, np.zeros(j_c.shape[0]), force.name))
    stack.extend(_resolve_motion(model, state, t, kin, motion) for t in motions)

    for rows in stack:
        jn = rows.jac @ proj
        pinv, info = damped_pinv(jn, cfg.damping, cfg.sigma_min, return_info=True)
        qdd = qdd + pinv @ (rows.xdd_star - rows.bias - rows.jac @ qdd)
        proj = recursive_projector_update(proj, rows.jac, None, cfg.sigma_min)
        levels.append(qdd.copy())
        diags.append(_diag(rows.name, info, proj))

    if postural is not None:
        rows = _resolve_postural(model, state, postural)
        qdd = qdd + proj @ rows.xdd_star
        levels.append(qdd.copy())
        diags.append(
            LevelDiagnostics(
                name=rows.name,
                sigma_max=1.0,
                sigma_min_retained=1.0,
                rank=int(round(float(np.trace(proj)))),
                projector_rank=0,
            )
        )
    return qdd, levels, diags


def tsid_control_general(input: HierarchyInput, weight: WeightSpec | None = None) -> ControlOutput:
    """Unsimplified form of the lexicographic recursion with a free weight.

    The postural level runs through the recursion as a J = I task and the
    per-level increments are N_i (J_i N_i)^+_W (...). With a postural level
    present the resulting torque is independent of the weight; the identity
    weight reduces this to tsid_control. Kept for cross-checks.
    """
    t0 = time.perf_counter()
    model, state = input.model, input.state
    force, motions, postural = _split_hierarchy(input)
    if force is not None:
        raise ValueError("general form does not take force tasks")
    kin, motion = _kinematics(input)
    cfg = input.pinv_cfg
    w = (weight or WeightSpec()).resolve(None)

    n = model.dof_count
    proj = np.eye(n)
    qdd = np.zeros(n)
    levels, diags = [], []
    stack = [_resolve_motion(model, state, t, kin, motion) for t in motions]
    if postural is not None:
        stack.append(_resolve_postural(model, state, postural))
    for rows in stack:
        jn = rows.jac @ proj
        pinv, info = weighted_pinv(jn, w, cfg.damping, cfg.sigma_min, return_info=True)
        qdd = qdd + proj @ (pinv @ (rows.xdd_star - rows.bias - rows.jac @ qdd))
        proj = recursive_projector_update(proj, rows.jac, w, cfg.sigma_min)
        levels.append(qdd.copy())
        diags.append(_diag(rows.name, info, proj))
    tau = dynamics.rnea(model, state.q, state.qd, qdd)
    return ControlOutput(tau, tuple(levels), tuple(diags), time.perf_counter() - t0)


def tsid_rigid_force_single(
    model: RobotModel,
    state: RobotState,
    contact_body: int,
    contact_point: np.ndarray,
    f_star: np.ndarray,
    qdd0: np.ndarray,
    pinv_cfg: PinvConfig = PinvConfig(),
) -> np.ndarray:
    """Single rigid-contact force law: tau = M (Jc^+ b + Nc qdd0) + h - Jc^T f*.

    b = -Jdot_c qd (holonomic, time-invariant contact). qdd0 parameterizes
    the redundancy inside the contact null space; it does not change the
    realized contact force. Assembled with one RNEA pass. A rank-deficient
    contact Jacobian is reported and handled with a damped fallback.
    """
    kin = compute_world_kinematics(model, state.q)
    motion = compute_body_motion(model, state.q, state.qd)
    j_c = point_jacobian(model, state.q, contact_body, contact_point, kin)
    b = -jdot_qdot(model, state.q, state.qd, contact_body, contact_point, motion)
    f_star = np.atleast_1d(np.asarray(f_star, dtype=float))

    pinv, info = damped_pinv(j_c, pinv_cfg.damping, pinv_cfg.sigma_min, return_info=True)
    if info.rank < j_c.shape[0]:
        fallback = pinv_cfg.damping if pinv_cfg.damping > 0.0 else 0.02
        warnings.warn(
            f"contact Jacobian rank {info.rank} < {j_c.shape[0]}; damped fallback "
            f"(damping={fallback})",
            RuntimeWarning,
            stacklevel=2,
        )
        pinv = damped_pinv(j_c, fallback)
    proj = recursive_projector_update(np.eye(model.dof_count), j_c, None, pinv_cfg.sigma_min)
    qdd = pinv @ b + proj @ np.asarray(qdd0, dtype=float)
    return dynamics.rnea(model, state.q, state.qd, qdd) - j_c.T @ f_star


# ---------------------------------------------------------------------------
# dispatch

CONTROLLER_NAMES = ("tsid", "wbcf", "uf")


def run_controller(name: str, input: HierarchyInput) -> ControlOutput:
    """Evaluate one controller by name, routing force hierarchies."""
    has_force = bool(input.tasks) and isinstance(input.tasks[0], RigidForceTask)
    if name == "tsid":
        return tsid_force_control(input) if has_force else tsid_control(input)
    if name == "wbcf":
        return wbcf_hybrid_control(input) if has_force else wbcf_control(input)
    if name == "uf":
        return uf_hybrid_control(input) if has_force else uf_control(input)
    raise ValueError(f"unknown controller {name!r}; expected one of {CONTROLLER_NAMES}")
