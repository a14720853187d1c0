"""Task definitions, reference generation and tracking metrics.

Force conventions: ``f_star`` on force tasks is the desired contact force
exerted by the environment on the robot (the constraint-force convention of
the equations of motion). The force applied by the robot to the environment
is its negation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np
from scipy.linalg import expm


def _gain_matrix(gain, dim: int) -> np.ndarray:
    g = np.asarray(gain, dtype=float)
    if g.ndim == 0:
        g = float(g) * np.eye(dim)
    if g.shape != (dim, dim):
        raise ValueError(f"gain must be scalar or {dim}x{dim}")
    if not np.allclose(g, g.T, atol=1e-10):
        raise ValueError("gain matrix must be symmetric")
    if np.any(np.linalg.eigvalsh(g) <= 0.0):
        raise ValueError("gain matrix must be positive definite")
    return g


@dataclass(frozen=True)
class PDGains:
    """Proportional (1/s^2) and derivative (1/s) feedback gains."""

    kp: float | np.ndarray = 10.0
    kd: float | np.ndarray = 5.0

    def matrices(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        return _gain_matrix(self.kp, dim), _gain_matrix(self.kd, dim)


@dataclass(frozen=True)
class RefSample:
    """Position / velocity / acceleration reference at one instant."""

    x: np.ndarray
    xd: np.ndarray
    xdd: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xd = np.atleast_1d(np.asarray(self.xd, dtype=float))
        xdd = np.atleast_1d(np.asarray(self.xdd, dtype=float))
        if not (x.shape == xd.shape == xdd.shape):
            raise ValueError("reference components must have equal lengths")
        if not all(np.all(np.isfinite(v)) for v in (x, xd, xdd)):
            raise ValueError("non-finite reference")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xd", xd)
        object.__setattr__(self, "xdd", xdd)

    @staticmethod
    def hold(x: np.ndarray) -> "RefSample":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return RefSample(x, np.zeros_like(x), np.zeros_like(x))


def pd_reference(gains: PDGains, ref: RefSample, x, xd) -> np.ndarray:
    """Desired task acceleration: xdd_r + Kd (xd_r - xd) + Kp (x_r - x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xd = np.atleast_1d(np.asarray(xd, dtype=float))
    if x.shape != ref.x.shape or xd.shape != ref.x.shape:
        raise ValueError("dimension mismatch between state and reference")
    kp, kd = gains.matrices(x.shape[0])
    return ref.xdd + kd @ (ref.xd - xd) + kp @ (ref.x - x)


def postural_reference(kp, kd, q_p, q, qd) -> np.ndarray:
    """Joint-space stabilization acceleration: Kp (q_p - q) - Kd qd."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    q_p = np.asarray(q_p, dtype=float)
    if q_p.shape != q.shape or qd.shape != q.shape:
        raise ValueError("dimension mismatch in postural reference")
    n = q.shape[0]
    return _gain_matrix(kp, n) @ (q_p - q) - _gain_matrix(kd, n) @ qd


# ---------------------------------------------------------------------------
# approximately minimum-jerk reference generation


@dataclass(frozen=True)
class MinJerkState:
    """State of a critically damped third-order reference filter.

    Per axis the filter is a triple pole at -6/T driven by the desired
    position, which yields smooth position / velocity / acceleration
    references whose 2 percent settling time is close to the trajectory
    time T. The discretization is exact (zero-order hold), precomputed for
    the step size used.
    """

    y: np.ndarray  # (3, m): position, velocity, acceleration rows
    trajectory_time: float = 1.0
    dt: float | None = None
    _ad: np.ndarray | None = field(default=None, repr=False)
    _bd: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.trajectory_time <= 0.0:
            raise ValueError("trajectory time must be positive")
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if y.shape[0] != 3:
            raise ValueError("filter state must have three rows")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite filter state")
        object.__setattr__(self, "y", y)

    @property
    def ref(self) -> RefSample:
        return RefSample(self.y[0].copy(), self.y[1].copy(), self.y[2].copy())


def make_minjerk(x0, trajectory_time: float = 1.0) -> MinJerkState:
    """Filter state at rest on x0; constant input x0 is a fixed point."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y = np.vstack([x0, np.zeros_like(x0), np.zeros_like(x0)])
    return MinJerkState(y=y, trajectory_time=trajectory_time)


def _discretize(trajectory_time: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    w = 6.0 / trajectory_time
    a = np.array([
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-w**3, -3.0 * w**2, -3.0 * w],
    ])
    b = np.array([0.0, 0.0, w**3])
    aug = np.zeros((4, 4))
    aug[:3, :3] = a
    aug[:3, 3] = b
    phi = expm(aug * dt)
    return phi[:3, :3], phi[:3, 3]


def minjerk_step(state: MinJerkState, x_d, dt: float) -> tuple[MinJerkState, RefSample]:
    """Advance the reference filter one step toward desired position x_d."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if dt > state.trajectory_time / 10.0:
        raise ValueError("dt must not exceed trajectory_time / 10")
    x_d = np.atleast_1d(np.asarray(x_d, dtype=float))
    if x_d.shape[0] != state.y.shape[1]:
        raise ValueError("desired position has wrong dimension")
    if not np.all(np.isfinite(x_d)):
        raise ValueError("non-finite desired position")
    if state.dt == dt and state._ad is not None:
        ad, bd = state._ad, state._bd
    else:
        ad, bd = _discretize(state.trajectory_time, dt)
    y_next = ad @ state.y + np.outer(bd, x_d)
    new_state = replace(state, y=y_next, dt=dt, _ad=ad, _bd=bd)
    return new_state, new_state.ref


def rmse(series: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Root mean square error: sqrt(mean over samples of |x - x_r|^2)."""
    if len(series) == 0:
        raise ValueError("empty series")
    total = 0.0
    for x, x_r in series:
        err = np.asarray(x, dtype=float) - np.asarray(x_r, dtype=float)
        total += float(err @ err)
    return float(np.sqrt(total / len(series)))


# ---------------------------------------------------------------------------
# task specifications

AXIS_NAMES = {"x": 0, "y": 1, "z": 2}


def parse_selection(spec: str) -> tuple[int, ...]:
    """Coordinate selection like "x" or "xz" into row indices."""
    try:
        return tuple(AXIS_NAMES[c] for c in spec)
    except KeyError:
        raise ValueError(f"selection may only contain x, y, z: {spec!r}") from None


@dataclass(frozen=True)
class MotionTask:
    """Cartesian position task on a body-fixed point, optionally restricted
    to a subset of world axes via `selection`.

    Exactly one of `ref` (tracked with PD feedback) or `xdd_star` (raw
    desired acceleration) must be set when handed to a controller.
    """

    body: int
    point: np.ndarray
    priority: int
    selection: tuple[int, ...] | None = None
    gains: PDGains = field(default_factory=PDGains)
    ref: RefSample | None = None
    xdd_star: np.ndarray | None = None
    name: str = "motion"

    @property
    def dim(self) -> int:
        return 3 if self.selection is None else len(self.selection)


@dataclass(frozen=True)
class PosturalTask:
    """Joint-space attraction toward posture q_p; always lowest priority."""

    q_p: np.ndarray
    gains: PDGains = field(default_factory=PDGains)
    qdd_star: np.ndarray | None = None
    priority: int = 0
    name: str = "posture"


@dataclass(frozen=True)
class RigidForceTask:
    """Rigid-contact force task: hold the contact and realize f_star.

    f_star is the desired constraint force on the robot (world frame, one
    entry per contact row). Must hold the highest priority in a hierarchy.

    hold_damping adds velocity-level constraint stabilization: the contact
    rows enforce J qdd = -Jdot qd - hold_damping * J qd instead of the pure
    acceleration-level constraint. Zero keeps the pure formulation; closed
    loops over long horizons need a positive value, otherwise the contact
    point integrates drift in the unconstrained tangential directions.
    """

    body: int
    point: np.ndarray
    f_star: np.ndarray
    priority: int
    holonomic: bool = True
    hold_damping: float = 0.0
    name: str = "force"

    @property
    def dim(self) -> int:
        return len(np.atleast_1d(self.f_star))


@dataclass(frozen=True)
class SpringForceTask:
    """Force task against a known linear-spring environment.

    Translated into a motion task before control: realizing reaction f_star
    against a spring of stiffness k_s anchored at x_e means holding
    x = x_e - f_star / k_s.

    The translated task is plain PD position control with no contact
    feedforward, so against environments much stiffer than the PD (k_s >>
    m_eff * kp) the realized force settles well below f_star. Stiff-wall
    force targets belong to RigidForceTask, whose feedforward carries the
    load exactly.
    """

    body: int
    point: np.ndarray
    f_star: np.ndarray
    stiffness: float
    anchor: np.ndarray
    priority: int
    gains: PDGains = field(default_factory=PDGains)
    name: str = "force"

    def to_motion_task(self) -> MotionTask:
        target = np.asarray(self.anchor, dtype=float) - np.asarray(self.f_star, dtype=float) / self.stiffness
        return MotionTask(
            body=self.body,
            point=self.point,
            priority=self.priority,
            gains=self.gains,
            ref=RefSample.hold(target),
            name=self.name,
        )


TaskSpec = Union[MotionTask, PosturalTask, RigidForceTask, SpringForceTask]


def validate_hierarchy(tasks: Sequence[TaskSpec], require_postural: bool = True) -> None:
    """Check ordering rules: strictly decreasing priorities, postural last,
    at most one rigid force task and only at the top."""
    if not tasks:
        raise ValueError("empty task hierarchy")
    priorities = [t.priority for t in tasks]
    if any(p2 >= p1 for p1, p2 in zip(priorities, priorities[1:])):
        raise ValueError("task priorities must be strictly decreasing")
    posturals = [i for i, t in enumerate(tasks) if isinstance(t, PosturalTask)]
    if require_postural and not posturals:
        raise ValueError("hierarchy must include a postural task")
    if posturals and posturals != [len(tasks) - 1]:
        raise ValueError("postural task must be last and unique")
    forces = [i for i, t in enumerate(tasks) if isinstance(t, RigidForceTask)]
    if len(forces) > 1:
        raise ValueError("at most one rigid force task is allowed")
    if forces and forces != [0]:
        raise ValueError("the rigid force task must have the highest priority")
