import numpy as np
import pytest

from torquestack.model import parse_robot

PENDULUM = """
robot pendulum dof 1
link 0 parent -1 joint revolute axis 0 1 0 origin 0 0 0 rpy 0 0 0 mass 2.0 com 0 0 -0.7 inertia 0 0 0 0 0 0
"""

# two-link planar chain swinging in the x-z plane, both joints about +y,
# matched by the symbolic oracle in test_dynamics
TWO_LINK = """
robot twolink dof 2
link 0 parent -1 joint revolute axis 0 1 0 origin 0 0 0 rpy 0 0 0 mass 1.5 com 0 0 -0.4 inertia 0.02 0.03 0.02 0 0 0
link 1 parent 0 joint revolute axis 0 1 0 origin 0 0 -0.8 rpy 0 0 0 mass 0.9 com 0 0 -0.25 inertia 0.01 0.015 0.01 0 0 0
"""


def box_inertia(mass, dx, dy, dz):
    return (
        mass * (dy * dy + dz * dz) / 12.0,
        mass * (dx * dx + dz * dz) / 12.0,
        mass * (dx * dx + dy * dy) / 12.0,
    )


def random_chain_text(rng, n, prismatic_prob=0.0, fixed_prob=0.0, name="rand"):
    """Random serial kinematic tree with box-inertia links; always parseable."""
    lines = []
    dof = 0
    records = []
    for i in range(n):
        r = rng.random()
        if r < prismatic_prob:
            kind = "prismatic"
        elif r < prismatic_prob + fixed_prob and i > 0:
            kind = "fixed"
        else:
            kind = "revolute"
        if kind != "fixed":
            dof += 1
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        trans = rng.uniform(0.1, 0.35, size=3) * rng.choice([-1.0, 1.0], size=3)
        rpy = rng.uniform(-0.4, 0.4, size=3)
        mass = rng.uniform(0.4, 3.0)
        com = rng.uniform(-0.1, 0.1, size=3)
        ixx, iyy, izz = box_inertia(mass, *rng.uniform(0.05, 0.4, size=3))
        records.append(
            f"link {i} parent {i - 1} joint {kind} "
            f"axis {axis[0]:.17g} {axis[1]:.17g} {axis[2]:.17g} "
            f"origin {trans[0]:.17g} {trans[1]:.17g} {trans[2]:.17g} "
            f"rpy {rpy[0]:.17g} {rpy[1]:.17g} {rpy[2]:.17g} "
            f"mass {mass:.17g} com {com[0]:.17g} {com[1]:.17g} {com[2]:.17g} "
            f"inertia {ixx:.17g} {iyy:.17g} {izz:.17g} 0 0 0"
        )
    return f"robot {name} dof {dof}\n" + "\n".join(records) + "\n"


def random_chain(rng, n, **kwargs):
    return parse_robot(random_chain_text(rng, n, **kwargs))


def random_hierarchy(rng, model, n_motion=2, with_posture=True, force=False):
    """Random task stack on a model plus matching oracle levels.

    Returns (state, tasks, levels) where levels are (jacobian, bias, target)
    triples in priority order, postural last, computed independently of the
    controllers' internal resolution.
    """
    from torquestack.lexqp import LexLevel
    from torquestack.model import (
        compute_body_motion,
        compute_world_kinematics,
        jdot_qdot,
        point_jacobian,
    )
    from torquestack.model import RobotState
    from torquestack.tasks import MotionTask, PosturalTask, RigidForceTask

    n = model.dof_count
    q = 0.5 * rng.standard_normal(n)
    qd = 0.4 * rng.standard_normal(n)
    state = RobotState(q, qd)
    kin = compute_world_kinematics(model, q)
    motion = compute_body_motion(model, q, qd)

    tasks = []
    levels = []
    priority = n_motion + 2
    if force:
        body = model.n_links - 1
        point = np.array([0.15, 0.05, -0.05])
        f_star = 5.0 * rng.standard_normal(3)
        tasks.append(RigidForceTask(body=body, point=point, f_star=f_star, priority=priority))
        jac = point_jacobian(model, q, body, point, kin)
        bias = jdot_qdot(model, q, qd, body, point, motion)
        levels.append(LexLevel(jac, -bias))
        priority -= 1
    for k in range(n_motion):
        body = int(rng.integers(max(1, model.n_links - 4), model.n_links))
        point = rng.uniform(-0.15, 0.15, 3)
        dim = int(rng.integers(1, 4))
        selection = tuple(sorted(rng.choice(3, size=dim, replace=False).tolist())) if dim < 3 else None
        xdd = rng.standard_normal(dim if dim < 3 else 3)
        tasks.append(MotionTask(body=body, point=point, priority=priority,
                                selection=selection, xdd_star=xdd, name=f"m{k}"))
        jac = point_jacobian(model, q, body, point, kin)
        bias = jdot_qdot(model, q, qd, body, point, motion)
        if selection is not None:
            jac = jac[list(selection)]
            bias = bias[list(selection)]
        levels.append(LexLevel(jac, xdd - bias))
        priority -= 1
    if with_posture:
        qdd_p = rng.standard_normal(n)
        tasks.append(PosturalTask(q_p=np.zeros(n), qdd_star=qdd_p, priority=0))
        levels.append(LexLevel(np.eye(n), qdd_p))
    return state, tuple(tasks), levels


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def pendulum():
    return parse_robot(PENDULUM)


@pytest.fixture
def two_link():
    return parse_robot(TWO_LINK)
