"""Kinematic-tree robot descriptions: parsing, forward kinematics, Jacobians.

A robot is an ordered list of links, each attached to its parent by a
revolute, prismatic or fixed joint. Link i's frame coincides with joint i's
frame: the joint origin transform places the joint frame relative to the
parent link frame, and the joint motion (rotation about / translation along
`axis`, expressed in the joint's own frame) is applied after the origin.

All public quantities are world frame. Point Jacobians are 3xn; frame
Jacobians are 6xn with linear rows stacked above angular rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spatial import (
    crm,
    matrix_to_rpy,
    motion_xform,
    rotation_about_axis,
    rpy_to_matrix,
)

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"
JOINT_KINDS = (REVOLUTE, PRISMATIC, FIXED)

ROOT_PARENT = -1


class RobotParseError(ValueError):
    """Malformed robot description; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class FramePlacement:
    """Rigid transform: world (or parent) rotation and translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def validate(self) -> None:
        r = self.rotation
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-10):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise ValueError("rotation determinant is not +1")

    def transform_point(self, point: np.ndarray) -> np.ndarray:
        return self.rotation @ point + self.translation


@dataclass(frozen=True)
class JointDef:
    kind: str
    axis: np.ndarray
    parent: int
    origin: FramePlacement

    def validate(self, index: int) -> None:
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"joint {index}: unknown kind {self.kind!r}")
        if self.kind != FIXED and abs(np.linalg.norm(self.axis) - 1.0) > 1e-12:
            raise ValueError(f"joint {index}: axis must be a unit vector")
        if self.parent != ROOT_PARENT and self.parent >= index:
            raise ValueError(f"joint {index}: non-topological order (parent {self.parent})")


@dataclass(frozen=True)
class LinkInertia:
    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def validate(self, index: int) -> None:
        if self.mass < 0.0:
            raise ValueError(f"link {index}: negative mass")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError(f"link {index}: inertia not symmetric")
        eig = np.linalg.eigvalsh(self.inertia)
        if eig[0] < -1e-12:
            raise ValueError(f"link {index}: inertia not positive semidefinite")
        a, b, c = np.maximum(eig, 0.0)
        if a + b < c - 1e-9:
            raise ValueError(f"link {index}: principal moments violate triangle inequality")


@dataclass(frozen=True)
class RobotModel:
    """Immutable kinematic tree; safe to share across threads."""

    name: str
    joints: tuple[JointDef, ...]
    links: tuple[LinkInertia, ...]
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        if len(self.joints) != len(self.links):
            raise ValueError("joints/links lists differ in length")
        roots = [i for i, j in enumerate(self.joints) if j.parent == ROOT_PARENT]
        if len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}")
        for i, j in enumerate(self.joints):
            j.validate(i)
        for i, l in enumerate(self.links):
            l.validate(i)
        # dof index per joint, -1 for fixed joints
        dof_index = np.full(len(self.joints), -1, dtype=int)
        next_dof = 0
        for i, j in enumerate(self.joints):
            if j.kind != FIXED:
                dof_index[i] = next_dof
                next_dof += 1
        dof_index.setflags(write=False)
        object.__setattr__(self, "_dof_index", dof_index)
        object.__setattr__(self, "_dof_count", next_dof)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def dof_count(self) -> int:
        return self._dof_count

    def dof_index(self, link: int) -> int:
        return int(self._dof_index[link])

    def ancestors(self, link: int) -> list[int]:
        """Chain of link indices from the root down to `link`, inclusive."""
        chain = []
        i = link
        while i != ROOT_PARENT:
            chain.append(i)
            i = self.joints[i].parent
        chain.reverse()
        return chain


@dataclass(frozen=True)
class RobotState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise ValueError("q and qd must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("non-finite state")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)


# ---------------------------------------------------------------------------
# description format


def _floats(tokens: list[str], count: int, what: str, line: int) -> np.ndarray:
    if len(tokens) < count:
        raise RobotParseError(f"expected {count} numbers for {what}", line)
    try:
        return np.array([float(t) for t in tokens[:count]])
    except ValueError as exc:
        raise RobotParseError(f"bad number in {what}: {exc}", line) from None


def _field(tokens: list[str], key: str, line: int) -> int:
    try:
        return tokens.index(key) + 1
    except ValueError:
        raise RobotParseError(f"missing field {key!r}", line) from None


def parse_robot(text: str) -> RobotModel:
    """Parse the line-oriented robot description format.

    Header: ``robot <name> dof <n>``. One ``link`` record per line::

        link <idx> parent <p> joint <kind> axis <x y z>
             origin <x y z rpy <r p y>> mass <m> com <x y z>
             inertia <Ixx Iyy Izz Ixy Ixz Iyz>

    Angles in radians, SI units. ``#`` starts a comment. The root link has
    parent -1; records must appear in topological order (parent before child).
    """
    name = None
    declared_dof = None
    joints: list[JointDef] = []
    links: list[LinkInertia] = []
    gravity = np.array([0.0, 0.0, -9.81])
    seen_ids: set[int] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "robot":
            if len(tokens) < 4 or tokens[2] != "dof":
                raise RobotParseError("header must be 'robot <name> dof <n>'", line_no)
            name = tokens[1]
            try:
                declared_dof = int(tokens[3])
            except ValueError:
                raise RobotParseError("dof count must be an integer", line_no) from None
        elif head == "gravity":
            gravity = _floats(tokens[1:], 3, "gravity", line_no)
        elif head == "link":
            try:
                idx = int(tokens[1])
            except (IndexError, ValueError):
                raise RobotParseError("link index missing or not an integer", line_no) from None
            if idx in seen_ids:
                raise RobotParseError(f"duplicate link name {idx}", line_no)
            if idx != len(joints):
                raise RobotParseError(
                    f"link records must be consecutive (got {idx}, expected {len(joints)})",
                    line_no,
                )
            seen_ids.add(idx)
            try:
                parent = int(tokens[_field(tokens, "parent", line_no)])
                if parent != ROOT_PARENT and parent >= idx:
                    raise RobotParseError("non-topological order", line_no)
                kind = tokens[_field(tokens, "joint", line_no)]
                if kind not in JOINT_KINDS:
                    raise RobotParseError(f"unknown joint kind {kind!r}", line_no)
                axis = _floats(tokens[_field(tokens, "axis", line_no):], 3, "axis", line_no)
                o = _field(tokens, "origin", line_no)
                xyz = _floats(tokens[o:], 3, "origin translation", line_no)
                if tokens[o + 3] != "rpy":
                    raise RobotParseError("origin must read '<x y z> rpy <r p y>'", line_no)
                rpy = _floats(tokens[o + 4:], 3, "origin rpy", line_no)
                mass = float(tokens[_field(tokens, "mass", line_no)])
                com = _floats(tokens[_field(tokens, "com", line_no):], 3, "com", line_no)
                ivals = _floats(tokens[_field(tokens, "inertia", line_no):], 6, "inertia", line_no)
            except RobotParseError:
                raise
            except (ValueError, IndexError) as exc:
                raise RobotParseError(f"malformed link record: {exc}", line_no) from None
            ixx, iyy, izz, ixy, ixz, iyz = ivals
            inertia = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
            if kind != FIXED:
                nrm = np.linalg.norm(axis)
                if abs(nrm - 1.0) > 1e-6:
                    raise RobotParseError("joint axis must have unit norm", line_no)
                axis = axis / nrm
            origin = FramePlacement(rpy_to_matrix(*rpy), xyz)
            joints.append(JointDef(kind, axis, parent, origin))
            links.append(LinkInertia(mass, com, inertia))
        else:
            raise RobotParseError(f"unknown record {head!r}", line_no)

    if name is None:
        raise RobotParseError("missing 'robot' header")
    try:
        model = RobotModel(name, tuple(joints), tuple(links), gravity)
    except ValueError as exc:
        raise RobotParseError(str(exc)) from None
    if declared_dof is not None and declared_dof != model.dof_count:
        raise RobotParseError(
            f"header declares dof {declared_dof} but description has {model.dof_count}"
        )
    return model


def serialize_robot(model: RobotModel) -> str:
    """Canonical text form; parse(serialize(m)) reproduces m."""
    out = [f"robot {model.name} dof {model.dof_count}"]
    g = model.gravity
    out.append(f"gravity {g[0]:.17g} {g[1]:.17g} {g[2]:.17g}")
    for i, (j, l) in enumerate(zip(model.joints, model.links)):
        rpy = matrix_to_rpy(j.origin.rotation)
        t = j.origin.translation
        inert = l.inertia
        fields = [
            f"link {i} parent {j.parent} joint {j.kind}",
            "axis " + " ".join(f"{v:.17g}" for v in j.axis),
            "origin " + " ".join(f"{v:.17g}" for v in t),
            "rpy " + " ".join(f"{v:.17g}" for v in rpy),
            f"mass {l.mass:.17g}",
            "com " + " ".join(f"{v:.17g}" for v in l.com),
            "inertia " + " ".join(
                f"{v:.17g}"
                for v in (inert[0, 0], inert[1, 1], inert[2, 2],
                          inert[0, 1], inert[0, 2], inert[1, 2])
            ),
        ]
        out.append(" ".join(fields))
    return "\n".join(out) + "\n"


def load_robot(path) -> RobotModel:
    """Parse a robot description file; bare names fall back to the shipped
    fixtures (robots/ inside the package)."""
    from pathlib import Path

    p = Path(path)
    if not p.exists():
        candidate = Path(__file__).parent / "robots" / p.name
        if candidate.exists():
            p = candidate
    with open(p, "r", encoding="utf-8") as fh:
        return parse_robot(fh.read())


# ---------------------------------------------------------------------------
# kinematics


@dataclass
class WorldKinematics:
    """Per-link world placements plus joint axes/origins in world frame."""

    rotations: np.ndarray      # (L, 3, 3)
    translations: np.ndarray   # (L, 3)
    axes_world: np.ndarray     # (L, 3), zero rows for fixed joints
    origins_world: np.ndarray  # (L, 3), joint frame origin per link

    def placement(self, link: int) -> FramePlacement:
        return FramePlacement(self.rotations[link], self.translations[link])


def _check_q(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.dof_count,):
        raise ValueError(f"q must have length {model.dof_count}, got {q.shape}")
    return q


def compute_world_kinematics(model: RobotModel, q: np.ndarray) -> WorldKinematics:
    q = _check_q(model, q)
    n_links = model.n_links
    rot = np.empty((n_links, 3, 3))
    trans = np.empty((n_links, 3))
    axes = np.zeros((n_links, 3))
    origins = np.empty((n_links, 3))
    for i, joint in enumerate(model.joints):
        if joint.parent == ROOT_PARENT:
            r_p, p_p = np.eye(3), np.zeros(3)
        else:
            r_p, p_p = rot[joint.parent], trans[joint.parent]
        r_joint = r_p @ joint.origin.rotation
        p_joint = p_p + r_p @ joint.origin.translation
        origins[i] = p_joint
        if joint.kind == REVOLUTE:
            qi = q[model.dof_index(i)]
            rot[i] = r_joint @ rotation_about_axis(joint.axis, qi)
            trans[i] = p_joint
            axes[i] = r_joint @ joint.axis
        elif joint.kind == PRISMATIC:
            qi = q[model.dof_index(i)]
            rot[i] = r_joint
            trans[i] = p_joint + r_joint @ (qi * joint.axis)
            axes[i] = r_joint @ joint.axis
        else:
            rot[i] = r_joint
            trans[i] = p_joint
    return WorldKinematics(rot, trans, axes, origins)


def forward_kinematics(model: RobotModel, q: np.ndarray) -> list[FramePlacement]:
    """World placement of every link frame."""
    kin = compute_world_kinematics(model, q)
    return [kin.placement(i) for i in range(model.n_links)]


def _check_body(model: RobotModel, body: int) -> None:
    if not 0 <= body < model.n_links:
        raise ValueError(f"invalid link index {body}")


def point_jacobian(
    model: RobotModel,
    q: np.ndarray,
    body: int,
    point: np.ndarray,
    kin: WorldKinematics | None = None,
) -> np.ndarray:
    """3xn Jacobian of a body-fixed point (world velocity = J @ qd)."""
    _check_body(model, body)
    if kin is None:
        kin = compute_world_kinematics(model, q)
    point_w = kin.rotations[body] @ np.asarray(point, dtype=float) + kin.translations[body]
    jac = np.zeros((3, model.dof_count))
    for link in model.ancestors(body):
        joint = model.joints[link]
        if joint.kind == FIXED:
            continue
        col = model.dof_index(link)
        if joint.kind == REVOLUTE:
            jac[:, col] = np.cross(kin.axes_world[link], point_w - kin.origins_world[link])
        else:
            jac[:, col] = kin.axes_world[link]
    return jac


def frame_jacobian(
    model: RobotModel,
    q: np.ndarray,
    body: int,
    kin: WorldKinematics | None = None,
) -> np.ndarray:
    """6xn Jacobian of a link frame, linear rows stacked over angular rows."""
    _check_body(model, body)
    if kin is None:
        kin = compute_world_kinematics(model, q)
    jac = np.zeros((6, model.dof_count))
    frame_origin = kin.translations[body]
    for link in model.ancestors(body):
        joint = model.joints[link]
        if joint.kind == FIXED:
            continue
        col = model.dof_index(link)
        if joint.kind == REVOLUTE:
            axis = kin.axes_world[link]
            jac[:3, col] = np.cross(axis, frame_origin - kin.origins_world[link])
            jac[3:, col] = axis
        else:
            jac[:3, col] = kin.axes_world[link]
    return jac


@dataclass
class BodyMotion:
    """Per-link body-frame spatial velocity and zero-qdd bias acceleration."""

    rotations: np.ndarray  # (L, 3, 3) world rotations
    velocity: np.ndarray   # (L, 6) spatial velocity, body coordinates
    bias_acc: np.ndarray   # (L, 6) spatial acceleration at qdd = 0, no gravity


def joint_motion_xforms(model: RobotModel, q: np.ndarray):
    """Per-link Plucker transform (parent coords -> link coords) and motion axis."""
    q = _check_q(model, q)
    xforms = []
    axes = []
    for i, joint in enumerate(model.joints):
        e0 = joint.origin.rotation.T
        r0 = joint.origin.translation
        if joint.kind == REVOLUTE:
            qi = q[model.dof_index(i)]
            ej = rotation_about_axis(joint.axis, qi).T
            x = motion_xform(ej @ e0, r0)
            s = np.concatenate([joint.axis, np.zeros(3)])
        elif joint.kind == PRISMATIC:
            qi = q[model.dof_index(i)]
            x = motion_xform(e0, r0 + joint.origin.rotation @ (qi * joint.axis))
            s = np.concatenate([np.zeros(3), joint.axis])
        else:
            x = motion_xform(e0, r0)
            s = None
        xforms.append(x)
        axes.append(s)
    return xforms, axes


def compute_body_motion(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> BodyMotion:
    qd = np.asarray(qd, dtype=float)
    xforms, axes = joint_motion_xforms(model, q)
    kin = compute_world_kinematics(model, q)
    n_links = model.n_links
    vel = np.zeros((n_links, 6))
    bias = np.zeros((n_links, 6))
    for i, joint in enumerate(model.joints):
        if joint.parent == ROOT_PARENT:
            v_p = np.zeros(6)
            a_p = np.zeros(6)
        else:
            v_p = vel[joint.parent]
            a_p = bias[joint.parent]
        x = xforms[i]
        if joint.kind == FIXED:
            vel[i] = x @ v_p
            bias[i] = x @ a_p
        else:
            vj = axes[i] * qd[model.dof_index(i)]
            vel[i] = x @ v_p + vj
            bias[i] = x @ a_p + crm(vel[i]) @ vj
    return BodyMotion(kin.rotations, vel, bias)


def jdot_qdot(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    body: int,
    point: np.ndarray,
    motion: BodyMotion | None = None,
) -> np.ndarray:
    """Task-space bias acceleration of a body-fixed point at zero qdd.

    Equals d(J)/dt @ qd for the point Jacobian, world frame. Computed by an
    exact velocity-propagation pass, quadratic in qd.
    """
    _check_body(model, body)
    if motion is None:
        motion = compute_body_motion(model, q, qd)
    r = np.asarray(point, dtype=float)
    w = motion.velocity[body, :3]
    v = motion.velocity[body, 3:]
    dw = motion.bias_acc[body, :3]
    dv = motion.bias_acc[body, 3:]
    acc_body = dv + np.cross(dw, r) + np.cross(w, v + np.cross(w, r))
    return motion.rotations[body] @ acc_body


def frame_jdot_qdot(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    body: int,
    motion: BodyMotion | None = None,
) -> np.ndarray:
    """6-vector bias acceleration of a link frame (linear over angular)."""
    _check_body(model, body)
    if motion is None:
        motion = compute_body_motion(model, q, qd)
    linear = jdot_qdot(model, q, qd, body, np.zeros(3), motion)
    angular = motion.rotations[body] @ motion.bias_acc[body, :3]
    return np.concatenate([linear, angular])


# ---------------------------------------------------------------------------
# generated fixtures


def serial_chain_description(n: int, name: str = "chain") -> str:
    """Description text for an n-joint serial arm with alternating axes.

    Link lengths and masses taper toward the tip, roughly arm-like. Useful
    for scaling studies where a family of sizes is needed.
    """
    if n < 1:
        raise ValueError("need at least one joint")
    lines = [f"robot {name}{n} dof {n}"]
    for i in range(n):
        parent = i - 1
        length = 0.35 * (0.97 ** i)
        mass = 2.5 * (0.93 ** i)
        axis = ("0 0 1", "0 1 0")[i % 2]
        # slender-rod inertia about the com, rod along local x
        ixx = 0.002 * mass
        iyy = izz = mass * length * length / 12.0 + 0.002 * mass
        origin = "0 0 0.2" if i == 0 else f"{length:.6g} 0 0"
        lines.append(
            f"link {i} parent {parent} joint revolute axis {axis} "
            f"origin {origin} rpy 0 0 0 mass {mass:.6g} "
            f"com {0.5 * length:.6g} 0 0 "
            f"inertia {ixx:.6g} {iyy:.6g} {izz:.6g} 0 0 0"
        )
    return "\n".join(lines) + "\n"


def make_serial_chain(n: int) -> RobotModel:
    return parse_robot(serial_chain_description(n))
