"""Closed-loop simulation: spring-damper contacts, fixed-step integration,
scenario configuration and execution.

The plant applies contact forces from a linear spring-damper wall model with
regularized Coulomb friction; the controllers never see the plant's contact
state, only their own task references. One scenario step is: advance the
reference generators, evaluate the selected controller (timed), integrate
the rigid-body dynamics with semi-implicit Euler.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controllers import CONTROLLER_NAMES, HierarchyInput, run_controller
from .dynamics import forward_dynamics
from .model import (
    RobotModel,
    RobotState,
    compute_world_kinematics,
    load_robot,
    point_jacobian,
)
from .numlin import PinvConfig, validate_pinv_config
from .tasks import (
    MotionTask,
    PDGains,
    PosturalTask,
    RigidForceTask,
    SpringForceTask,
    make_minjerk,
    minjerk_step,
    parse_selection,
)

_DATA_DIR = Path(__file__).parent


@dataclass(frozen=True)
class SpringContact:
    """Spring-damper wall acting on a body-fixed point.

    The wall is the plane through `anchor` with outward unit `normal`
    (pointing into free space). Penetration depth is (anchor - x) . normal;
    the normal force on the robot is k_s * depth - d * (xd . normal) along
    the normal. In unilateral mode the normal force only pushes. The
    tangential force opposes sliding, viscous up to the friction cone bound
    mu |f_n| (regularized Coulomb).
    """

    body: int
    point: np.ndarray
    anchor: np.ndarray
    normal: np.ndarray
    stiffness: float = 2e5
    damping: float = 1e3
    mu: float = 0.0
    mode: str = "bilateral"
    tangent_damping: float | None = None

    def __post_init__(self):
        if self.stiffness <= 0.0:
            raise ValueError("contact stiffness must be positive")
        if self.damping < 0.0 or self.mu < 0.0:
            raise ValueError("contact damping and friction must be nonnegative")
        if self.mode not in ("bilateral", "unilateral"):
            raise ValueError(f"unknown contact mode {self.mode!r}")
        n = np.asarray(self.normal, dtype=float)
        nrm = np.linalg.norm(n)
        if nrm < 1e-12:
            raise ValueError("contact normal must be nonzero")
        object.__setattr__(self, "normal", n / nrm)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float))


def contact_force(contact: SpringContact, x_c: np.ndarray, xd_c: np.ndarray) -> np.ndarray:
    """Contact force on the robot at world point x_c moving at xd_c."""
    x_c = np.asarray(x_c, dtype=float)
    xd_c = np.asarray(xd_c, dtype=float)
    n = contact.normal
    depth = (contact.anchor - x_c) @ n
    fn = contact.stiffness * depth - contact.damping * (xd_c @ n)
    if contact.mode == "unilateral" and fn < 0.0:
        return np.zeros(3)
    f = fn * n
    if contact.mu > 0.0:
        v_t = xd_c - (xd_c @ n) * n
        speed = np.linalg.norm(v_t)
        if speed > 1e-12:
            d_t = contact.damping if contact.tangent_damping is None else contact.tangent_damping
            mag = min(d_t * speed, contact.mu * abs(fn))
            f = f - mag * (v_t / speed)
    return f


def _contact_wrenches(model, q, qd, contacts):
    """Per-link world wrenches plus the stacked reaction forces."""
    if not contacts:
        return None, np.zeros(0)
    kin = compute_world_kinematics(model, q)
    wrenches: dict[int, np.ndarray] = {}
    forces = []
    for c in contacts:
        r_w = kin.rotations[c.body]
        p_w = r_w @ c.point + kin.translations[c.body]
        jac = point_jacobian(model, q, c.body, c.point, kin)
        f = contact_force(c, p_w, jac @ qd)
        forces.append(f)
        torque = np.cross(p_w - kin.translations[c.body], f)
        w = np.concatenate([f, torque])
        if c.body in wrenches:
            wrenches[c.body] = wrenches[c.body] + w
        else:
            wrenches[c.body] = w
    return wrenches, np.concatenate(forces)


def integrate_step(
    model: RobotModel,
    state: RobotState,
    tau: np.ndarray,
    contacts: tuple[SpringContact, ...] = (),
    dt: float = 1e-3,
) -> RobotState:
    """Semi-implicit Euler step: velocity first, then position."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    wrenches, _ = _contact_wrenches(model, state.q, state.qd, contacts)
    qdd = forward_dynamics(model, state.q, state.qd, tau, wrenches)
    if not np.all(np.isfinite(qdd)):
        raise RuntimeError("non-finite dynamics")
    qd_next = state.qd + dt * qdd
    q_next = state.q + dt * qd_next
    return RobotState(q_next, qd_next)


# ---------------------------------------------------------------------------
# scenario configuration


@dataclass(frozen=True)
class TrajectorySpec:
    """Desired-trajectory generator feeding the reference filter.

    kinds: "hold" (stay at the initial task position); "circle" (radius,
    period, plane in {"xy","yz","xz"}, centered so the path starts at the
    initial position); "sine" (amplitude, period, along `axis`, offset from
    the initial position).
    """

    kind: str = "hold"
    radius: float = 0.05
    amplitude: float = 0.03
    period: float = 2.0
    plane: str = "xy"
    axis: int = 0

    def desired(self, x0: np.ndarray, t: float) -> np.ndarray:
        if self.kind == "hold":
            return x0
        if self.kind == "circle":
            theta = 2.0 * np.pi * t / self.period
            i, j = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}[self.plane]
            out = x0.copy()
            out[i] += self.radius * (np.cos(theta) - 1.0)
            out[j] += self.radius * np.sin(theta)
            return out
        if self.kind == "sine":
            out = x0.copy()
            out[self.axis if x0.shape[0] > 1 else 0] += self.amplitude * np.sin(
                2.0 * np.pi * t / self.period
            )
            return out
        raise ValueError(f"unknown trajectory kind {self.kind!r}")


@dataclass(frozen=True)
class MotionTaskConfig:
    name: str
    priority: int
    body: int
    point: np.ndarray
    selection: tuple[int, ...] | None = None
    traj: TrajectorySpec = field(default_factory=TrajectorySpec)


@dataclass(frozen=True)
class ForceTaskConfig:
    """Contact force task; `apply` is the force the robot should exert on
    the environment (world frame), the SI-friendly sign for a user. The
    controller-side reaction target is its negation."""

    name: str
    priority: int
    body: int
    point: np.ndarray
    apply: np.ndarray
    model: str = "rigid"  # "rigid" or "spring"
    hold_damping: float = 5.0  # velocity-level contact stabilization gain


@dataclass(frozen=True)
class ContactConfig:
    body: int
    point: np.ndarray
    stiffness: float = 2e5
    damping: float = 1e3
    mu: float = 0.0
    mode: str = "bilateral"
    normal: np.ndarray | None = None  # None: inferred from the force task
    anchor: np.ndarray | None = None  # None: preloaded from the force task


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    robot: str | RobotModel = ""
    controller: str = "tsid"
    duration: float = 1.0
    dt: float = 1e-3
    seed: int = 0
    trajectory_time: float = 1.0
    kp: float = 10.0
    kd: float = 5.0
    pinv: PinvConfig = field(default_factory=PinvConfig)
    q0: np.ndarray | None = None
    contacts: tuple[ContactConfig, ...] = ()
    motion_tasks: tuple[MotionTaskConfig, ...] = ()
    force_task: ForceTaskConfig | None = None
    posture_priority: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.duration < 0.0:
            raise ValueError("duration must be nonnegative")
        if self.controller not in CONTROLLER_NAMES:
            raise ValueError(f"unknown controller {self.controller!r}")
        violation = validate_pinv_config(self.pinv)
        if violation:
            raise ValueError(violation)

    def load_model(self) -> RobotModel:
        if isinstance(self.robot, RobotModel):
            return self.robot
        path = Path(self.robot)
        if not path.is_absolute() and not path.exists():
            candidate = _DATA_DIR / "robots" / path.name
            if candidate.exists():
                path = candidate
        return load_robot(path)


@dataclass
class TaskTrace:
    name: str
    kind: str  # "motion", "force", "posture"
    achieved: np.ndarray  # (K, m)
    reference: np.ndarray  # (K, m)

    @property
    def series(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.achieved[k], self.reference[k]) for k in range(self.achieved.shape[0])]


@dataclass
class SimResult:
    scenario: str
    controller: str
    t: np.ndarray
    tasks: list[TaskTrace]
    contact_forces: np.ndarray  # (K, 3*len(contacts))
    controller_times: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    diagnostics_min_sigma: np.ndarray  # (K, levels) smallest retained sigma


def _build_contact(cfg: ContactConfig, force_cfg: ForceTaskConfig | None,
                   model: RobotModel, q0: np.ndarray) -> SpringContact:
    normal = cfg.normal
    anchor = cfg.anchor
    if (normal is None or anchor is None) and force_cfg is None:
        raise ValueError("contact needs an explicit normal/anchor or a force task")
    if normal is None:
        f_apply = np.asarray(force_cfg.apply, dtype=float)
        normal = -f_apply / np.linalg.norm(f_apply)
    if anchor is None:
        # preload: place the wall so the initial state already exerts `apply`
        kin = compute_world_kinematics(model, q0)
        x0 = kin.rotations[cfg.body] @ np.asarray(cfg.point, float) + kin.translations[cfg.body]
        anchor = x0 - np.asarray(force_cfg.apply, dtype=float) / cfg.stiffness
    return SpringContact(
        body=cfg.body,
        point=np.asarray(cfg.point, float),
        anchor=np.asarray(anchor, float),
        normal=np.asarray(normal, float),
        stiffness=cfg.stiffness,
        damping=cfg.damping,
        mu=cfg.mu,
        mode=cfg.mode,
    )


def run_scenario(cfg: ScenarioConfig) -> SimResult:
    """Execute a scenario; deterministic for a given configuration."""
    model = cfg.load_model()
    n = model.dof_count
    q0 = np.zeros(n) if cfg.q0 is None else np.asarray(cfg.q0, dtype=float)
    if q0.shape != (n,):
        raise ValueError(f"q0 must have length {n}")
    state = RobotState(q0, np.zeros(n))
    gains = PDGains(cfg.kp, cfg.kd)
    steps = int(round(cfg.duration / cfg.dt))

    contacts = tuple(_build_contact(c, cfg.force_task, model, q0) for c in cfg.contacts)

    # initial task-space positions anchor the reference generators
    kin0 = compute_world_kinematics(model, q0)

    def task_position(body, point, selection, kin):
        x = kin.rotations[body] @ np.asarray(point, float) + kin.translations[body]
        return x[list(selection)] if selection is not None else x

    motion_cfgs = sorted(cfg.motion_tasks, key=lambda t: -t.priority)
    x0s_full = [task_position(t.body, t.point, None, kin0) for t in motion_cfgs]

    def select(x_full, selection):
        return x_full[list(selection)] if selection is not None else x_full

    x0s = [select(x_full, t.selection) for t, x_full in zip(motion_cfgs, x0s_full)]
    filters = [make_minjerk(x0, cfg.trajectory_time) for x0 in x0s]

    force_task = None
    force_react = None
    if cfg.force_task is not None:
        f_apply = np.asarray(cfg.force_task.apply, dtype=float)
        force_react = -f_apply
        if cfg.force_task.model == "rigid":
            force_task = RigidForceTask(
                body=cfg.force_task.body,
                point=np.asarray(cfg.force_task.point, float),
                f_star=force_react,
                priority=cfg.force_task.priority,
                hold_damping=cfg.force_task.hold_damping,
                name=cfg.force_task.name,
            )
        elif cfg.force_task.model == "spring":
            if not contacts:
                raise ValueError("spring force task needs a contact definition")
            c = contacts[0]
            force_task = SpringForceTask(
                body=cfg.force_task.body,
                point=np.asarray(cfg.force_task.point, float),
                f_star=force_react,
                stiffness=c.stiffness,
                anchor=c.anchor,
                priority=cfg.force_task.priority,
                gains=gains,
                name=cfg.force_task.name,
            ).to_motion_task()
        else:
            raise ValueError(f"unknown force model {cfg.force_task.model!r}")

    posture = PosturalTask(q_p=q0.copy(), gains=gains, priority=cfg.posture_priority)

    k_steps = steps
    m_dims = [len(x0) for x0 in x0s]
    traces = []
    if cfg.force_task is not None:
        traces.append(TaskTrace(cfg.force_task.name, "force",
                                np.zeros((k_steps, 3)), np.zeros((k_steps, 3))))
    for t, m in zip(motion_cfgs, m_dims):
        traces.append(TaskTrace(t.name, "motion", np.zeros((k_steps, m)), np.zeros((k_steps, m))))
    traces.append(TaskTrace("posture", "posture", np.zeros((k_steps, n)), np.zeros((k_steps, n))))

    contact_log = np.zeros((k_steps, 3 * max(len(contacts), 1)))
    ctrl_times = np.zeros(k_steps)
    q_log = np.zeros((k_steps, n))
    qd_log = np.zeros((k_steps, n))
    sigma_log = None

    for k in range(k_steps):
        t_now = k * cfg.dt
        kin = compute_world_kinematics(model, state.q)

        tasks: list = []
        if force_task is not None and isinstance(force_task, RigidForceTask):
            tasks.append(force_task)
        refs = []
        for i, tcfg in enumerate(motion_cfgs):
            x_d = select(tcfg.traj.desired(x0s_full[i], t_now), tcfg.selection)
            filters[i], ref = minjerk_step(filters[i], x_d, cfg.dt)
            refs.append(ref)
            tasks.append(MotionTask(
                body=tcfg.body, point=tcfg.point, priority=tcfg.priority,
                selection=tcfg.selection, gains=gains, ref=ref, name=tcfg.name,
            ))
        if force_task is not None and isinstance(force_task, MotionTask):
            # translated spring-force task keeps its fixed position target
            tasks.insert(0, force_task)
        tasks.append(posture)

        hierarchy = HierarchyInput(model, state, tuple(tasks), cfg.pinv)
        out = run_controller(cfg.controller, hierarchy)
        ctrl_times[k] = out.eval_time
        if sigma_log is None:
            sigma_log = np.zeros((k_steps, len(out.diagnostics)))
        sigma_log[k] = [d.sigma_min_retained for d in out.diagnostics]

        # record task errors at the pre-integration state
        _, reactions = _contact_wrenches(model, state.q, state.qd, contacts)
        idx = 0
        if cfg.force_task is not None:
            achieved = reactions[:3] if reactions.size else np.zeros(3)
            traces[idx].achieved[k] = achieved
            traces[idx].reference[k] = force_react
            idx += 1
        for i, tcfg in enumerate(motion_cfgs):
            traces[idx].achieved[k] = task_position(tcfg.body, tcfg.point, tcfg.selection, kin)
            traces[idx].reference[k] = refs[i].x
            idx += 1
        traces[idx].achieved[k] = state.q
        traces[idx].reference[k] = posture.q_p
        if reactions.size:
            contact_log[k, :reactions.size] = reactions
        q_log[k] = state.q
        qd_log[k] = state.qd

        state = integrate_step(model, state, out.tau, contacts, cfg.dt)
        if not np.all(np.isfinite(state.q)):
            raise RuntimeError(f"simulation diverged at step {k}")

    return SimResult(
        scenario=cfg.name,
        controller=cfg.controller,
        t=np.arange(k_steps) * cfg.dt,
        tasks=traces,
        contact_forces=contact_log,
        controller_times=ctrl_times,
        q=q_log,
        qd=qd_log,
        diagnostics_min_sigma=sigma_log if sigma_log is not None else np.zeros((k_steps, 0)),
    )


# ---------------------------------------------------------------------------
# scenario file parsing


def _parse_kv(tokens: list[str]) -> dict[str, list[str]]:
    """Split ['body', '6', 'point', '0', '0', '0.3'] into keyword groups."""
    keys = {
        "name", "priority", "body", "point", "select", "traj", "radius",
        "amplitude", "period", "plane", "axis", "apply", "kind", "stiffness",
        "damping", "mu", "mode", "normal", "anchor",
    }
    out: dict[str, list[str]] = {}
    current = None
    for tok in tokens:
        if tok in keys:
            current = tok
            out[current] = []
        elif current is None:
            raise ValueError(f"unexpected token {tok!r}")
        else:
            out[current].append(tok)
    return out


def _traj_from_kv(kv: dict[str, list[str]]) -> TrajectorySpec:
    kind = kv.get("traj", ["hold"])[0]
    spec = TrajectorySpec(kind=kind)
    if "radius" in kv:
        spec = replace(spec, radius=float(kv["radius"][0]))
    if "amplitude" in kv:
        spec = replace(spec, amplitude=float(kv["amplitude"][0]))
    if "period" in kv:
        spec = replace(spec, period=float(kv["period"][0]))
    if "plane" in kv:
        spec = replace(spec, plane=kv["plane"][0])
    if "axis" in kv:
        spec = replace(spec, axis=int(kv["axis"][0]))
    return spec


def parse_scenario(text: str, base_dir: Path | str | None = None) -> ScenarioConfig:
    """Parse the line-oriented scenario format (see the shipped examples)."""
    fields: dict = {}
    motion_tasks: list[MotionTaskConfig] = []
    force_task = None
    contacts: list[ContactConfig] = []
    pinv_kwargs: dict[str, float] = {}

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head, rest = tokens[0], tokens[1:]
        try:
            if head == "scenario":
                fields["name"] = rest[0]
            elif head == "robot":
                path = Path(rest[0])
                if base_dir is not None and not path.is_absolute():
                    candidate = Path(base_dir) / path
                    if candidate.exists():
                        path = candidate
                fields["robot"] = str(path)
            elif head == "controller":
                fields["controller"] = rest[0]
            elif head in ("duration", "dt", "trajectory_time", "kp", "kd"):
                fields[head] = float(rest[0])
            elif head == "seed":
                fields["seed"] = int(rest[0])
            elif head == "lambda":
                pinv_kwargs["damping"] = float(rest[0])
            elif head == "sigma_min":
                pinv_kwargs["sigma_min"] = float(rest[0])
            elif head == "z":
                pinv_kwargs["z"] = float(rest[0])
            elif head == "q0":
                fields["q0"] = np.array([float(v) for v in rest])
            elif head == "contact":
                kv = _parse_kv(rest)
                contacts.append(ContactConfig(
                    body=int(kv["body"][0]),
                    point=np.array([float(v) for v in kv["point"]]),
                    stiffness=float(kv.get("stiffness", ["2e5"])[0]),
                    damping=float(kv.get("damping", ["1e3"])[0]),
                    mu=float(kv.get("mu", ["0"])[0]),
                    mode=kv.get("mode", ["bilateral"])[0],
                    normal=np.array([float(v) for v in kv["normal"]]) if "normal" in kv else None,
                    anchor=np.array([float(v) for v in kv["anchor"]]) if "anchor" in kv else None,
                ))
            elif head == "task":
                sub, rest = rest[0], rest[1:]
                kv = _parse_kv(rest)
                if sub == "motion":
                    motion_tasks.append(MotionTaskConfig(
                        name=kv.get("name", [f"motion{len(motion_tasks)}"])[0],
                        priority=int(kv["priority"][0]),
                        body=int(kv["body"][0]),
                        point=np.array([float(v) for v in kv["point"]]),
                        selection=parse_selection(kv["select"][0]) if "select" in kv else None,
                        traj=_traj_from_kv(kv),
                    ))
                elif sub == "force":
                    force_task = ForceTaskConfig(
                        name=kv.get("name", ["force"])[0],
                        priority=int(kv["priority"][0]),
                        body=int(kv["body"][0]),
                        point=np.array([float(v) for v in kv["point"]]),
                        apply=np.array([float(v) for v in kv["apply"]]),
                        model=kv.get("kind", ["rigid"])[0],
                    )
                elif sub == "posture":
                    kv = _parse_kv(rest)
                    fields["posture_priority"] = int(kv.get("priority", ["0"])[0])
                else:
                    raise ValueError(f"unknown task kind {sub!r}")
            else:
                raise ValueError(f"unknown record {head!r}")
        except (KeyError, IndexError, ValueError) as exc:
            raise ValueError(f"scenario line {line_no}: {exc}") from None

    if pinv_kwargs:
        fields["pinv"] = PinvConfig(**pinv_kwargs)
    return ScenarioConfig(
        motion_tasks=tuple(motion_tasks),
        force_task=force_task,
        contacts=tuple(contacts),
        **fields,
    )


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        candidate = _DATA_DIR / "scenarios" / path.name
        if candidate.exists():
            path = candidate
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), base_dir=path.parent)
