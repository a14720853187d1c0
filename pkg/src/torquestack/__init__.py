"""Prioritized motion/force control workbench.

Rigid-body dynamics over kinematic trees, three hierarchical torque
controllers (weighted-pseudoinverse recursion, operational-space cascade,
acceleration-level lexicographic resolution), a spring-contact simulator,
and a benchmark harness comparing soundness, optimality and efficiency.
"""

from .controllers import (
    CONTROLLER_NAMES,
    ControlOutput,
    HierarchyInput,
    LevelDiagnostics,
    WBCFLevelData,
    run_controller,
    single_task_control,
    tsid_control,
    tsid_control_general,
    tsid_force_control,
    tsid_rigid_force_single,
    uf_control,
    uf_hybrid_control,
    wbcf_control,
    wbcf_hybrid_control,
)
from .dynamics import crba, forward_dynamics, nonlinear_effects, rnea
from .lexqp import LexLevel, LexSolution, constrained_dynamics_kkt, eq_qp, lex_lsq
from .model import (
    FramePlacement,
    JointDef,
    LinkInertia,
    RobotModel,
    RobotParseError,
    RobotState,
    forward_kinematics,
    frame_jacobian,
    frame_jdot_qdot,
    jdot_qdot,
    load_robot,
    make_serial_chain,
    parse_robot,
    point_jacobian,
    serialize_robot,
)
from .numlin import (
    PinvConfig,
    WeightSpec,
    damped_pinv,
    null_projector,
    recursive_projector_update,
    validate_pinv_config,
    weighted_null_projector,
    weighted_pinv,
)
from .sim import (
    ScenarioConfig,
    SimResult,
    SpringContact,
    contact_force,
    integrate_step,
    load_scenario,
    parse_scenario,
    run_scenario,
)
from .tasks import (
    MinJerkState,
    MotionTask,
    PDGains,
    PosturalTask,
    RefSample,
    RigidForceTask,
    SpringForceTask,
    make_minjerk,
    minjerk_step,
    pd_reference,
    postural_reference,
    rmse,
)

__version__ = "0.1.0"
