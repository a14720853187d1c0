import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from torquestack.model import (
    RobotParseError,
    compute_world_kinematics,
    forward_kinematics,
    frame_jacobian,
    frame_jdot_qdot,
    jdot_qdot,
    make_serial_chain,
    parse_robot,
    point_jacobian,
    serialize_robot,
)

from conftest import random_chain, random_chain_text

SINGLE = """
robot single dof 1
link 0 parent -1 joint revolute axis 0 0 1 origin 0 0 0 rpy 0 0 0 mass 1.0 com 0.5 0 0 inertia 0.001 0.09 0.09 0 0 0
"""


def homogeneous_chain_tip(model, q):
    """Independent forward kinematics: accumulate 4x4 homogeneous transforms."""
    from torquestack.spatial import rotation_about_axis

    tips = []
    mats = {}
    for i, joint in enumerate(model.joints):
        t = np.eye(4)
        t[:3, :3] = joint.origin.rotation
        t[:3, 3] = joint.origin.translation
        motion = np.eye(4)
        if joint.kind == "revolute":
            motion[:3, :3] = rotation_about_axis(joint.axis, q[model.dof_index(i)])
        elif joint.kind == "prismatic":
            motion[:3, 3] = q[model.dof_index(i)] * joint.axis
        parent = mats[joint.parent] if joint.parent >= 0 else np.eye(4)
        mats[i] = parent @ t @ motion
        tips.append(mats[i])
    return tips


class TestParse:
    def test_single_link(self):
        model = parse_robot(SINGLE)
        assert model.dof_count == 1
        assert model.n_links == 1
        assert model.joints[0].parent == -1

    def test_non_topological_order_rejected(self):
        bad = SINGLE.replace("parent -1", "parent 2")
        with pytest.raises(RobotParseError, match="topological|root"):
            parse_robot(bad)

    def test_seven_link_chain_roundtrip(self, rng):
        text = random_chain_text(rng, 7, prismatic_prob=0.2, fixed_prob=0.1)
        model = parse_robot(text)
        assert model.n_links == 7
        assert model.joints[0].parent == -1
        again = parse_robot(serialize_robot(model))
        assert again.name == model.name
        assert again.dof_count == model.dof_count
        for a, b in zip(model.joints, again.joints):
            assert a.kind == b.kind and a.parent == b.parent
            np.testing.assert_allclose(a.axis, b.axis, atol=1e-14)
            np.testing.assert_allclose(a.origin.rotation, b.origin.rotation, atol=1e-14)
            np.testing.assert_allclose(a.origin.translation, b.origin.translation, atol=1e-14)
        for a, b in zip(model.links, again.links):
            assert a.mass == b.mass
            np.testing.assert_allclose(a.com, b.com, atol=1e-16)
            np.testing.assert_allclose(a.inertia, b.inertia, atol=1e-16)

    def test_duplicate_link_rejected(self):
        text = SINGLE + "link 0 parent -1 joint fixed axis 0 0 1 origin 0 0 0 rpy 0 0 0 mass 1 com 0 0 0 inertia 1 1 1 0 0 0\n"
        with pytest.raises(RobotParseError):
            parse_robot(text)

    def test_bad_inertia_rejected(self):
        bad = SINGLE.replace("inertia 0.001 0.09 0.09 0 0 0", "inertia 1 1 5 0 0 0")
        with pytest.raises(RobotParseError, match="triangle"):
            parse_robot(bad)

    def test_dof_header_mismatch(self):
        bad = SINGLE.replace("dof 1", "dof 3")
        with pytest.raises(RobotParseError, match="dof"):
            parse_robot(bad)

    def test_syntax_error_reports_line(self):
        bad = SINGLE.replace("mass 1.0", "mass oops")
        with pytest.raises(RobotParseError, match="line 3"):
            parse_robot(bad)


class TestForwardKinematics:
    def test_identity_at_zero(self):
        model = parse_robot(SINGLE)
        placement = forward_kinematics(model, np.zeros(1))[0]
        np.testing.assert_allclose(placement.rotation, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(placement.translation, np.zeros(3), atol=1e-15)

    def test_quarter_turn_about_z(self):
        model = parse_robot(SINGLE)
        placement = forward_kinematics(model, np.array([np.pi / 2]))[0]
        expected = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        np.testing.assert_allclose(placement.rotation, expected, atol=1e-15)

    def test_matches_homogeneous_product(self, rng):
        model = random_chain(rng, 5, prismatic_prob=0.25)
        for _ in range(25):
            q = rng.standard_normal(model.dof_count)
            placements = forward_kinematics(model, q)
            mats = homogeneous_chain_tip(model, q)
            for i, p in enumerate(placements):
                np.testing.assert_allclose(p.rotation, mats[i][:3, :3], atol=1e-12)
                np.testing.assert_allclose(p.translation, mats[i][:3, 3], atol=1e-12)

    def test_dimension_mismatch(self):
        model = parse_robot(SINGLE)
        with pytest.raises(ValueError):
            forward_kinematics(model, np.zeros(2))


class TestPointJacobian:
    def test_off_path_columns_zero(self, rng):
        model = random_chain(rng, 6)
        q = rng.standard_normal(6)
        jac = point_jacobian(model, q, 3, np.array([0.1, 0.0, 0.0]))
        assert np.all(jac[:, 4:] == 0.0)
        # ancestor columns are generically nonzero
        assert all(np.linalg.norm(jac[:, j]) > 1e-12 for j in range(4))

    def test_planar_link_analytic(self):
        text = SINGLE.replace("com 0.5 0 0", "com 0.5 0 0")
        model = parse_robot(text)
        jac = point_jacobian(model, np.zeros(1), 0, np.array([1.0, 0, 0]))
        np.testing.assert_allclose(jac, np.array([[0.0], [1.0], [0.0]]), atol=1e-15)

    def test_matches_finite_differences(self, rng):
        model = random_chain(rng, 5, prismatic_prob=0.3)
        point = np.array([0.12, -0.05, 0.08])
        eps = 1e-6
        for _ in range(20):
            q = rng.standard_normal(model.dof_count)
            jac = point_jacobian(model, q, 4, point)
            fd = np.zeros_like(jac)
            for j in range(model.dof_count):
                dq = np.zeros(model.dof_count)
                dq[j] = eps
                kp = compute_world_kinematics(model, q + dq)
                km = compute_world_kinematics(model, q - dq)
                pp = kp.rotations[4] @ point + kp.translations[4]
                pm = km.rotations[4] @ point + km.translations[4]
                fd[:, j] = (pp - pm) / (2 * eps)
            np.testing.assert_allclose(jac, fd, atol=1e-6)

    def test_velocity_consistency_randomized(self, rng):
        # point velocity from finite-differenced FK equals J qd
        model = random_chain(rng, 6, prismatic_prob=0.2)
        point = np.array([0.2, 0.1, -0.1])
        eps = 1e-7
        for _ in range(100):
            q = rng.standard_normal(model.dof_count)
            qd = rng.standard_normal(model.dof_count)
            jac = point_jacobian(model, q, 5, point)
            kp = compute_world_kinematics(model, q + eps * qd)
            km = compute_world_kinematics(model, q - eps * qd)
            v_fd = ((kp.rotations[5] @ point + kp.translations[5])
                    - (km.rotations[5] @ point + km.translations[5])) / (2 * eps)
            np.testing.assert_allclose(jac @ qd, v_fd, atol=1e-6)

    def test_invalid_body(self):
        model = parse_robot(SINGLE)
        with pytest.raises(ValueError, match="link index"):
            point_jacobian(model, np.zeros(1), 3, np.zeros(3))


class TestFrameJacobian:
    def test_fixed_only_chain_zero(self):
        text = (
            "robot fx dof 1\n"
            "link 0 parent -1 joint revolute axis 0 0 1 origin 0 0 0 rpy 0 0 0 mass 1 com 0 0 0 inertia 0.1 0.1 0.1 0 0 0\n"
            "link 1 parent 0 joint fixed axis 0 0 1 origin 0.2 0 0 rpy 0 0 0 mass 1 com 0 0 0 inertia 0.1 0.1 0.1 0 0 0\n"
        )
        model = parse_robot(text)
        jac = frame_jacobian(model, np.zeros(1), 1)
        # only the revolute parent contributes; the fixed joint adds nothing
        assert jac.shape == (6, 1)
        np.testing.assert_allclose(jac[3:, 0], np.array([0, 0, 1.0]), atol=1e-15)

    def test_angular_rows_single_revolute(self):
        model = parse_robot(SINGLE)
        jac = frame_jacobian(model, np.array([0.3]), 0)
        np.testing.assert_allclose(jac[3:], np.array([[0.0], [0.0], [1.0]]), atol=1e-15)

    def test_matches_rotation_log_finite_differences(self, rng):
        model = random_chain(rng, 5)
        eps = 1e-6
        for _ in range(15):
            q = rng.standard_normal(model.dof_count)
            jac = frame_jacobian(model, q, 4)
            fd = np.zeros((6, model.dof_count))
            k0 = compute_world_kinematics(model, q)
            for j in range(model.dof_count):
                dq = np.zeros(model.dof_count)
                dq[j] = eps
                kp = compute_world_kinematics(model, q + dq)
                km = compute_world_kinematics(model, q - dq)
                fd[:3, j] = (kp.translations[4] - km.translations[4]) / (2 * eps)
                # world-frame angular velocity via the rotation log map
                delta = Rotation.from_matrix(kp.rotations[4] @ km.rotations[4].T).as_rotvec()
                fd[3:, j] = delta / (2 * eps)
            np.testing.assert_allclose(jac, fd, atol=1e-5)


class TestJdotQdot:
    def test_zero_velocity_gives_zero(self, rng):
        model = random_chain(rng, 4)
        q = rng.standard_normal(model.dof_count)
        out = jdot_qdot(model, q, np.zeros(model.dof_count), 3, np.array([0.1, 0, 0]))
        np.testing.assert_allclose(out, np.zeros(3), atol=1e-15)

    def test_centripetal_single_link(self):
        model = parse_robot(SINGLE)
        omega = 1.7
        out = jdot_qdot(model, np.zeros(1), np.array([omega]), 0, np.array([1.0, 0, 0]))
        # point on the x axis spinning about z: acceleration points back to the axis
        np.testing.assert_allclose(out, np.array([-omega**2, 0.0, 0.0]), atol=1e-12)

    def test_matches_jacobian_finite_differences(self, rng):
        model = random_chain(rng, 6, prismatic_prob=0.2)
        point = np.array([0.15, -0.07, 0.1])
        eps = 1e-6
        for _ in range(25):
            q = rng.standard_normal(model.dof_count)
            qd = rng.standard_normal(model.dof_count)
            jp = point_jacobian(model, q + eps * qd, 5, point)
            jm = point_jacobian(model, q - eps * qd, 5, point)
            fd = (jp - jm) / (2 * eps) @ qd
            out = jdot_qdot(model, q, qd, 5, point)
            np.testing.assert_allclose(out, fd, atol=1e-5)

    def test_frame_version_matches_finite_differences(self, rng):
        model = random_chain(rng, 5)
        eps = 1e-6
        for _ in range(10):
            q = rng.standard_normal(model.dof_count)
            qd = rng.standard_normal(model.dof_count)
            jp = frame_jacobian(model, q + eps * qd, 4)
            jm = frame_jacobian(model, q - eps * qd, 4)
            fd = (jp - jm) / (2 * eps) @ qd
            out = frame_jdot_qdot(model, q, qd, 4)
            np.testing.assert_allclose(out, fd, atol=1e-5)

    def test_quadratic_in_velocity(self, rng):
        model = random_chain(rng, 5)
        q = rng.standard_normal(model.dof_count)
        qd = rng.standard_normal(model.dof_count)
        point = np.array([0.1, 0.2, 0.0])
        base = jdot_qdot(model, q, qd, 4, point)
        for alpha in (0.5, 2.0, -3.0):
            scaled = jdot_qdot(model, q, alpha * qd, 4, point)
            np.testing.assert_allclose(scaled, alpha**2 * base, atol=1e-10)


def test_serial_chain_factory():
    model = make_serial_chain(12)
    assert model.dof_count == 12
    assert model.joints[5].parent == 4
