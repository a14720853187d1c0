import numpy as np
import pytest
import sympy as sp

from torquestack.dynamics import crba, forward_dynamics, nonlinear_effects, rnea
from torquestack.model import (
    compute_body_motion,
    compute_world_kinematics,
    frame_jacobian,
    parse_robot,
    point_jacobian,
)

from conftest import random_chain


@pytest.fixture(scope="module")
def two_link_oracle():
    """Symbolic Lagrangian dynamics of the planar two-link chain in conftest:
    both joints about +y, links hanging along -z at rest, gravity -z.

    Returns lambdified M(q), h(q, qd) built from tau = d/dt dL/dqd - dL/dq.
    """
    m1, m2 = 1.5, 0.9
    c1, c2 = 0.4, 0.25
    l1 = 0.8
    i1, i2 = 0.03, 0.015  # Iyy about each com (rotation axis is y)
    g = 9.81

    t = sp.symbols("t")
    q1, q2 = sp.Function("q1")(t), sp.Function("q2")(t)
    # planar positions in the x-z plane; rotation about +y maps
    # (0,0,-c) to (-c sin th, 0, -c cos th)
    p1 = sp.Matrix([-c1 * sp.sin(q1), -c1 * sp.cos(q1)])
    pj2 = sp.Matrix([-l1 * sp.sin(q1), -l1 * sp.cos(q1)])
    p2 = pj2 + sp.Matrix([-c2 * sp.sin(q1 + q2), -c2 * sp.cos(q1 + q2)])

    v1 = p1.diff(t)
    v2 = p2.diff(t)
    ke = (
        m1 * v1.dot(v1) / 2
        + m2 * v2.dot(v2) / 2
        + i1 * q1.diff(t) ** 2 / 2
        + i2 * (q1.diff(t) + q2.diff(t)) ** 2 / 2
    )
    pe = m1 * g * p1[1] + m2 * g * p2[1]
    lag = ke - pe

    qs = [q1, q2]
    qds = [q.diff(t) for q in qs]
    taus = [sp.simplify(lag.diff(qd).diff(t) - lag.diff(q)) for q, qd in zip(qs, qds)]

    q1s, q2s, qd1s, qd2s, qdd1s, qdd2s = sp.symbols("q1s q2s qd1s qd2s qdd1s qdd2s")
    subs = {
        q1.diff(t, 2): qdd1s, q2.diff(t, 2): qdd2s,
        q1.diff(t): qd1s, q2.diff(t): qd2s,
        q1: q1s, q2: q2s,
    }
    tau_exprs = [tau.subs(subs) for tau in taus]
    fn = sp.lambdify((q1s, q2s, qd1s, qd2s, qdd1s, qdd2s), tau_exprs, "numpy")

    def tau_fn(q, qd, qdd):
        return np.array(fn(q[0], q[1], qd[0], qd[1], qdd[0], qdd[1]))

    return tau_fn


class TestRnea:
    def test_zero_everything_zero_gravity(self, rng):
        from torquestack.model import serialize_robot

        lines = serialize_robot(random_chain(rng, 4)).splitlines()
        lines = [l for l in lines if not l.startswith("gravity")]
        lines.insert(1, "gravity 0 0 0")
        model = parse_robot("\n".join(lines))
        n = model.dof_count
        tau = rnea(model, np.zeros(n), np.zeros(n), np.zeros(n))
        np.testing.assert_allclose(tau, np.zeros(n), atol=1e-12)

    def test_pendulum_static_torque(self, pendulum):
        for q in (0.0, 0.4, -1.2, np.pi / 2):
            tau = rnea(pendulum, np.array([q]), np.zeros(1), np.zeros(1))
            np.testing.assert_allclose(tau, [2.0 * 9.81 * 0.7 * np.sin(q)], atol=1e-12)

    def test_two_link_matches_lagrangian_oracle(self, two_link, two_link_oracle):
        rng = np.random.default_rng(3)
        for _ in range(30):
            q, qd, qdd = rng.standard_normal((3, 2))
            expected = two_link_oracle(q, qd, qdd)
            np.testing.assert_allclose(rnea(two_link, q, qd, qdd), expected, atol=1e-10)

    def test_matches_mass_matrix_decomposition(self, rng):
        model = random_chain(rng, 7, prismatic_prob=0.2)
        n = model.dof_count
        for _ in range(20):
            q, qd, qdd = rng.standard_normal((3, n))
            lhs = rnea(model, q, qd, qdd)
            rhs = crba(model, q) @ qdd + nonlinear_effects(model, q, qd)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)

    def test_rejects_bad_dimensions(self, pendulum):
        with pytest.raises(ValueError):
            rnea(pendulum, np.zeros(2), np.zeros(1), np.zeros(1))

    def test_rejects_non_finite(self, pendulum):
        with pytest.raises(ValueError, match="non-finite"):
            rnea(pendulum, np.array([np.nan]), np.zeros(1), np.zeros(1))

    def test_external_wrench_equals_jacobian_transpose(self, rng):
        model = random_chain(rng, 6)
        n = model.dof_count
        q, qd, qdd = (rng.standard_normal(n) for _ in range(3))
        body, point = 5, np.zeros(3)
        force = rng.standard_normal(3)
        torque = rng.standard_normal(3)
        tau = rnea(model, q, qd, qdd, {body: np.concatenate([force, torque])})
        jac6 = frame_jacobian(model, q, body)
        wrench_tau = jac6[:3].T @ force + jac6[3:].T @ torque
        base = rnea(model, q, qd, qdd)
        np.testing.assert_allclose(tau, base - wrench_tau, atol=1e-10)


class TestNonlinearEffects:
    def test_gravity_only_at_rest(self, rng):
        model = random_chain(rng, 5)
        n = model.dof_count
        q = rng.standard_normal(n)
        h = nonlinear_effects(model, q, np.zeros(n))
        np.testing.assert_allclose(h, rnea(model, q, np.zeros(n), np.zeros(n)), atol=1e-14)

    def test_zero_in_zero_gravity_at_rest(self, rng):
        from torquestack.model import serialize_robot

        model = random_chain(rng, 4)
        text = serialize_robot(model)
        lines = [l for l in text.splitlines() if not l.startswith("gravity")]
        lines.insert(1, "gravity 0 0 0")
        model0 = parse_robot("\n".join(lines))
        q = rng.standard_normal(model0.dof_count)
        h = nonlinear_effects(model0, q, np.zeros(model0.dof_count))
        np.testing.assert_allclose(h, np.zeros_like(q), atol=1e-12)

    def test_coriolis_power_balance(self, rng):
        # qd^T (Mdot - 2 C) qd = 0 with Mdot from finite differences
        model = random_chain(rng, 6, prismatic_prob=0.2)
        n = model.dof_count
        eps = 1e-6
        for _ in range(15):
            q, qd = rng.standard_normal((2, n))
            mdot = (crba(model, q + eps * qd) - crba(model, q - eps * qd)) / (2 * eps)
            coriolis = nonlinear_effects(model, q, qd) - nonlinear_effects(model, q, np.zeros(n))
            residual = qd @ mdot @ qd - 2.0 * qd @ coriolis
            assert abs(residual) < 1e-5 * max(1.0, abs(qd @ mdot @ qd))


class TestCrba:
    def test_pendulum_point_mass(self, pendulum):
        m = crba(pendulum, np.array([0.3]))
        np.testing.assert_allclose(m, [[2.0 * 0.7**2]], atol=1e-12)

    def test_matches_rnea_columns(self, rng):
        model = random_chain(rng, 8, prismatic_prob=0.25)
        n = model.dof_count
        for _ in range(10):
            q = rng.standard_normal(n)
            m = crba(model, q)
            base = rnea(model, q, np.zeros(n), np.zeros(n))
            cols = np.column_stack([
                rnea(model, q, np.zeros(n), e) - base for e in np.eye(n)
            ])
            np.testing.assert_allclose(m, cols, rtol=1e-9, atol=1e-9)

    def test_symmetric_positive_definite(self, rng):
        model = random_chain(rng, 7)
        for _ in range(25):
            q = rng.standard_normal(model.dof_count)
            m = crba(model, q)
            np.testing.assert_allclose(m, m.T, atol=1e-9)
            assert np.linalg.eigvalsh(m)[0] > 0.0
            np.linalg.cholesky(m)

    def test_kinetic_energy_matches_per_link_sum(self, rng):
        model = random_chain(rng, 6)
        n = model.dof_count
        for _ in range(10):
            q, qd = rng.standard_normal((2, n))
            ke_matrix = 0.5 * qd @ crba(model, q) @ qd
            kin = compute_world_kinematics(model, q)
            motion = compute_body_motion(model, q, qd)
            ke_links = 0.0
            for i, link in enumerate(model.links):
                jac_com = point_jacobian(model, q, i, link.com, kin)
                v_com = jac_com @ qd
                omega_body = motion.velocity[i, :3]
                inertia = link.inertia  # about com, link frame
                ke_links += 0.5 * link.mass * v_com @ v_com
                ke_links += 0.5 * omega_body @ inertia @ omega_body
            np.testing.assert_allclose(ke_matrix, ke_links, rtol=1e-9)


class TestForwardDynamics:
    def test_gravity_compensation_holds_still(self, rng):
        model = random_chain(rng, 5)
        n = model.dof_count
        q = rng.standard_normal(n)
        tau = nonlinear_effects(model, q, np.zeros(n))
        qdd = forward_dynamics(model, q, np.zeros(n), tau)
        np.testing.assert_allclose(qdd, np.zeros(n), atol=1e-10)

    def test_pendulum_release(self, pendulum):
        # horizontal release: qdd = -g/l * sin(q) for a point mass
        q = np.array([np.pi / 2])
        qdd = forward_dynamics(pendulum, q, np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(qdd, [-9.81 / 0.7], rtol=1e-12)

    def test_two_link_matches_oracle(self, two_link, two_link_oracle):
        rng = np.random.default_rng(9)
        for _ in range(10):
            q, qd, qdd = rng.standard_normal((3, 2))
            tau = two_link_oracle(q, qd, qdd)
            np.testing.assert_allclose(forward_dynamics(two_link, q, qd, tau), qdd, atol=1e-9)

    def test_inverse_forward_roundtrip(self, rng):
        model = random_chain(rng, 7, prismatic_prob=0.2)
        n = model.dof_count
        for _ in range(100):
            q, qd, qdd = rng.standard_normal((3, n))
            tau = rnea(model, q, qd, qdd)
            np.testing.assert_allclose(forward_dynamics(model, q, qd, tau), qdd,
                                       rtol=1e-9, atol=1e-9)

    def test_resubstitution_with_wrench(self, rng):
        model = random_chain(rng, 6)
        n = model.dof_count
        q, qd = rng.standard_normal((2, n))
        tau = rng.standard_normal(n)
        wrench = {4: rng.standard_normal(6)}
        qdd = forward_dynamics(model, q, qd, tau, wrench)
        np.testing.assert_allclose(rnea(model, q, qd, qdd, wrench), tau, atol=1e-8)
