import numpy as np
import pytest

from torquestack.dynamics import forward_dynamics, nonlinear_effects
from torquestack.lexqp import LexLevel, constrained_dynamics_kkt, eq_qp, lex_lsq

from conftest import random_chain


class TestLexLsq:
    def test_single_square_level(self, rng):
        a = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        b = rng.standard_normal(4)
        sol = lex_lsq([LexLevel(a, b)])
        np.testing.assert_allclose(sol.x, np.linalg.solve(a, b), atol=1e-10)
        assert sol.unique

    def test_two_level_hand_case(self):
        sol = lex_lsq([
            LexLevel(np.array([[1.0, 0.0]]), np.array([1.0])),
            LexLevel(np.array([[1.0, 1.0]]), np.array([0.0])),
        ])
        np.testing.assert_allclose(sol.x, [1.0, -1.0], atol=1e-12)
        assert sol.unique

    def test_underdetermined_flagged(self):
        sol = lex_lsq([LexLevel(np.array([[1.0, 0.0, 0.0]]), np.array([2.0]))])
        assert not sol.unique
        np.testing.assert_allclose(sol.x, [2.0, 0.0, 0.0], atol=1e-12)

    def test_lexicographic_dominance_random_audit(self, rng):
        # solution must be lexicographically <= 1e5 random perturbations
        n = 6
        for trial in range(6):
            rows = rng.integers(1, 4, size=3)
            levels = [
                LexLevel(rng.standard_normal((m, n)), rng.standard_normal(m))
                for m in rows
            ]
            sol = lex_lsq(levels)
            deltas = rng.standard_normal((100_000, n)) * 10.0 ** rng.uniform(-4, 1)
            candidates = sol.x + deltas
            costs = np.stack([
                np.sum((c.a @ candidates.T - c.b[:, None]) ** 2, axis=0) for c in levels
            ])  # (levels, samples)
            base = np.array(sol.level_costs)[:, None]
            diff = costs - base
            tol = 1e-9 * (1.0 + np.abs(base))
            # first level where the candidate differs decisively must be worse
            worse = diff > tol
            better = diff < -tol
            decided = worse | better
            first = np.argmax(decided, axis=0)
            any_decided = decided.any(axis=0)
            verdict = np.where(any_decided,
                               worse[first, np.arange(costs.shape[1])], True)
            assert verdict.all()

    def test_row_scaling_invariance(self, rng):
        n = 5
        levels = [
            LexLevel(rng.standard_normal((2, n)), rng.standard_normal(2)),
            LexLevel(rng.standard_normal((2, n)), rng.standard_normal(2)),
            LexLevel(np.eye(n), rng.standard_normal(n)),
        ]
        base = lex_lsq(levels).x
        scaled = [LexLevel(7.3 * l.a, 7.3 * l.b) for l in levels]
        np.testing.assert_allclose(lex_lsq(scaled).x, base, atol=1e-8)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lex_lsq([LexLevel(np.eye(2), np.zeros(2)), LexLevel(np.eye(3), np.zeros(3))])

    def test_empty(self):
        with pytest.raises(ValueError):
            lex_lsq([])


class TestEqQp:
    def test_minimum_norm(self):
        np.testing.assert_allclose(
            eq_qp(np.eye(2), np.array([[1.0, 1.0]]), np.array([1.0])),
            [0.5, 0.5], atol=1e-12,
        )

    def test_weighted(self):
        np.testing.assert_allclose(
            eq_qp(np.diag([1.0, 3.0]), np.array([[1.0, 1.0]]), np.array([1.0])),
            [0.25, 0.75], atol=1e-12,
        )

    def test_identity_weight_equals_pinv(self, rng):
        a = rng.standard_normal((3, 7))
        b = rng.standard_normal(3)
        np.testing.assert_allclose(eq_qp(np.eye(7), a, b), np.linalg.pinv(a) @ b, atol=1e-10)

    def test_kkt_residual_small(self, rng):
        for _ in range(20):
            a = rng.standard_normal((3, 6))
            w = rng.standard_normal((6, 6))
            w = w @ w.T + 6 * np.eye(6)
            b = rng.standard_normal(3)
            x = eq_qp(w, a, b)
            assert np.linalg.norm(a @ x - b) < 1e-10 * (1 + np.linalg.norm(b))
            # stationarity: W^-1 x in the row space of A
            resid = np.linalg.inv(w) @ x
            proj = a.T @ np.linalg.lstsq(a.T, resid, rcond=None)[0]
            np.testing.assert_allclose(resid, proj, atol=1e-10)

    def test_inconsistent_constraints_reported(self):
        a = np.array([[1.0, 0.0], [1.0, 0.0]])
        b = np.array([1.0, 2.0])
        with pytest.raises(ValueError, match="inconsistent"):
            eq_qp(np.eye(2), a, b)


class TestConstrainedDynamicsKkt:
    def test_unconstrained_reduces_to_forward_dynamics(self, rng):
        model = random_chain(rng, 5)
        n = model.dof_count
        q, qd = rng.standard_normal((2, n))
        tau = rng.standard_normal(n)
        qdd, f = constrained_dynamics_kkt(model, q, qd, tau)
        np.testing.assert_allclose(qdd, forward_dynamics(model, q, qd, tau), atol=1e-10)
        assert f.size == 0

    def test_pinned_chain_supports_weight(self):
        from torquestack.model import parse_robot

        # three-link hanging chain pinned at the tip, zero torque: statics
        # force qdd = 0 and the pin carries the gravity load, Jc^T f = h
        text = "\n".join([
            "robot chain3 dof 3",
            "link 0 parent -1 joint revolute axis 0 1 0 origin 0 0 0 rpy 0 0 0 mass 1.0 com 0.02 0 -0.2 inertia 0.01 0.015 0.01 0 0 0",
            "link 1 parent 0 joint revolute axis 1 0 0 origin 0 0 -0.4 rpy 0 0 0 mass 0.8 com 0 0.02 -0.15 inertia 0.008 0.01 0.008 0 0 0",
            "link 2 parent 1 joint revolute axis 0 1 0 origin 0 0 -0.3 rpy 0 0 0 mass 0.6 com 0.01 0 -0.1 inertia 0.005 0.007 0.005 0 0 0",
        ])
        model = parse_robot(text)
        from torquestack.model import point_jacobian

        q = np.array([0.15, -0.2, 0.1])
        qd = np.zeros(3)
        tip = np.array([0.0, 0.0, -0.25])
        qdd, f = constrained_dynamics_kkt(model, q, qd, np.zeros(3), [(2, tip)])
        np.testing.assert_allclose(qdd, np.zeros(3), atol=1e-9)
        jac = point_jacobian(model, q, 2, tip)
        h = nonlinear_effects(model, q, qd)
        np.testing.assert_allclose(jac.T @ f, h, atol=1e-9)
        assert np.linalg.norm(f) > 1.0  # genuinely load bearing

    def test_singular_kkt_reported(self, pendulum):
        # a 3-row point pin on a 1-DoF pendulum leaves force components
        # undetermined; the saddle-point system is singular
        with pytest.raises(RuntimeError, match="singular"):
            constrained_dynamics_kkt(
                pendulum, np.zeros(1), np.zeros(1), np.zeros(1),
                [(0, np.array([0.0, 0.0, -0.7]))],
            )

    def test_constraint_residuals(self, rng):
        from torquestack.model import jdot_qdot, point_jacobian
        from torquestack.dynamics import crba

        model = random_chain(rng, 6)
        n = model.dof_count
        q, qd = rng.standard_normal((2, n))
        tau = rng.standard_normal(n)
        point = np.array([0.1, 0.0, 0.05])
        qdd, f = constrained_dynamics_kkt(model, q, qd, tau, [(5, point)])
        jac = point_jacobian(model, q, 5, point)
        bias = jdot_qdot(model, q, qd, 5, point)
        np.testing.assert_allclose(jac @ qdd + bias, np.zeros(3), atol=1e-9)
        m = crba(model, q)
        h = nonlinear_effects(model, q, qd)
        np.testing.assert_allclose(m @ qdd + h - jac.T @ f, tau, atol=1e-9)
