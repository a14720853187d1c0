"""Brute-force reference solvers for checking the prioritized controllers.

These deliberately use a different algorithmic route than the controllers
(null-space re-parameterization and saddle-point factorizations instead of
recursive projectors), so agreement between the two is meaningful evidence.
Performance is a non-goal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import crba, nonlinear_effects
from .model import RobotModel, compute_body_motion, compute_world_kinematics, jdot_qdot, point_jacobian


@dataclass(frozen=True)
class LexLevel:
    """One priority level of a lexicographic least-squares problem."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("level matrix and target dimensions differ")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite level data")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class LexSolution:
    x: np.ndarray
    unique: bool
    level_costs: tuple[float, ...]


def _null_basis(a: np.ndarray, rank_tol: float) -> np.ndarray:
    """Orthonormal columns spanning null(A)."""
    if a.size == 0:
        return np.eye(a.shape[1])
    _, s, vt = np.linalg.svd(a)
    cutoff = rank_tol * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return vt[rank:].T


def lex_lsq(levels: Sequence[LexLevel], rank_tol: float = 1e-10) -> LexSolution:
    """Sequential lexicographic least squares.

    Each level minimizes |A_i x - b_i|^2 over the argmin set of all previous
    levels, implemented by re-parameterizing x = x0 + Z y with Z an
    orthonormal null-space basis and recursing. If freedom remains after the
    last level the minimum-norm representative is returned with
    unique=False.
    """
    if not levels:
        raise ValueError("need at least one level")
    n = levels[0].a.shape[1]
    x = np.zeros(n)
    z = np.eye(n)
    costs = []
    for level in levels:
        if level.a.shape[1] != n:
            raise ValueError("inconsistent variable count across levels")
        if z.shape[1] == 0:
            costs.append(float(np.sum((level.a @ x - level.b) ** 2)))
            continue
        a_red = level.a @ z
        rhs = level.b - level.a @ x
        y, *_ = np.linalg.lstsq(a_red, rhs, rcond=rank_tol)
        x = x + z @ y
        costs.append(float(np.sum((level.a @ x - level.b) ** 2)))
        z = z @ _null_basis(a_red, rank_tol)
    return LexSolution(x=x, unique=z.shape[1] == 0, level_costs=tuple(costs))


def eq_qp(w: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimize |W^-1/2 x|^2 subject to A x = b, via the KKT system.

    Stationarity: W^-1 x = A^T nu, so the saddle-point system solved is
    [[W^-1, A^T], [A, 0]] (x, -nu) = (0, b). Raises on inconsistent
    constraints.
    """
    w = np.asarray(w, dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m, n = a.shape
    w_inv = np.linalg.inv(w)
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = w_inv
    kkt[:n, n:] = a.T
    kkt[n:, :n] = a
    rhs = np.concatenate([np.zeros(n), b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    x = sol[:n]
    scale = 1.0 + np.linalg.norm(a) * np.linalg.norm(x) + np.linalg.norm(b)
    if np.linalg.norm(a @ x - b) > 1e-8 * scale:
        raise ValueError("inconsistent constraints: A x = b has no solution")
    return x


def constrained_dynamics_kkt(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    tau: np.ndarray,
    contacts: Sequence[tuple[int, np.ndarray]] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Accelerations and contact forces of the rigidly constrained system.

    contacts is a sequence of (link index, point in link frame) pairs, each
    contributing three holonomic rows J_c qdd = -Jdot_c qd. Solves the
    saddle-point system [[M, -J_c^T], [J_c, 0]] (qdd, f) = (tau - h, b)
    exactly; f is the constraint force acting on the robot.
    """
    n = model.dof_count
    m = crba(model, q)
    h = nonlinear_effects(model, q, qd)
    if not contacts:
        return np.linalg.solve(m, np.asarray(tau, dtype=float) - h), np.zeros(0)

    kin = compute_world_kinematics(model, q)
    motion = compute_body_motion(model, q, qd)
    rows = []
    bias = []
    for body, point in contacts:
        rows.append(point_jacobian(model, q, body, point, kin))
        bias.append(jdot_qdot(model, q, qd, body, point, motion))
    j_c = np.vstack(rows)
    b = -np.concatenate(bias)

    k = j_c.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = m
    kkt[:n, n:] = -j_c.T
    kkt[n:, :n] = j_c
    rhs = np.concatenate([np.asarray(tau, dtype=float) - h, b])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"singular contact KKT system: {exc}") from None
    return sol[:n], sol[n:]
