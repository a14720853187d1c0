"""Pseudoinverse and null-space machinery for prioritized task resolution.

All pseudoinverses are SVD-based. Two distinct regularization modes are used
and must not be conflated:

* task resolution uses the damped gain filter sigma / (sigma^2 + damping^2),
  which bounds the pseudoinverse norm by 1 / (2 damping);
* null-space projectors use hard truncation at ``sigma_min`` with no damping,
  so that directions treated as rank-deficient are removed outright.

A configuration is coherent when sigma_min (sigma_min^2 + damping^2)^-1 < z:
directions truncated from projectors then have negligible gain in the damped
pseudoinverses, so no control direction is claimed by two tasks at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky

# relative floor under which singular values count as numerical zeros
_REL_FLOOR = 100.0 * np.finfo(float).eps


@dataclass(frozen=True)
class PinvConfig:
    """Damping / truncation / coherence parameters for all pseudoinverses."""

    damping: float = 0.02
    sigma_min: float = 2.5e-8
    z: float = 1e-4

    def __post_init__(self):
        if self.damping < 0.0:
            raise ValueError("damping must be >= 0")
        if self.sigma_min < 0.0:
            raise ValueError("sigma_min must be >= 0")
        if self.z <= 0.0:
            raise ValueError("z must be > 0")


def validate_pinv_config(cfg: PinvConfig) -> str | None:
    """Return None if the configuration is coherent, else a violation report.

    With damping = 0 the pseudoinverses are exact and any sigma_min is
    accepted (exact-pseudoinverse mode).
    """
    if cfg.damping == 0.0:
        return None
    gain = cfg.sigma_min / (cfg.sigma_min**2 + cfg.damping**2)
    if gain < cfg.z:
        return None
    return (
        f"coherence violated: sigma_min (sigma_min^2 + damping^2)^-1 = {gain:.6g} "
        f">= z = {cfg.z:.6g}"
    )


@dataclass(frozen=True)
class WeightSpec:
    """Weight matrix selector for weighted pseudoinverses.

    kinds: "identity"; "explicit" (SPD matrix supplied); "mass_inverse"
    (W = M^-1, the dynamically-consistent metric); "mass_squared" (the
    torque-space weight V = M^2, which corresponds to W = identity in the
    acceleration-space form of the control laws).
    """

    kind: str = "identity"
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "explicit", "mass_inverse", "mass_squared"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "explicit":
            w = _check_finite(self.matrix)
            if not np.allclose(w, w.T, atol=1e-10):
                raise ValueError("explicit weight must be symmetric")
            _weight_factor(w)

    def resolve(self, mass_matrix: np.ndarray | None = None) -> np.ndarray | None:
        """Concrete W matrix, or None for identity."""
        if self.kind in ("identity", "mass_squared"):
            return None
        if self.kind == "explicit":
            return self.matrix
        if mass_matrix is None:
            raise ValueError("mass_inverse weight needs the mass matrix")
        return np.linalg.inv(mass_matrix)


@dataclass(frozen=True)
class PinvInfo:
    """Spectrum summary of a pseudoinverse call, for controller diagnostics."""

    sigma_max: float
    sigma_min_retained: float
    rank: int


def _check_finite(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite matrix")
    return a


def _svd_pinv(a: np.ndarray, damping: float, sigma_min: float):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    floor = _REL_FLOOR * (s[0] if s.size else 0.0)
    keep = s > max(sigma_min, floor)
    s_kept = s[keep]
    if damping > 0.0:
        gains = s_kept / (s_kept**2 + damping**2)
    else:
        gains = 1.0 / s_kept
    pinv = (vt[keep].T * gains) @ u[:, keep].T
    info = PinvInfo(
        sigma_max=float(s[0]) if s.size else 0.0,
        sigma_min_retained=float(s_kept[-1]) if s_kept.size else 0.0,
        rank=int(keep.sum()),
    )
    return pinv, info


def damped_pinv(
    a: np.ndarray,
    damping: float = 0.0,
    sigma_min: float = 0.0,
    return_info: bool = False,
):
    """Damped pseudoinverse with gain filter sigma / (sigma^2 + damping^2).

    With damping = 0 this is the Moore-Penrose pseudoinverse (numerically
    zero singular values dropped). Singular values at or below sigma_min are
    truncated before damping is applied.
    """
    a = _check_finite(a)
    if damping < 0.0:
        raise ValueError("damping must be >= 0")
    pinv, info = _svd_pinv(a, damping, sigma_min)
    return (pinv, info) if return_info else pinv


def _weight_factor(w: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor G with G G^T = W; raises if W is not SPD."""
    w = _check_finite(w)
    if not np.allclose(w, w.T, atol=1e-10):
        raise ValueError("weight matrix must be symmetric")
    try:
        return cholesky(w, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"weight matrix is not positive definite: {exc}") from None


def weighted_pinv(
    a: np.ndarray,
    w: np.ndarray | None = None,
    damping: float = 0.0,
    sigma_min: float = 0.0,
    return_info: bool = False,
):
    """W-weighted pseudoinverse G (A G)^+ with G a factor of W.

    For damping = 0 and full-row-rank A this equals W A^T (A W A^T)^-1, the
    minimizer selection of |W^-1/2 x|^2 subject to A x = b. Damping and
    truncation act on the singular values of the scaled matrix A G. W = None
    means identity.
    """
    a = _check_finite(a)
    if w is None:
        return damped_pinv(a, damping, sigma_min, return_info)
    g = _weight_factor(w)
    pinv_scaled, info = _svd_pinv(a @ g, damping, sigma_min)
    pinv = g @ pinv_scaled
    return (pinv, info) if return_info else pinv


def null_projector(a: np.ndarray, sigma_min: float = 2.5e-8) -> np.ndarray:
    """Orthogonal projector onto the null space of A: N = I - A^+ A.

    The internal pseudoinverse uses hard truncation at sigma_min and no
    damping. N is symmetric and idempotent by construction.
    """
    a = _check_finite(a)
    n = a.shape[1]
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    floor = _REL_FLOOR * (s[0] if s.size else 0.0)
    rows = vt[s > max(sigma_min, floor)]
    proj = np.eye(n) - rows.T @ rows
    return 0.5 * (proj + proj.T)


def weighted_null_projector(
    a: np.ndarray, w: np.ndarray | None, sigma_min: float = 2.5e-8
) -> np.ndarray:
    """Projector N = I - A^+_W A; nonorthogonal (idempotent only) for W != I."""
    a = _check_finite(a)
    if w is None:
        return null_projector(a, sigma_min)
    pinv = weighted_pinv(a, w, damping=0.0, sigma_min=sigma_min)
    return np.eye(a.shape[1]) - pinv @ a


def recursive_projector_update(
    n_prev: np.ndarray,
    j_next: np.ndarray,
    w: np.ndarray | None = None,
    sigma_min: float = 2.5e-8,
) -> np.ndarray:
    """Shrink projector N by the null space of one more task Jacobian.

    N' = N - (J N)^+_W (J N). Truncation only, never damping: projector rank
    decisions must be hard so lower-priority tasks cannot leak into
    higher-priority directions.
    """
    jn = _check_finite(j_next) @ n_prev
    pinv = weighted_pinv(jn, w, damping=0.0, sigma_min=sigma_min)
    out = n_prev - pinv @ jn
    if w is None:
        out = 0.5 * (out + out.T)
    return out
