"""Closed-form weighted alignment and the GNC-TLS robust pose solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSolutionError
from .geometry import Pose


@dataclass(frozen=True)
class GncConfig:
    noise_bound: float = 0.2
    mu_update_factor: float = 1.4
    max_iterations: int = 100
    convergence_tol: float = 1e-6

    def validate(self) -> None:
        if self.noise_bound <= 0:
            raise ValueError("noise_bound must be positive")
        if self.mu_update_factor <= 1.0:
            raise ValueError("mu_update_factor must be > 1")
        if self.max_iterations < 1 or self.convergence_tol <= 0:
            raise ValueError("max_iterations >= 1 and convergence_tol > 0 required")


@dataclass(frozen=True)
class GncResult:
    pose: Pose
    weights: np.ndarray
    iterations: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)
    # (before, after) value of the mu-surrogate around each weighted solve
    surrogate_steps: list[tuple[float, float]] = field(default_factory=list)

    @property
    def inliers(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0.5)


def weighted_horn(src, dst, weights=None) -> Pose:
    """Minimize ``sum w_i |dst_i - R src_i - t|^2`` over SE(3) in closed form."""
    X = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    Y = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    w = np.ones(len(X)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(X) != len(Y) or len(X) != len(w):
        raise ValueError("src, dst and weights must have equal length")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if np.count_nonzero(w > 0) < 3 or w.sum() <= 0:
        raise DegenerateSolutionError("need at least 3 positively weighted pairs")
    wn = w / w.sum()
    cx = wn @ X
    cy = wn @ Y
    Xc = X - cx
    Yc = Y - cy
    scatter = np.linalg.eigvalsh((Xc * wn[:, None]).T @ Xc)
    if scatter[1] <= 1e-12 * max(scatter[2], 1e-300):
        raise DegenerateSolutionError("source points are collinear: rotation is rank-deficient")
    H = (Xc * wn[:, None]).T @ Yc
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0])
    R = Vt.T @ D @ U.T
    return Pose(R, cy - R @ cx)


def residuals(pose: Pose, src, dst) -> np.ndarray:
    return np.linalg.norm(np.asarray(dst, float) - pose.apply(src), axis=1)


def residual(pose: Pose, corr) -> float:
    """``|dst_mean - R src_mean - t|`` for one correspondence."""
    return float(np.linalg.norm(np.asarray(corr.dst_mean, float) - pose.rotation @ corr.src_mean - pose.translation))


def tls_objective(r2: np.ndarray, noise_bound: float) -> float:
    return float(np.minimum(r2, noise_bound**2).sum())


def tls_surrogate(r2: np.ndarray, mu: float, c2: float) -> float:
    """Graduated TLS surrogate ``sum rho_mu(r_i)``; tends to the TLS loss as mu grows."""
    upper = (mu + 1.0) / mu * c2
    lower = mu / (mu + 1.0) * c2
    rho = np.where(r2 >= upper, c2, r2)
    mid = (r2 > lower) & (r2 < upper)
    r = np.sqrt(r2[mid])
    rho[mid] = 2.0 * np.sqrt(c2 * mu * (mu + 1.0)) * r - mu * (c2 + r2[mid])
    return float(rho.sum())


def _tls_weights(r2: np.ndarray, mu: float, c2: float) -> np.ndarray:
    upper = (mu + 1.0) / mu * c2
    lower = mu / (mu + 1.0) * c2
    w = np.empty_like(r2)
    hi = r2 >= upper
    lo = r2 <= lower
    mid = ~(hi | lo)
    w[hi] = 0.0
    w[lo] = 1.0
    w[mid] = np.sqrt(c2 * mu * (mu + 1.0) / r2[mid]) - mu
    return np.clip(w, 0.0, 1.0)


def gnc_tls_solve(src, dst, cfg: GncConfig = GncConfig()) -> GncResult:
    """Truncated-least-squares registration by graduated non-convexity.

    Alternates the weighted closed-form solve with the TLS weight update while
    the control parameter ``mu`` grows geometrically, until the weights stop
    changing. The weights are the derivative of the concave surrogate, so each
    weighted solve can only lower the surrogate at the current ``mu``; those
    before/after values are kept in ``surrogate_steps``. ``objective_history``
    holds the plain truncated objective ``sum min(r_i^2, c^2)`` after each
    solve. The returned pose is refit on the final inlier set (weight > 0.5).
    """
    cfg.validate()
    X = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    Y = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(X) < 3:
        raise DegenerateSolutionError(f"need at least 3 correspondences, got {len(X)}")
    c2 = cfg.noise_bound**2
    w = np.ones(len(X))
    pose = weighted_horn(X, Y, w)
    r2 = residuals(pose, X, Y) ** 2
    history = [tls_objective(r2, cfg.noise_bound)]
    steps: list[tuple[float, float]] = []
    r2_max = float(r2.max())
    if r2_max <= c2:
        return GncResult(pose, w, 0, True, history, steps)
    mu = c2 / (2.0 * r2_max - c2)

    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        w_new = _tls_weights(r2, mu, c2)
        if np.count_nonzero(w_new > 0) < 3:
            raise DegenerateSolutionError("fewer than 3 correspondences survive the TLS weighting")
        before = tls_surrogate(r2, mu, c2)
        pose = weighted_horn(X, Y, w_new)
        r2 = residuals(pose, X, Y) ** 2
        steps.append((before, tls_surrogate(r2, mu, c2)))
        history.append(tls_objective(r2, cfg.noise_bound))
        delta = float(np.abs(w_new - w).max())
        w = w_new
        if delta < cfg.convergence_tol:
            converged = True
            break
        mu *= cfg.mu_update_factor

    inliers = w > 0.5
    if np.count_nonzero(inliers) < 3:
        raise DegenerateSolutionError(f"only {np.count_nonzero(inliers)} inliers at convergence")
    pose = weighted_horn(X, Y, inliers.astype(np.float64))
    return GncResult(pose, w, it, converged, history, steps)
