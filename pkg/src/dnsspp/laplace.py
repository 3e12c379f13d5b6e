"""Laplace approximation of the posterior over feature weights.

With ``u_i = beta . Psi(x_i) + alpha`` the log joint (prior normalizer dropped) is

    sum_i log(u_i^2) - (beta^T M beta + 2 alpha beta^T m + alpha^2 |X|) - beta^T beta / 2

whose gradient and Hessian are available in closed form. The mode is found
by damped Newton that never lets any ``u_i`` change sign, so the iterate stays
in the nodal region it started in.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (DimensionError, NonConvergenceError, NumericalDegeneracyError,
                     SingularEventError)
from .features import map_forward
from .integrals import IntegralStats, intensity_integral

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class DesignCache:
    """Feature matrix at the events (rows ``Psi(x_i)``), window stats and offset."""

    Phi: np.ndarray
    stats: IntegralStats
    alpha: float

    def __post_init__(self):
        Phi = np.asarray(self.Phi, dtype=np.float64).reshape(-1, self.stats.size)
        if not np.all(np.isfinite(Phi)):
            raise ValueError("feature matrix has non-finite entries")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def n(self):
        return self.Phi.shape[0]

    @property
    def size(self):
        return self.stats.size

    @classmethod
    def build(cls, fmap, pattern, stats, alpha):
        """Evaluate the map at the (centered) events of ``pattern``."""
        pts = pattern.points - pattern.window.center
        Phi = map_forward(fmap, pts) if len(pts) else np.zeros((0, fmap.output_dim))
        return cls(Phi, stats, alpha)


@dataclass(frozen=True, eq=False)
class LaplacePosterior:
    mode: np.ndarray
    Q: np.ndarray
    logdet_Q: float
    log_joint: float
    grad_norm: float = 0.0
    iterations: int = 0

    @property
    def size(self):
        return self.mode.shape[0]


def _check_beta(cache, beta):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (cache.size,):
        raise DimensionError(f"beta must have shape ({cache.size},), got {beta.shape}")
    return beta


def _denominators(cache, beta):
    u = cache.Phi @ beta + cache.alpha
    if np.any(u == 0.0):
        i = int(np.flatnonzero(u == 0.0)[0])
        raise SingularEventError(f"event {i} has beta.Psi + alpha == 0")
    return u


def log_joint(cache, beta):
    beta = _check_beta(cache, beta)
    u = _denominators(cache, beta)
    return float(np.sum(np.log(u * u)) - intensity_integral(cache.stats, beta, cache.alpha)
                 - 0.5 * beta @ beta)


def joint_gradient(cache, beta):
    beta = _check_beta(cache, beta)
    u = _denominators(cache, beta)
    M, m = cache.stats.M, cache.stats.m
    return -(2.0 * M @ beta + beta) - 2.0 * cache.alpha * m + 2.0 * (cache.Phi.T @ (1.0 / u))


def joint_hessian(cache, beta):
    beta = _check_beta(cache, beta)
    u = _denominators(cache, beta)
    A = cache.Phi / u[:, None]
    H = -(2.0 * cache.stats.M + np.eye(cache.size)) - 2.0 * (A.T @ A)
    return 0.5 * (H + H.T)


def prior_mode(cache):
    """Mode without events: ``-2 alpha (2M + I)^{-1} m``."""
    P = 2.0 * cache.stats.M + np.eye(cache.size)
    return -2.0 * cache.alpha * linalg.solve(P, cache.stats.m, assume_a="pos")


def _max_step(u, du):
    """Largest ``t`` keeping every ``u + t du`` on the side of zero it started on."""
    toward = u * du < 0.0
    if not np.any(toward):
        return np.inf
    return float(np.min(-u[toward] / du[toward]))


def find_mode(cache, beta0=None, tol=1e-8, max_iter=100, trace=None):
    """Damped Newton ascent on :func:`log_joint`.

    ``trace``, if a list, receives the log joint of every accepted iterate.
    """
    beta = prior_mode(cache) if beta0 is None else _check_beta(cache, beta0).copy()
    if not np.all(np.isfinite(beta)):
        raise ValueError("initial beta must be finite")
    f = log_joint(cache, beta)
    if trace is not None:
        trace.append(f)
    gnorm = np.inf
    floor_hits = 0
    for it in range(max_iter + 1):
        g = joint_gradient(cache, beta)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= tol:
            return beta
        if it == max_iter:
            break
        H = joint_hessian(cache, beta)
        try:
            step = linalg.cho_solve(linalg.cho_factor(-H), g)
        except linalg.LinAlgError as exc:
            raise NumericalDegeneracyError("negative Hessian is not positive definite") from exc
        # predicted increase of the quadratic model; below it, f differences are rounding
        noise = 1e-12 * (1.0 + abs(f))
        quiet = 0.5 * (g @ step) <= noise
        # On very stiff problems the gradient cannot get below |H| * ulp(beta).
        # Two consecutive unmeasurable Newton gains mean the mode is resolved.
        floor_hits = floor_hits + 1 if quiet else 0
        if floor_hits >= 2:
            log.debug("find_mode: stopped at rounding floor, grad norm %.3e", gnorm)
            return beta
        u = cache.Phi @ beta + cache.alpha
        du = cache.Phi @ step
        t = min(1.0, 0.5 * _max_step(u, du))
        if t <= 0.0:
            raise SingularEventError("cannot move without crossing an event's zero")
        for _ in range(41):
            cand = beta + t * step
            u_new = cache.Phi @ cand + cache.alpha
            if np.all(u_new * u > 0.0):
                f_new = log_joint(cache, cand)
                if f_new >= f or (quiet and f_new >= f - noise):
                    break
            t *= 0.5
        else:
            raise NonConvergenceError(
                f"line search failed after 40 halvings (grad norm {gnorm:.3e})", gnorm)
        beta, f = cand, f_new
        if trace is not None:
            trace.append(f)
    raise NonConvergenceError(
        f"no convergence in {max_iter} Newton steps (grad norm {gnorm:.3e})", gnorm)


def laplace_posterior(cache, mode):
    """Gaussian approximation at ``mode``; ``Q = (-Hessian)^{-1}``."""
    mode = _check_beta(cache, mode)
    H = joint_hessian(cache, mode)
    try:
        c, lower = linalg.cho_factor(-H, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalDegeneracyError("precision matrix is not positive definite") from exc
    Q = linalg.cho_solve((c, lower), np.eye(cache.size))
    Q = 0.5 * (Q + Q.T)
    logdet_Q = -2.0 * float(np.sum(np.log(np.diag(c))))
    g = joint_gradient(cache, mode)
    return LaplacePosterior(
        mode=mode,
        Q=Q,
        logdet_Q=logdet_Q,
        log_joint=log_joint(cache, mode),
        grad_norm=float(np.max(np.abs(g))) if g.size else 0.0,
    )


def log_marginal(cache, posterior):
    """Laplace evidence: ``log_joint(mode) + log|Q| / 2 + (R / 2) log 2 pi``.

    Uses the same constant convention as :func:`log_joint` (prior normalizer dropped).
    """
    return float(posterior.log_joint + 0.5 * posterior.logdet_Q
                 + 0.5 * posterior.size * LOG_2PI)


def solve(cache, beta0=None, tol=1e-8, max_iter=100):
    """Mode plus Laplace posterior in one call."""
    mode = find_mode(cache, beta0, tol=tol, max_iter=max_iter)
    return laplace_posterior(cache, mode)
