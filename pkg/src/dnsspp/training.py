"""Bi-level fitting: inner Laplace solve, outer gradient ascent on the Laplace evidence."""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import laplace
from .errors import DimensionError, DNSSPPError, FitError
from .features import FeatureMap, SpectralLayer, backward, forward_with_cache, init_map
from .integrals import (DEFAULT_ORDER, analytic_stats_vjp, compute_stats,
                        quadrature_rule)
from .window import Window

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    layers: list = field(default_factory=lambda: [50])
    tie: object = False
    epochs: int = 100
    lr: float = 1e-2
    tol: float = 1e-8
    max_iter: int = 100
    order: int = None
    seed: int = 0
    alpha_init: float = 1.0
    grad_mode: str = "frozen"

    def __post_init__(self):
        self.layers = [int(w) for w in self.layers]
        if not self.layers or min(self.layers) < 1:
            raise ValueError(f"layer widths must be >= 1, got {self.layers}")
        if int(self.epochs) < 1:
            raise ValueError("epochs must be >= 1")
        if not float(self.lr) > 0:
            raise ValueError("learning rate must be positive")
        if self.grad_mode not in ("frozen", "finite_difference"):
            raise ValueError(f"unknown grad_mode {self.grad_mode!r}")
        self.epochs = int(self.epochs)
        self.lr = float(self.lr)
        if not isinstance(self.tie, bool):
            self.tie = [bool(t) for t in self.tie]

    @property
    def ties(self):
        if isinstance(self.tie, bool):
            return [self.tie] * len(self.layers)
        return list(self.tie)

    def resolved_order(self, dim):
        return self.order if self.order is not None else DEFAULT_ORDER[dim]

    def to_dict(self):
        return asdict(self)


# -- parameter packing -------------------------------------------------------
#
# Per layer: omega1 rows, omega2 rows, b1, b2, log sigma; alpha last.
# Tied layers store a single (omega, b) block since the two copies are equal.

def param_shapes(fmap):
    return [(layer.width, layer.input_dim, layer.tie) for layer in fmap.layers]


def pack_params(fmap, alpha):
    parts = []
    for layer in fmap.layers:
        parts.append(layer.omega1.ravel())
        if not layer.tie:
            parts.append(layer.omega2.ravel())
        parts.append(layer.b1)
        if not layer.tie:
            parts.append(layer.b2)
        parts.append([np.log(layer.sigma)])
    parts.append([alpha])
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def n_params(shapes):
    total = 1
    for width, d_in, tie in shapes:
        blocks = 1 if tie else 2
        total += blocks * (width * d_in + width) + 1
    return total


def unpack_params(vec, shapes):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (n_params(shapes),):
        raise DimensionError(f"expected {n_params(shapes)} parameters, got {vec.shape}")
    pos = 0

    def take(n):
        nonlocal pos
        out = vec[pos:pos + n]
        pos += n
        return out

    layers = []
    for width, d_in, tie in shapes:
        o1 = take(width * d_in).reshape(width, d_in)
        o2 = o1 if tie else take(width * d_in).reshape(width, d_in)
        b1 = take(width)
        b2 = b1 if tie else take(width)
        sigma = float(np.exp(take(1)[0]))
        layers.append(SpectralLayer(o1, o2, b1, b2, sigma=sigma, tie=tie))
    alpha = float(take(1)[0])
    return FeatureMap(tuple(layers)), alpha


def _pack_grads(layer_grads, shapes, g_alpha):
    parts = []
    for g, (_, _, tie) in zip(layer_grads, shapes):
        if tie:
            parts += [(g["omega1"] + g["omega2"]).ravel(), g["b1"] + g["b2"]]
        else:
            parts += [g["omega1"].ravel(), g["omega2"].ravel(), g["b1"], g["b2"]]
        parts.append([g["log_sigma"]])
    parts.append([g_alpha])
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


# -- objective ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InnerSolution:
    fmap: FeatureMap
    alpha: float
    cache: laplace.DesignCache
    posterior: laplace.LaplacePosterior
    value: float


def inner_solve(params, events, config, shapes, warm_start=None):
    """Stats -> mode -> covariance at the hyperparameters ``params``."""
    fmap, alpha = unpack_params(params, shapes)
    stats = compute_stats(fmap, events.window, config.resolved_order(events.window.dim))
    cache = laplace.DesignCache.build(fmap, events, stats, alpha)
    beta0 = warm_start
    if beta0 is not None:
        u = cache.Phi @ beta0 + alpha
        if np.any(u == 0.0) or not np.all(np.isfinite(u)):
            beta0 = None
    mode = laplace.find_mode(cache, beta0, tol=config.tol, max_iter=config.max_iter)
    post = laplace.laplace_posterior(cache, mode)
    return InnerSolution(fmap, alpha, cache, post, laplace.log_marginal(cache, post))


def marginal_objective(params, events, config, shapes, warm_start=None):
    """Approximate log marginal likelihood at ``params``."""
    return inner_solve(params, events, config, shapes, warm_start).value


def frozen_objective(params, events, config, shapes, mode):
    """Evidence with the weights frozen at ``mode``: ``Q`` still follows ``params``."""
    fmap, alpha = unpack_params(params, shapes)
    stats = compute_stats(fmap, events.window, config.resolved_order(events.window.dim))
    cache = laplace.DesignCache.build(fmap, events, stats, alpha)
    post = laplace.laplace_posterior(cache, mode)
    return laplace.log_marginal(cache, post)


def _frozen_gradient(sol, events, config, shapes):
    fmap, alpha, cache, post = sol.fmap, sol.alpha, sol.cache, sol.posterior
    beta, Q = post.mode, post.Q
    Phi = cache.Phi
    window = events.window
    u = Phi @ beta + alpha
    PQ = Phi @ Q
    s = np.einsum("ij,ij->i", PQ, Phi)

    # d/dPsi(x_i) of sum log u^2 and of -log|Q^{-1}|/2
    g_phi = (2.0 / u + 2.0 * s / u**3)[:, None] * beta[None, :] - 2.0 * PQ / (u * u)[:, None]
    gM = -np.outer(beta, beta) - Q
    gm = -2.0 * alpha * beta
    g_alpha = float(np.sum(2.0 / u) - 2.0 * beta @ cache.stats.m
                    - 2.0 * alpha * cache.stats.volume + 2.0 * np.sum(s / u**3))

    pts = events.points - window.center
    if len(pts):
        _, fcache = forward_with_cache(fmap, pts)
        grads = backward(fmap, fcache, g_phi)
    else:
        grads = [_zero_grads(layer) for layer in fmap.layers]

    if fmap.depth == 1:
        extra = [analytic_stats_vjp(fmap, window, gM, gm)]
    else:
        nodes, w = quadrature_rule(window, config.resolved_order(window.dim))
        P, qcache = forward_with_cache(fmap, nodes)
        G = gM + gM.T
        gP = w[:, None] * (P @ G + gm[None, :])
        extra = backward(fmap, qcache, gP)
    for g, e in zip(grads, extra):
        for k in g:
            g[k] = g[k] + e[k]
    return _pack_grads(grads, shapes, g_alpha)


def _zero_grads(layer):
    return {"omega1": np.zeros_like(layer.omega1), "omega2": np.zeros_like(layer.omega2),
            "b1": np.zeros(layer.width), "b2": np.zeros(layer.width), "log_sigma": 0.0}


def hyper_gradient(params, events, config, shapes, warm_start=None, solution=None,
                   mode=None, step=1e-5):
    """Gradient of the Laplace evidence w.r.t. the packed hyperparameters.

    ``mode="frozen"`` (default from ``config.grad_mode``) holds the posterior
    mode fixed and differentiates the joint and ``log|Q|`` analytically.
    ``mode="finite_difference"`` differentiates through the whole inner solve
    by central differences, each evaluation warm-started from ``warm_start``.
    """
    mode = mode or config.grad_mode
    params = np.asarray(params, dtype=np.float64)
    if mode == "finite_difference":
        grad = np.empty_like(params)
        for k in range(params.size):
            h = step * (1.0 + abs(params[k]))
            e = np.zeros_like(params)
            e[k] = h
            fp = marginal_objective(params + e, events, config, shapes, warm_start)
            fm = marginal_objective(params - e, events, config, shapes, warm_start)
            grad[k] = (fp - fm) / (2.0 * h)
        return grad
    if solution is None:
        solution = inner_solve(params, events, config, shapes, warm_start)
    return _frozen_gradient(solution, events, config, shapes)


# -- fitted model ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FittedModel:
    fmap: FeatureMap
    alpha: float
    posterior: laplace.LaplacePosterior
    stats: object
    window: Window
    trace: tuple = ()
    config: FitConfig = None
    best_epoch: int = 0

    def features(self, x):
        """Feature map evaluated at raw (uncentered) coordinates."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.fmap(x - self.window.center)

    @property
    def log_marginal(self):
        return self.trace[self.best_epoch] if self.trace else None

    def to_dict(self):
        post = self.posterior
        return {
            "format": "dnsspp-model/1",
            "window": self.window.to_list(),
            "feature_map": self.fmap.to_dict(),
            "alpha": self.alpha,
            "mode": post.mode.tolist(),
            "Q": post.Q.ravel().tolist(),
            "logdet_Q": post.logdet_Q,
            "log_joint": post.log_joint,
            "grad_norm": post.grad_norm,
            "trace": list(self.trace),
            "best_epoch": self.best_epoch,
            "config": self.config.to_dict() if self.config else None,
        }

    @classmethod
    def from_dict(cls, d):
        window = Window.from_list(d["window"])
        fmap = FeatureMap.from_dict(d["feature_map"])
        R = fmap.output_dim
        post = laplace.LaplacePosterior(
            mode=np.asarray(d["mode"], dtype=np.float64),
            Q=np.asarray(d["Q"], dtype=np.float64).reshape(R, R),
            logdet_Q=d["logdet_Q"],
            log_joint=d["log_joint"],
            grad_norm=d.get("grad_norm", 0.0),
        )
        config = FitConfig(**d["config"]) if d.get("config") else None
        order = config.resolved_order(window.dim) if config else None
        stats = compute_stats(fmap, window, order)
        return cls(fmap, d["alpha"], post, stats, window, tuple(d["trace"]), config,
                   d.get("best_epoch", 0))

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit(events, config, callback=None):
    """Run the bi-level loop for ``config.epochs`` iterations.

    Every epoch: window stats -> posterior mode (warm-started) -> covariance ->
    one gradient-ascent step on the hyperparameters. The model from the epoch
    with the highest evidence is returned.
    """
    fmap = init_map(config.layers, events.window.dim, seed=config.seed, tie=config.ties)
    shapes = param_shapes(fmap)
    params = pack_params(fmap, config.alpha_init)
    trace = []
    best = None
    warm = None
    for epoch in range(config.epochs):
        try:
            sol = inner_solve(params, events, config, shapes, warm)
            trace.append(sol.value)
            if best is None or sol.value > best[0].value:
                best = (sol, epoch)
            grad = hyper_gradient(params, events, config, shapes, warm, solution=sol)
        except (DNSSPPError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise FitError(f"epoch {epoch}: {exc}", epoch=epoch, trace=trace) from exc
        if not np.all(np.isfinite(grad)):
            raise FitError(f"epoch {epoch}: non-finite hyper-gradient", epoch=epoch, trace=trace)
        if callback is not None:
            callback(epoch, sol.value)
        params = params + config.lr * grad
        warm = sol.posterior.mode
    sol, epoch = best
    return FittedModel(sol.fmap, sol.alpha, sol.posterior, sol.cache.stats, events.window,
                       tuple(trace), config, epoch)
