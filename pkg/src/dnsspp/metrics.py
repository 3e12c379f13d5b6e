"""Predictive moments, expected test log-likelihood and RMSE.

Under the Laplace posterior ``f(x) + alpha ~ N(mu(x), s2(x))`` and the
intensity is its square, so

    E[lambda] = mu^2 + s2,       Var[lambda] = 2 s2^2 + 4 mu^2 s2,
    E[log lambda] = -G(-mu^2 / (2 s2)) + log(s2 / 2) - gamma

with ``G(z) = 2z sum_j j! z^j / ((2)_j (3/2)_j)``.
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import digamma
from scipy.stats import poisson

from .errors import DimensionError, DomainError, WindowError
from .integrals import intensity_integral

log = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)

# float64 partial sums of the alternating series lose digits past |z| ~ 20
SERIES_LIMIT = -20.0
ASYMPTOTIC_LIMIT = -200.0


def predictive_f(model, x):
    """Mean and variance of ``f(x) + alpha`` at raw coordinates ``x``.

    Returns scalars for a single point, arrays for an ``(n, D)`` batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if not np.all(model.window.contains(X)):
        log.warning("predictive_f: %d point(s) outside the window (extrapolation)",
                    int(np.sum(~model.window.contains(X))))
    P = model.features(X)
    post = model.posterior
    mu = P @ post.mode + model.alpha
    var = np.maximum(np.einsum("ij,jk,ik->i", P, post.Q, P), 0.0)
    if single:
        return float(mu[0]), float(var[0])
    return mu, var


def predictive_intensity(mu, var):
    """Mean and variance of ``(g + mu)^2`` with ``g ~ N(0, var)``."""
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        raise DomainError("variance must be non-negative")
    mu2 = mu * mu
    mean = mu2 + var
    variance = 2.0 * var * var + 4.0 * mu2 * var
    if mean.ndim == 0:
        return float(mean), float(variance)
    return mean, variance


def _g_series(z, tol):
    total = 0.0
    term = 1.0
    j = 0
    while True:
        total += term
        term *= (j + 1.0) * z / ((j + 2.0) * (j + 1.5))
        j += 1
        if abs(term) < tol * (1.0 + abs(total)):
            return 2.0 * z * total


def _g_poisson(z):
    # -G(-lam) = 2 log 2 + gamma + E[psi(K + 1/2)],  K ~ Poisson(lam)
    lam = -z
    half = 40.0 * np.sqrt(lam) + 50.0
    k = np.arange(max(0, int(lam - half)), int(lam + half) + 1)
    return -(2.0 * np.log(2.0) + EULER_GAMMA + np.sum(poisson.pmf(k, lam) * digamma(k + 0.5)))


def _g_asymptotic(z):
    r = -0.5 / z
    return -(np.log(-4.0 * z) + EULER_GAMMA - r - 1.5 * r**2 - 5.0 * r**3 - 26.25 * r**4)


def g_tilde(z, tol=1e-12):
    """The series ``G(z)`` for ``z <= 0`` (vectorized).

    Direct partial sums down to ``z = -20``; below that the equivalent
    Poisson mixture of digammas, and past ``-200`` its asymptotic expansion.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr > 0) or not np.all(np.isfinite(z_arr)):
        raise DomainError("g_tilde is defined here for finite z <= 0")
    out = np.empty(z_arr.shape)
    for idx, zi in np.ndenumerate(z_arr):
        if zi == 0.0:
            out[idx] = 0.0
        elif zi >= SERIES_LIMIT:
            out[idx] = _g_series(zi, tol)
        elif zi >= ASYMPTOTIC_LIMIT:
            out[idx] = _g_poisson(zi)
        else:
            out[idx] = _g_asymptotic(zi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class GTildeTable:
    """Tabulated ``G`` on ``[z_min, 0]``; nodes stored in ascending order."""

    z: np.ndarray
    values: np.ndarray

    @property
    def z_min(self):
        return float(self.z[0])


def build_g_table(z_min=-50.0, nodes=4096, tol=1e-12):
    if not z_min < 0 or nodes < 2:
        raise ValueError("need z_min < 0 and nodes >= 2")
    # denser near 0 where the curvature is largest
    t = np.linspace(0.0, 1.0, nodes)
    a = 2.0
    z = z_min * np.expm1(a * t) / np.expm1(a)
    z[0] = 0.0
    z = z[::-1].copy()
    values = g_tilde(z, tol)
    z.setflags(write=False)
    values.setflags(write=False)
    return GTildeTable(z, values)


def g_lookup(table, z, return_flag=False):
    """Linear interpolation in ``table``.

    Arguments below ``z_min`` are evaluated directly instead and flagged.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    if np.any(z_arr > 0):
        raise DomainError("g_lookup argument must be <= 0")
    out = np.interp(z_arr, table.z, table.values)
    below = z_arr < table.z_min
    if np.any(below):
        log.debug("g_lookup: %d argument(s) below table range", int(np.sum(below)))
        out = np.where(below, g_tilde(np.where(below, z_arr, 0.0)), out)
    out = float(out) if np.ndim(out) == 0 else out
    if return_flag:
        return out, bool(np.any(below))
    return out


_DEFAULT_TABLE = None


def default_table():
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = build_g_table()
    return _DEFAULT_TABLE


def expected_log_squared(mu, var, table=None):
    """``E[log y^2]`` for ``y ~ N(mu, var)``; uses ``table`` for G when given."""
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0):
        raise DomainError("expected_log_squared needs var > 0")
    z = -(mu * mu) / (2.0 * var)
    g = g_tilde(z) if table is None else g_lookup(table, z)
    out = -g + np.log(var / 2.0) - EULER_GAMMA
    return float(out) if np.ndim(out) == 0 else out


def expected_intensity_integral(model):
    """``E_beta[int lambda] = b^T M b + tr(Q M) + 2 alpha b^T m + alpha^2 |X|``."""
    post = model.posterior
    return intensity_integral(model.stats, post.mode, model.alpha) + float(
        np.sum(post.Q * model.stats.M))


def expected_test_loglik(model, test, table=None):
    """Expected test log-likelihood under the Laplace posterior (constant-free)."""
    if test.window != model.window:
        raise WindowError(
            f"test window {test.window.to_list()} != model window {model.window.to_list()}")
    value = -expected_intensity_integral(model)
    if test.n:
        mu, var = predictive_f(model, test.points)
        value += float(np.sum(expected_log_squared(mu, var, table)))
    return value


@dataclass(frozen=True, eq=False)
class IntensityGrid:
    """Node-wise intensity mean and variance on a regular lattice."""

    axes: tuple
    mean: np.ndarray
    var: np.ndarray

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def locations(self):
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = ["x"] if len(self.axes) == 1 else ["x1", "x2"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["mean", "variance"])
            for loc, m, v in zip(self.locations, self.mean.ravel(), self.var.ravel()):
                w.writerow([repr(float(c)) for c in loc] + [repr(float(m)), repr(float(v))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=np.float64)
        D = len(header) - 2
        axes = tuple(np.unique(body[:, k]) for k in range(D))
        shape = tuple(len(a) for a in axes)
        if np.prod(shape) != len(body):
            raise DimensionError("CSV does not describe a regular grid")
        return cls(axes, body[:, D].reshape(shape), body[:, D + 1].reshape(shape))

    def to_json(self, path):
        doc = {"axes": [a.tolist() for a in self.axes], "shape": list(self.shape),
               "mean": self.mean.ravel().tolist(), "variance": self.var.ravel().tolist()}
        Path(path).write_text(json.dumps(doc))


def intensity_grid(model, resolution):
    """Evaluate the predictive intensity moments on a regular lattice over the window."""
    dim = model.window.dim
    res = [int(resolution)] * dim if np.isscalar(resolution) else [int(r) for r in resolution]
    if len(res) != dim or min(res) < 2:
        raise ValueError("resolution must be >= 2 per dimension")
    axes = tuple(np.linspace(lo, hi, r) for (lo, hi), r in zip(model.window.bounds, res))
    grid = IntensityGrid(axes, np.zeros(res), np.zeros(res))
    mu, var = predictive_f(model, grid.locations)
    mean, variance = predictive_intensity(mu, var)
    return IntensityGrid(axes, mean.reshape(res), variance.reshape(res))


def rmse(predicted, truth):
    """Root mean square difference of the grid means."""
    if predicted.shape != truth.shape or not all(
            np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(predicted.axes, truth.axes)):
        raise DimensionError("rmse needs identical grids")
    diff = predicted.mean - truth.mean
    return float(np.sqrt(np.mean(diff * diff)))
