"""Window integrals of the feature map: ``M = int Psi Psi^T dx`` and ``m = int Psi dx``.

All integrals are over the *centered* window ``[-d_1, d_1] x ... x [-d_D, d_D]``;
feature maps act on centered coordinates throughout the package.

Single-layer maps have closed forms (product-to-sum plus separable box
integrals of cosines). Deep maps use tensor-product Gauss-Legendre rules.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionError, UnsupportedConfigurationError, WindowError
from .features import FeatureMap, SpectralLayer, map_forward

SINC_EPS = 1e-8
# derivative of the box sinc loses ~(1/u)^2 digits to cancellation; switch earlier
DSINC_EPS = 1e-2

DEFAULT_ORDER = {1: 64, 2: 48}


@dataclass(frozen=True, eq=False)
class IntegralStats:
    M: np.ndarray
    m: np.ndarray
    volume: float
    method: str = "analytic"
    order: int = None

    @property
    def size(self):
        return self.m.shape[0]


def box_sinc(eta, d):
    """``S(eta, d) = int_{-d}^{d} cos(eta x) dx``, elementwise."""
    eta = np.asarray(eta, dtype=np.float64)
    u = eta * d
    small = np.abs(u) <= SINC_EPS
    safe = np.where(small, 1.0, eta)
    big = 2.0 * np.sin(u) / safe
    u2 = u * u
    series = 2.0 * d * (1.0 - u2 / 6.0 + u2 * u2 / 120.0)
    return np.where(small, series, big)


def box_sinc_deriv(eta, d):
    """``dS/deta``."""
    eta = np.asarray(eta, dtype=np.float64)
    u = eta * d
    small = np.abs(u) <= DSINC_EPS
    safe = np.where(small, 1.0, eta)
    big = 2.0 * (u * np.cos(u) - np.sin(u)) / (safe * safe)
    u2 = u * u
    series = 2.0 * d * d * u * (-1.0 / 3.0 + u2 / 30.0 - u2 * u2 / 840.0)
    return np.where(small, series, big)


def _half_widths(window):
    if not window.is_centered:
        raise WindowError(f"expected a centered window, got {window.to_list()}")
    return window.half_width


def _box_product(eta, d):
    """``prod_k S(eta_k, d_k)`` over the last axis of ``eta``."""
    return np.prod(box_sinc(eta, d), axis=-1)


def box_cosine_integral(eta, c, window):
    """``int_{[-d,d]^D} cos(eta . x + c) dx = cos(c) prod_k S(eta_k, d_k)``.

    The odd part ``-sin(c) sin(eta . x)`` integrates to zero over a symmetric box.
    """
    d = _half_widths(window)
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape[-1:] != (len(d),):
        raise DimensionError(f"eta must have {len(d)} components")
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(c))):
        raise ValueError("eta and c must be finite")
    out = np.cos(c) * _box_product(eta, d)
    return float(out) if np.ndim(out) == 0 else out


def box_sine_integral(eta, c, window):
    """``int sin(eta . x + c) dx = sin(c) prod_k S(eta_k, d_k)``."""
    d = _half_widths(window)
    eta = np.asarray(eta, dtype=np.float64)
    out = np.sin(c) * _box_product(eta, d)
    return float(out) if np.ndim(out) == 0 else out


def _single_layer(fmap):
    if isinstance(fmap, SpectralLayer):
        return fmap
    if fmap.depth != 1:
        raise UnsupportedConfigurationError(
            f"closed-form integrals need a single-layer map (depth {fmap.depth}); "
            "use quadrature_stats for deep maps"
        )
    return fmap.layers[0]


def _pair_terms(layer, d):
    """Yield ``(a, b, eta_minus, c_minus, eta_plus, c_plus)`` for the four
    frequency-set pairings; arrays are ``(R, R, D)`` and ``(R, R)``."""
    omegas = (layer.omega1, layer.omega2)
    biases = (layer.b1, layer.b2)
    for a in range(2):
        for b in range(2):
            oa, ob = omegas[a][:, None, :], omegas[b][None, :, :]
            ba, bb = biases[a][:, None], biases[b][None, :]
            yield a, b, oa - ob, ba - bb, oa + ob, ba + bb


def analytic_stats(fmap, window):
    """Closed-form ``M`` and ``m`` for a single-layer map over the centered window.

    Each product ``cos(u1 + c1) cos(u2 + c2)`` is split into
    ``(cos(u1 - u2 + c1 - c2) + cos(u1 + u2 + c1 + c2)) / 2`` and integrated
    with :func:`box_cosine_integral`. Coinciding frequencies (including the
    diagonal) fall into the small-argument branch of the sinc.
    """
    layer = _single_layer(fmap)
    window = window if window.is_centered else window.centered()
    d = window.half_width
    if layer.input_dim != len(d):
        raise DimensionError("layer input dim does not match window dimension")
    s = layer.scale
    R = layer.width
    M = np.zeros((R, R))
    for _, _, em, cm, ep, cp in _pair_terms(layer, d):
        M += np.cos(cm) * _box_product(em, d) + np.cos(cp) * _box_product(ep, d)
    M *= 0.5 * s * s
    M = 0.5 * (M + M.T)
    m = s * (np.cos(layer.b1) * _box_product(layer.omega1, d)
             + np.cos(layer.b2) * _box_product(layer.omega2, d))
    return IntegralStats(M, m, window.volume, "analytic", None)


def _grad_box_cos(eta, c, d):
    """Gradients of ``cos(c) prod_k S(eta_k, d_k)`` w.r.t. ``eta`` (last axis) and ``c``."""
    S = box_sinc(eta, d)
    dS = box_sinc_deriv(eta, d)
    D = eta.shape[-1]
    g_eta = np.empty_like(eta)
    for k in range(D):
        others = np.ones(eta.shape[:-1])
        for l in range(D):
            if l != k:
                others = others * S[..., l]
        g_eta[..., k] = dS[..., k] * others
    prod = np.prod(S, axis=-1)
    g_eta *= np.cos(c)[..., None]
    g_c = -np.sin(c) * prod
    return g_eta, g_c


def analytic_stats_vjp(fmap, window, gM, gm):
    """Gradient of ``sum(gM * M) + gm . m`` w.r.t. the layer parameters.

    Returns a dict with ``omega1, omega2, b1, b2, log_sigma``.
    """
    layer = _single_layer(fmap)
    window = window if window.is_centered else window.centered()
    d = window.half_width
    G = 0.5 * (gM + gM.T)
    s = layer.scale
    g_omega = [np.zeros_like(layer.omega1), np.zeros_like(layer.omega2)]
    g_b = [np.zeros(layer.width), np.zeros(layer.width)]
    M_unscaled = np.zeros_like(G)
    for a, _, em, cm, ep, cp in _pair_terms(layer, d):
        ge_m, gc_m = _grad_box_cos(em, cm, d)
        ge_p, gc_p = _grad_box_cos(ep, cp, d)
        # M is symmetric, so d/d(theta_ai) picks up the row and the column
        # occurrence equally: factor 2 * (s^2 / 2) = s^2.
        g_omega[a] += s * s * np.einsum("ij,ijk->ik", G, ge_m + ge_p)
        g_b[a] += s * s * np.sum(G * (gc_m + gc_p), axis=1)
        M_unscaled += np.cos(cm) * _box_product(em, d) + np.cos(cp) * _box_product(ep, d)
    M = 0.5 * s * s * M_unscaled
    m = np.zeros(layer.width)
    for a, (om, bb) in enumerate(((layer.omega1, layer.b1), (layer.omega2, layer.b2))):
        ge, gc = _grad_box_cos(om, bb, d)
        g_omega[a] += s * gm[:, None] * ge
        g_b[a] += s * gm * gc
        m += s * np.cos(bb) * _box_product(om, d)
    return {
        "omega1": g_omega[0],
        "omega2": g_omega[1],
        "b1": g_b[0],
        "b2": g_b[1],
        "log_sigma": float(2.0 * np.sum(G * M) + gm @ m),
    }


@lru_cache(maxsize=32)
def _gl_rule(order, half_widths):
    x, w = np.polynomial.legendre.leggauss(order)
    axes = [x * dk for dk in half_widths]
    weights = [w * dk for dk in half_widths]
    grids = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrid = np.meshgrid(*weights, indexing="ij")
    wq = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    nodes.setflags(write=False)
    wq.setflags(write=False)
    return nodes, wq


def quadrature_rule(window, order):
    """Tensor Gauss-Legendre nodes ``(Q, D)`` and weights ``(Q,)`` on the centered window."""
    if order < 2:
        raise ValueError("quadrature order must be >= 2")
    window = window if window.is_centered else window.centered()
    return _gl_rule(int(order), tuple(float(v) for v in window.half_width))


def quadrature_stats(fmap, window, order=None):
    """``M`` and ``m`` by tensor Gauss-Legendre quadrature (any depth)."""
    if isinstance(fmap, SpectralLayer):
        fmap = FeatureMap((fmap,))
    window = window if window.is_centered else window.centered()
    if order is None:
        order = DEFAULT_ORDER[window.dim]
    nodes, w = quadrature_rule(window, order)
    P = map_forward(fmap, nodes)
    Pw = P * w[:, None]
    M = Pw.T @ P
    M = 0.5 * (M + M.T)
    m = Pw.sum(axis=0)
    return IntegralStats(M, m, window.volume, "quadrature", int(order))


def compute_stats(fmap, window, order=None):
    """Analytic stats for one layer, quadrature otherwise."""
    if fmap.depth == 1:
        return analytic_stats(fmap, window)
    return quadrature_stats(fmap, window, order)


def intensity_integral(stats, beta, alpha):
    """``int (beta . Psi + alpha)^2 dx = b^T M b + 2 alpha b^T m + alpha^2 |X|``."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != stats.m.shape:
        raise DimensionError(f"beta has shape {beta.shape}, stats expect {stats.m.shape}")
    return float(beta @ stats.M @ beta + 2.0 * alpha * (beta @ stats.m)
                 + alpha * alpha * stats.volume)
