"""Nonstationary sparse spectral feature maps and their deep compositions.

A layer maps ``x`` (length ``D_in``) to ``R`` features

    phi_r(x) = sigma / sqrt(2R) * [cos(w1_r . x + b1_r) + cos(w2_r . x + b2_r)]

and a :class:`FeatureMap` composes layers, ``Psi = phi_L o ... o phi_1``.
With one layer this is the shallow nonstationary model; two or more layers
give the deep variant. A *tied* layer forces ``w1 = w2`` and ``b1 = b2``,
which turns it into ordinary stationary random Fourier features.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralLayer:
    omega1: np.ndarray
    omega2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    sigma: float = 1.0
    tie: bool = False

    def __post_init__(self):
        o1 = _frozen(np.atleast_2d(self.omega1))
        o2 = _frozen(np.atleast_2d(self.omega2))
        b1 = _frozen(np.ravel(self.b1))
        b2 = _frozen(np.ravel(self.b2))
        if o1.shape != o2.shape:
            raise DimensionError(f"frequency blocks differ: {o1.shape} vs {o2.shape}")
        if b1.shape != (o1.shape[0],) or b2.shape != (o1.shape[0],):
            raise DimensionError("bias length must equal layer width")
        if o1.shape[0] < 1:
            raise DimensionError("layer width must be >= 1")
        sigma = float(self.sigma)
        if not sigma > 0 or not np.isfinite(sigma):
            raise ValueError(f"sigma must be positive and finite, got {sigma}")
        for a in (o1, o2, b1, b2):
            if not np.all(np.isfinite(a)):
                raise ValueError("layer parameters must be finite")
        if self.tie and not (np.array_equal(o1, o2) and np.array_equal(b1, b2)):
            raise ValueError("tied layer needs omega1 == omega2 and b1 == b2")
        object.__setattr__(self, "omega1", o1)
        object.__setattr__(self, "omega2", o2)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "tie", bool(self.tie))

    @property
    def width(self):
        return self.omega1.shape[0]

    @property
    def input_dim(self):
        return self.omega1.shape[1]

    @property
    def scale(self):
        return self.sigma / np.sqrt(2.0 * self.width)

    def to_dict(self):
        return {
            "width": self.width,
            "input_dim": self.input_dim,
            "omega1": self.omega1.ravel().tolist(),
            "omega2": self.omega2.ravel().tolist(),
            "b1": self.b1.tolist(),
            "b2": self.b2.tolist(),
            "sigma": self.sigma,
            "tie": self.tie,
        }

    @classmethod
    def from_dict(cls, d):
        shape = (d["width"], d["input_dim"])
        return cls(
            np.reshape(d["omega1"], shape),
            np.reshape(d["omega2"], shape),
            d["b1"],
            d["b2"],
            sigma=d["sigma"],
            tie=d.get("tie", False),
        )


@dataclass(frozen=True, eq=False)
class FeatureMap:
    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("a feature map needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.input_dim != prev.width:
                raise DimensionError(
                    f"layer input dim {nxt.input_dim} != previous width {prev.width}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self):
        return len(self.layers)

    @property
    def input_dim(self):
        return self.layers[0].input_dim

    @property
    def output_dim(self):
        return self.layers[-1].width

    @property
    def widths(self):
        return [layer.width for layer in self.layers]

    def __call__(self, x):
        return map_forward(self, x)

    def to_dict(self):
        return {"layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(SpectralLayer.from_dict(ld) for ld in d["layers"]))


def _as_batch(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != dim:
        raise DimensionError(f"expected inputs of dimension {dim}, got {X.shape[1]}")
    return X, single


def layer_forward(layer, x):
    """Evaluate one layer at ``x`` (a vector, or an ``(n, D_in)`` batch)."""
    X, single = _as_batch(x, layer.input_dim)
    out = layer.scale * (np.cos(X @ layer.omega1.T + layer.b1)
                         + np.cos(X @ layer.omega2.T + layer.b2))
    return out[0] if single else out


def map_forward(fmap, x):
    X, single = _as_batch(x, fmap.input_dim)
    for layer in fmap.layers:
        X = layer_forward(layer, X)
    return X[0] if single else X


def kernel_eval(fmap, x1, x2):
    """Approximate kernel ``Psi(x1) . Psi(x2)``."""
    p1 = map_forward(fmap, np.ravel(x1))
    p2 = map_forward(fmap, np.ravel(x2))
    return float(np.sum(p1 * p2))


def trig_pair_features(layer, x):
    """The ``2R``-sized cosine/sine representation of a single layer.

    Biases are not part of this form. Its inner product reproduces the
    four-exponential Monte Carlo sum of the symmetrized spectral density.
    """
    X, single = _as_batch(x, layer.input_dim)
    s = layer.sigma / (2.0 * np.sqrt(layer.width))
    z1 = X @ layer.omega1.T
    z2 = X @ layer.omega2.T
    out = s * np.hstack([np.cos(z1) + np.cos(z2), np.sin(z1) + np.sin(z2)])
    return out[0] if single else out


def init_map(widths, input_dim, seed=None, tie=False, sigma=1.0):
    """Random initial map: standard normal frequencies, uniform phases on [0, 2pi].

    ``tie`` is a bool applied to every layer or a per-layer sequence of bools.
    """
    widths = [int(w) for w in widths]
    if not widths or min(widths) < 1:
        raise ValueError(f"layer widths must be >= 1, got {widths}")
    ties = [bool(tie)] * len(widths) if np.isscalar(tie) else [bool(t) for t in tie]
    if len(ties) != len(widths):
        raise ValueError("one tie flag per layer required")
    rng = np.random.default_rng(seed)
    layers = []
    d_in = int(input_dim)
    for width, tied in zip(widths, ties):
        o1 = rng.standard_normal((width, d_in))
        b1 = rng.uniform(0.0, 2.0 * np.pi, width)
        if tied:
            o2, b2 = o1, b1
        else:
            o2 = rng.standard_normal((width, d_in))
            b2 = rng.uniform(0.0, 2.0 * np.pi, width)
        layers.append(SpectralLayer(o1, o2, b1, b2, sigma=sigma, tie=tied))
        d_in = width
    return FeatureMap(tuple(layers))


# Reverse-mode differentiation through the map, used for hyperparameter
# gradients. Each layer caches its input and pre-activations.

def forward_with_cache(fmap, X):
    X = np.asarray(X, dtype=np.float64)
    cache = []
    for layer in fmap.layers:
        z1 = X @ layer.omega1.T + layer.b1
        z2 = X @ layer.omega2.T + layer.b2
        out = layer.scale * (np.cos(z1) + np.cos(z2))
        cache.append((X, z1, z2, out))
        X = out
    return X, cache


def backward(fmap, cache, grad_out):
    """Pull ``grad_out`` (d objective / d Psi, same shape as the output) back
    to per-layer parameter gradients.

    Returns a list of dicts with keys ``omega1, omega2, b1, b2, log_sigma``.
    """
    grads = [None] * fmap.depth
    g = grad_out
    for l in range(fmap.depth - 1, -1, -1):
        layer = fmap.layers[l]
        X, z1, z2, out = cache[l]
        d_logsig = float(np.sum(g * out))
        gz1 = -layer.scale * np.sin(z1) * g
        gz2 = -layer.scale * np.sin(z2) * g
        grads[l] = {
            "omega1": gz1.T @ X,
            "omega2": gz2.T @ X,
            "b1": gz1.sum(axis=0),
            "b2": gz2.sum(axis=0),
            "log_sigma": d_logsig,
        }
        if l > 0:
            g = gz1 @ layer.omega1 + gz2 @ layer.omega2
    return grads
