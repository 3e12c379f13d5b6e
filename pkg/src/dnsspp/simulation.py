"""Synthetic permanental-process data: GP draws on a grid, squared-offset
intensities and thinning."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .errors import DimensionError, IntensityBoundError, NumericalDegeneracyError
from .features import map_forward
from .window import PointPattern, Window, save_events

JITTER = 1e-8
LAMBDA_MAX_FACTOR = 1.05
OFFSET = 2.0


@dataclass(frozen=True)
class KernelSpec:
    """``gaussian``: exp(-|x1 - x2|^2 / (2 l^2)).
    ``poly_times_gaussian``: (x1.x2 / poly_scale + 1)^degree times the Gaussian.
    ``feature_map``: Psi(x1) . Psi(x2) for the map in ``fmap``.
    """

    kind: str = "gaussian"
    length_scale: float = 1.0
    poly_scale: float = 100.0
    degree: int = 3
    fmap: object = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "poly_times_gaussian", "feature_map"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.length_scale <= 0 or self.poly_scale <= 0 or self.degree < 0:
            raise ValueError("kernel parameters must be positive")
        if self.kind == "feature_map" and self.fmap is None:
            raise ValueError("feature_map kernel needs fmap")

    def matrix(self, X1, X2=None):
        X1 = np.atleast_2d(np.asarray(X1, dtype=np.float64))
        X2 = X1 if X2 is None else np.atleast_2d(np.asarray(X2, dtype=np.float64))
        if self.kind == "feature_map":
            return map_forward(self.fmap, X1) @ map_forward(self.fmap, X2).T
        sq = (np.sum(X1**2, 1)[:, None] + np.sum(X2**2, 1)[None, :] - 2.0 * X1 @ X2.T)
        K = np.exp(-0.5 * np.maximum(sq, 0.0) / self.length_scale**2)
        if self.kind == "poly_times_gaussian":
            K = K * (X1 @ X2.T / self.poly_scale + 1.0) ** self.degree
        return K


STATIONARY = KernelSpec("gaussian")
NONSTATIONARY = KernelSpec("poly_times_gaussian")


def gp_sample_grid(spec, grid, seed=None):
    """Draw ``f ~ N(0, K + jitter I)`` at the grid nodes via Cholesky."""
    grid = np.asarray(grid, dtype=np.float64)
    grid = grid.reshape(-1, 1) if grid.ndim == 1 else grid
    n = grid.shape[0]
    if n > 5000:
        raise DimensionError(f"dense sampling limited to 5000 nodes, got {n}")
    K = spec.matrix(grid)
    scale = float(np.mean(np.diag(K)))
    jitter = JITTER * (scale if scale > 0 else 1.0)
    for _ in range(4):
        try:
            L = linalg.cholesky(K + jitter * np.eye(n), lower=True)
            break
        except linalg.LinAlgError:
            jitter *= 10.0
    else:
        raise NumericalDegeneracyError("kernel matrix not factorizable after jitter escalation")
    rng = np.random.default_rng(seed)
    return L @ rng.standard_normal(n)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Latent draw on a regular grid; ``lam = (f + 2)^2``."""

    axes: tuple
    f: np.ndarray
    lam: np.ndarray
    lam_max: float

    @property
    def grid(self):
        g = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def intensity(self, x):
        """Piecewise-linear interpolation of ``lam`` (of the grid values)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if len(self.axes) == 1:
            return np.interp(x[:, 0], self.axes[0], self.lam.ravel())
        interp = RegularGridInterpolator(self.axes, self.lam.reshape(self.shape))
        return interp(x)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def integral(self):
        """Trapezoid integral of the interpolated intensity over the grid box."""
        out = self.lam.reshape(self.shape)
        for k in reversed(range(len(self.axes))):
            out = trapezoid(out, self.axes[k], axis=k)
        return float(out)

    def as_grid(self):
        from .metrics import IntensityGrid
        return IntensityGrid(self.axes, self.lam.reshape(self.shape), np.zeros(self.shape))

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = ["x"] if len(self.axes) == 1 else ["x1", "x2"]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["f", "intensity"])
            for loc, f, lam in zip(self.grid, self.f.ravel(), self.lam.ravel()):
                w.writerow([repr(float(c)) for c in loc] + [repr(float(f)), repr(float(lam))])


def make_truth(spec, window, resolution=None, seed=None):
    if resolution is None:
        resolution = 1000 if window.dim == 1 else 128
    res = [int(resolution)] * window.dim if np.isscalar(resolution) else list(resolution)
    axes = tuple(np.linspace(lo, hi, r) for (lo, hi), r in zip(window.bounds, res))
    g = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([a.ravel() for a in g], axis=1)
    f = gp_sample_grid(spec, grid, seed).reshape(res)
    lam = (f + OFFSET) ** 2
    return GroundTruth(axes, f, lam, LAMBDA_MAX_FACTOR * float(lam.max()))


def thinning_sample(intensity, window, lam_max, seed=None):
    """Thinning of a homogeneous Poisson process with rate ``lam_max``.

    Raises :class:`IntensityBoundError` if any proposal has intensity above
    ``lam_max``; such a sample would be biased.
    """
    if not lam_max > 0:
        raise ValueError("lam_max must be positive")
    rng = np.random.default_rng(seed)
    n = rng.poisson(lam_max * window.volume)
    pts = window.lo + (window.hi - window.lo) * rng.random((n, window.dim))
    keep_u = rng.random(n)
    if n == 0:
        return PointPattern(window, np.zeros((0, window.dim)))
    lam = np.asarray(intensity(pts), dtype=np.float64).reshape(n)
    if np.any(lam > lam_max) or np.any(lam < 0):
        bad = float(lam[np.argmax(np.abs(lam))])
        raise IntensityBoundError(f"intensity {bad} outside [0, lam_max={lam_max}]")
    pts = pts[keep_u * lam_max < lam]
    if window.dim == 1:
        pts = np.sort(pts, axis=0)
    return PointPattern(window, pts)


SYNTH_WINDOW = Window(((0.0, 10.0),))


def synth_dataset(kind, seed, truth_seed=0, window=SYNTH_WINDOW, resolution=None):
    """One event set from the stationary or nonstationary synthetic process.

    The latent function is drawn from ``truth_seed`` and the events from
    ``seed``, so datasets that share ``truth_seed`` are replicates of the
    same intensity.
    """
    spec = {"stationary": STATIONARY, "nonstationary": NONSTATIONARY}.get(kind)
    if spec is None:
        raise ValueError(f"kind must be 'stationary' or 'nonstationary', got {kind!r}")
    truth = make_truth(spec, window, resolution, seed=truth_seed)
    events = thinning_sample(truth.intensity, window, truth.lam_max,
                             seed=np.random.SeedSequence([int(truth_seed), int(seed)]))
    return events, truth


def write_dataset(out_dir, kind, seeds, truth_seed=0):
    """Events CSV and truth-grid CSV per seed plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seed in seeds:
        events, truth = synth_dataset(kind, seed, truth_seed)
        ev_path = out_dir / f"{kind}_events_{seed}.csv"
        tr_path = out_dir / f"{kind}_truth_{seed}.csv"
        save_events(events, ev_path)
        truth.to_csv(tr_path)
        entries.append({"seed": int(seed), "events": ev_path.name, "truth": tr_path.name,
                        "n_events": events.n, "lam_max": truth.lam_max})
    manifest = {"kind": kind, "truth_seed": int(truth_seed),
                "window": SYNTH_WINDOW.to_list(), "datasets": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest
