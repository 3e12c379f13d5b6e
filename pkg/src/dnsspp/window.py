"""Observation windows, point patterns and the event CSV format."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EventParseError, WindowError


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lo_1, hi_1] x ... x [lo_D, hi_D]`` with D in {1, 2}."""

    bounds: tuple

    def __post_init__(self):
        try:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        except (TypeError, ValueError) as exc:
            raise WindowError(f"malformed window bounds {self.bounds!r}") from exc
        if len(bounds) not in (1, 2):
            raise WindowError(f"window dimension must be 1 or 2, got {len(bounds)}")
        for k, (lo, hi) in enumerate(bounds):
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise WindowError(f"non-finite bound in dimension {k}")
            if not lo < hi:
                raise WindowError(f"dimension {k}: need lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def from_list(cls, bounds):
        """Accept ``[lo, hi]`` for 1D or ``[[lo1, hi1], [lo2, hi2]]``."""
        if len(bounds) == 2 and np.isscalar(bounds[0]):
            bounds = [bounds]
        return cls(tuple(tuple(b) for b in bounds))

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def lo(self):
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self):
        return np.array([b[1] for b in self.bounds])

    @property
    def center(self):
        return (self.lo + self.hi) / 2.0

    @property
    def half_width(self):
        return (self.hi - self.lo) / 2.0

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    @property
    def is_centered(self):
        return bool(np.all(self.lo == -self.hi))

    def centered(self):
        """The same box translated to ``[-d_1, d_1] x ...``."""
        d = self.half_width
        return Window(tuple((-dk, dk) for dk in d))

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def to_list(self):
        return [list(b) for b in self.bounds]


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Events observed inside a window; ``points`` has shape ``(N, D)``."""

    window: Window
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, self.window.dim)
        inside = self.window.contains(pts) if len(pts) else np.ones(0, bool)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise WindowError(
                f"point {bad.tolist()} lies outside window {self.window.to_list()}"
            )
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    def __len__(self):
        return self.n


def center_coordinates(pattern):
    """Translate a pattern so its window becomes ``[-d, d]^D``."""
    if pattern.window.is_centered:
        return pattern
    shifted = pattern.points - pattern.window.center
    return PointPattern(pattern.window.centered(), shifted)


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_events(path, window):
    """Read an event CSV (one event per row, D columns, optional header)."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            row = [tok.strip() for tok in row if tok.strip() != ""]
            if not row:
                continue
            if i == 0 and not _is_number(row[0]):
                continue
            if len(row) != window.dim:
                raise EventParseError(i, f"expected {window.dim} columns, got {len(row)}")
            try:
                values = [float(tok) for tok in row]
            except ValueError as exc:
                raise EventParseError(i, str(exc)) from exc
            if not all(np.isfinite(values)):
                raise EventParseError(i, "non-finite coordinate")
            rows.append(values)
    points = np.array(rows, dtype=np.float64).reshape(-1, window.dim)
    return PointPattern(window, points)


def save_events(pattern, path):
    # repr() of a float64 round-trips exactly
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for p in pattern.points:
            writer.writerow([repr(float(v)) for v in p])


def load_config(path):
    """Load a JSON config document; ``window`` is turned into a :class:`Window`."""
    with open(path) as fh:
        cfg = json.load(fh)
    if "window" in cfg:
        cfg["window"] = Window.from_list(cfg["window"])
    return cfg
