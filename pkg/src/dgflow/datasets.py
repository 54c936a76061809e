"""Synthetic 2D datasets and mode bookkeeping.

Two generators, both pure functions of (n, seed):

* 25 Gaussians: mixture of 25 equally likely isotropic Gaussians with means on
  the grid {-4,-2,0,2,4}^2 and std 0.05, then divided by 2*sqrt(2).
* 2D swissroll: r ~ U[0,1], t = 1.5*pi*(1+2r), 3D point (t cos t, ., t sin t)
  plus 0.25 * N(0, I3) noise, keep coordinates (0, 2), divide by 7.5.

Metrics run in the normalized coordinates, so the mode table stores the
normalized centers and std.
"""

from dataclasses import dataclass

import numpy as np

from dgflow.errors import ConfigurationError

GAUSS_NORMALIZATION = 2.0 * np.sqrt(2.0)
SWISSROLL_NORMALIZATION = 7.5
MODE_STD_RAW = 0.05
HOLDOUT_SIZE = 5000


@dataclass
class Dataset2D:
    points: np.ndarray  # (n, 2)
    name: str  # "Gaussians25" | "Swissroll2D"
    normalization: float

    def train_points(self, holdout=HOLDOUT_SIZE):
        """All but the trailing holdout slice (reserved for KDE scoring)."""
        if len(self.points) <= holdout:
            return self.points
        return self.points[:-holdout]

    def holdout_points(self, holdout=HOLDOUT_SIZE):
        if len(self.points) <= holdout:
            return self.points
        return self.points[-holdout:]


@dataclass
class ModeTable:
    centers: np.ndarray  # (25, 2), normalized
    std: float  # normalized per-coordinate std

    @property
    def high_quality_radius(self):
        return 4.0 * self.std


def gaussian_mode_table():
    axis = np.array([-4.0, -2.0, 0.0, 2.0, 4.0])
    centers = np.array([(x, y) for x in axis for y in axis]) / GAUSS_NORMALIZATION
    return ModeTable(centers=centers, std=MODE_STD_RAW / GAUSS_NORMALIZATION)


def gen_25gaussians(n, seed):
    if n <= 0:
        raise ConfigurationError("n must be positive")
    rng = np.random.default_rng(seed)
    axis = np.array([-4.0, -2.0, 0.0, 2.0, 4.0])
    centers = np.array([(x, y) for x in axis for y in axis])
    idx = rng.integers(0, 25, size=n)
    pts = centers[idx] + MODE_STD_RAW * rng.standard_normal((n, 2))
    pts /= GAUSS_NORMALIZATION
    return Dataset2D(points=pts, name="Gaussians25", normalization=GAUSS_NORMALIZATION)


def swissroll_backbone(r):
    """Noise-free roll coordinates for spiral parameter r in [0, 1]."""
    t = 1.5 * np.pi * (1.0 + 2.0 * np.asarray(r, dtype=np.float64))
    return np.stack([t * np.cos(t), t * np.sin(t)], axis=-1) / SWISSROLL_NORMALIZATION


def gen_swissroll(n, seed):
    if n <= 0:
        raise ConfigurationError("n must be positive")
    rng = np.random.default_rng(seed)
    r = rng.random(n)
    noise = 0.25 * rng.standard_normal((n, 3))
    # 3D noise drawn before dimension selection; only coords 0 and 2 are kept
    pts = swissroll_backbone(r) + noise[:, (0, 2)] / SWISSROLL_NORMALIZATION
    return Dataset2D(points=pts, name="Swissroll2D", normalization=SWISSROLL_NORMALIZATION)


def generate_dataset(name, n, seed):
    key = name.lower().replace("-", "").replace("_", "")
    if key in ("25gaussians", "gaussians25"):
        return gen_25gaussians(n, seed)
    if key in ("swissroll", "swissroll2d", "2dswissroll"):
        return gen_swissroll(n, seed)
    raise ConfigurationError(f"unknown dataset {name!r}")


def nearest_mode(points, modes=None):
    """Index and distance of the closest mode center for each point.

    Ties resolve to the lowest index (argmin semantics). Accepts a single
    point or an (n, 2) batch.
    """
    if modes is None:
        modes = gaussian_mode_table()
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    diff = pts[:, None, :] - modes.centers[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    idx = np.argmin(dist, axis=1)
    best = dist[np.arange(len(pts)), idx]
    if np.asarray(points).ndim == 1:
        return int(idx[0]), float(best[0])
    return idx, best


def save_points_csv(path, points):
    """Write an (n, 2) array as `x0,x1` rows with full float64 round-trip."""
    pts = np.asarray(points, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("x0,x1\n")
        for a, b in pts:
            fh.write(f"{a:.17g},{b:.17g}\n")


def load_points_csv(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "x0,x1":
            raise ConfigurationError(f"{path}: expected header 'x0,x1', got {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[1] != 2:
        raise ConfigurationError(f"{path}: expected 2 columns, got {data.shape[1]}")
    return data
