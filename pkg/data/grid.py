"""
GAN Ensemble Lab - 2D Grid Dataset
Mixture of grid_side^2 isotropic Gaussians with equal weights, plus the label
schemes used for bagging and downstream classification.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from models.tensor import as_tensor, check_finite, check_width
from utils.errors import ConfigError, ShapeError
from utils.rng import make_rng

logger = logging.getLogger(__name__)

LABEL_SCHEME_NAMES = ('checkerboard', 'halves', 'modes', 'none')


@dataclass(frozen=True)
class GridSpec:
    """Mode centers at (origin + spacing*i, origin + spacing*j), std sigma."""
    grid_side: int = 5
    spacing: float = 2.0
    origin: float = 4.0
    sigma: float = 0.05

    def __post_init__(self):
        if self.grid_side < 1:
            raise ConfigError(f"grid_side must be >= 1, got {self.grid_side}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not self.spacing > 0:
            raise ConfigError(f"spacing must be positive, got {self.spacing}")

    @property
    def mode_count(self) -> int:
        return self.grid_side ** 2

    def bounds(self, margin: float = 1.0) -> tuple:
        """(xmin, xmax, ymin, ymax) enclosing every center plus a margin."""
        low = self.origin - margin
        high = self.origin + self.spacing * (self.grid_side - 1) + margin
        return (low, high, low, high)

    def to_dict(self) -> Dict[str, Any]:
        return {'grid_side': self.grid_side, 'spacing': self.spacing,
                'origin': self.origin, 'sigma': self.sigma}


def mode_centers(spec: GridSpec) -> np.ndarray:
    """
    Mode centers in row-major (i, then j) order.

    Args:
        spec: Grid specification

    Returns:
        [grid_side^2 x 2] array; row i*grid_side + j holds (origin+spacing*i, origin+spacing*j)
    """
    steps = spec.origin + spec.spacing * np.arange(spec.grid_side, dtype=np.float64)
    ii, jj = np.meshgrid(steps, steps, indexing='ij')
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def sample_real(spec: GridSpec, n: int, seed: int) -> np.ndarray:
    """
    Draw n points: a uniform mode choice, then isotropic Gaussian noise.

    Args:
        spec: Grid specification
        n: Number of points (> 0)
        seed: Stream seed

    Returns:
        [n x 2] array
    """
    if n <= 0:
        raise ConfigError(f"sample_real needs n > 0, got {n}")
    rng = make_rng(seed, 'real-data')
    centers = mode_centers(spec)
    modes = rng.integers(0, spec.mode_count, size=n)
    noise = rng.standard_normal((n, 2))
    return centers[modes] + spec.sigma * noise


def nearest_mode(points: np.ndarray, spec: GridSpec, chunk_size: int = 65536):
    """
    Nearest center index and Euclidean distance for every point.

    Ties resolve to the lowest row-major index.

    Returns:
        (indices [n], distances [n])
    """
    points = as_tensor(points, 'points', ndim=2)
    check_width(points, 2, 'points')
    centers = mode_centers(spec)
    indices = np.empty(points.shape[0], dtype=np.int64)
    distances = np.empty(points.shape[0], dtype=np.float64)
    for start in range(0, points.shape[0], chunk_size):
        block = points[start:start + chunk_size]
        diff = block[:, None, :] - centers[None, :, :]
        sq = (diff * diff).sum(axis=2)
        best = sq.argmin(axis=1)
        indices[start:start + len(block)] = best
        distances[start:start + len(block)] = np.sqrt(sq[np.arange(len(block)), best])
    return indices, distances


def coarsen_labels(mode_ids: np.ndarray, spec: GridSpec, scheme: str) -> np.ndarray:
    """
    Map mode indices to classes of a label scheme.

    checkerboard: (i + j) mod 2; halves: 0 for i < grid_side/2 else 1;
    modes: the mode index itself; none: a single class 0.
    """
    mode_ids = np.asarray(mode_ids, dtype=np.int64)
    i, j = np.divmod(mode_ids, spec.grid_side)
    if scheme == 'checkerboard':
        return (i + j) % 2
    if scheme == 'halves':
        return (i >= spec.grid_side / 2).astype(np.int64)
    if scheme == 'modes':
        return mode_ids.copy()
    if scheme == 'none':
        return np.zeros_like(mode_ids)
    raise ConfigError(f"Unknown label scheme '{scheme}' (choose from {', '.join(LABEL_SCHEME_NAMES)})")


def scheme_class_count(spec: GridSpec, scheme: str) -> int:
    if scheme == 'modes':
        return spec.mode_count
    if scheme == 'none':
        return 1
    if scheme in ('checkerboard', 'halves'):
        return 2 if spec.mode_count > 1 else 1
    raise ConfigError(f"Unknown label scheme '{scheme}'")


@dataclass
class LabeledDataset:
    """
    Points with class labels.

    ``origin`` optionally records which mixture member produced each point.
    """
    points: np.ndarray
    labels: np.ndarray
    class_count: int
    spec: GridSpec = field(default_factory=GridSpec)
    seed: Optional[int] = None
    scheme: str = 'checkerboard'
    origin: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = as_tensor(self.points, 'points', ndim=2)
        if self.points.shape[0] and self.points.shape[1] != 2:
            raise ShapeError(f"points must be [N x 2], got {self.points.shape}")
        if self.points.shape[0] == 0:
            self.points = self.points.reshape(0, 2)
        check_finite(self.points, 'points')
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.points.shape[0],):
            raise ShapeError(f"labels length {self.labels.shape} != point count {self.points.shape[0]}")
        if self.class_count < 1:
            raise ShapeError("class_count must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ShapeError(f"labels must lie in [0, {self.class_count})")
        if self.origin is not None:
            self.origin = np.asarray(self.origin, dtype=np.int64)
            if self.origin.shape != self.labels.shape:
                raise ShapeError("origin must have one entry per point")

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def class_points(self, class_id: int) -> np.ndarray:
        return self.points[self.labels == class_id]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def relabel(self, scheme: str) -> 'LabeledDataset':
        """Relabel from mode labels (scheme 'modes') to a coarser scheme."""
        if self.scheme != 'modes':
            raise ConfigError(f"relabel needs mode labels, dataset uses '{self.scheme}'")
        return LabeledDataset(self.points, coarsen_labels(self.labels, self.spec, scheme),
                              scheme_class_count(self.spec, scheme), self.spec, self.seed, scheme, self.origin)


def assign_labels(points: np.ndarray, spec: GridSpec, scheme: str = 'checkerboard',
                  seed: Optional[int] = None) -> LabeledDataset:
    """
    Label every point by the class of its nearest mode center.

    Args:
        points: [N x 2] array
        spec: Grid specification
        scheme: 'checkerboard', 'halves', 'modes' or 'none'
        seed: Seed the points were drawn with (provenance only)

    Returns:
        LabeledDataset
    """
    modes, _ = nearest_mode(points, spec)
    labels = coarsen_labels(modes, spec, scheme)
    return LabeledDataset(points, labels, scheme_class_count(spec, scheme), spec, seed, scheme)
