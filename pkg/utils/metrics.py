"""
GAN Ensemble Lab - Metrics
Mode recovery, high-quality fraction, the bootstrap estimation protocol,
a 2D Gaussian Frechet distance, the nearest-neighbor memorization audit and
discriminator heatmaps.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from data.grid import GridSpec, mode_centers, nearest_mode
from models.ensemble import SamplePool, allocate_quotas
from models.gan import GanMember, discriminator_scores
from models.tensor import as_tensor, check_finite, check_width
from utils.errors import ConfigError, InsufficientDataError
from utils.rng import make_rng

logger = logging.getLogger(__name__)

HQ_SIGMAS = 3.0
HQ_RELATIVE_TOLERANCE = 1e-9
SINGULAR_JITTER = 1e-10


# -- mode coverage ---------------------------------------------------------------

@dataclass
class ModeReport:
    """Coverage of the grid modes by a point set."""
    modes_recovered: int
    hq_fraction: float
    hq_counts: np.ndarray
    total_points: int

    @property
    def covered(self) -> np.ndarray:
        return self.hq_counts >= 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'modes_recovered': self.modes_recovered,
            'hq_fraction': self.hq_fraction,
            'hq_counts': self.hq_counts.tolist(),
            'total_points': self.total_points,
        }


def hq_mask(distances: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Points within 3 sigma of their nearest center, boundary inclusive."""
    radius = HQ_SIGMAS * spec.sigma
    return distances <= radius * (1.0 + HQ_RELATIVE_TOLERANCE)


def mode_report(points: np.ndarray, spec: GridSpec) -> ModeReport:
    """
    Mode recovery and high-quality fraction of a point set.

    A point is high quality when its nearest center lies within 3 sigma; it
    certifies only that nearest center. A mode is recovered when at least one
    high-quality point is attributed to it.

    Args:
        points: [N x 2] finite array
        spec: Grid specification

    Returns:
        ModeReport
    """
    points = check_finite(as_tensor(points, 'points', ndim=2), 'points')
    if points.shape[0] == 0:
        return ModeReport(0, 0.0, np.zeros(spec.mode_count, dtype=np.int64), 0)
    check_width(points, 2, 'points')
    modes, distances = nearest_mode(points, spec)
    good = hq_mask(distances, spec)
    counts = np.bincount(modes[good], minlength=spec.mode_count)
    return ModeReport(
        modes_recovered=int(np.count_nonzero(counts)),
        hq_fraction=float(good.sum() / points.shape[0]),
        hq_counts=counts,
        total_points=int(points.shape[0]),
    )


# -- bootstrap protocol ------------------------------------------------------------

@dataclass
class BootstrapSummary:
    """Bootstrap estimate of the mode metrics for ensembles of T pool members."""
    T: int
    iterations: int
    n_eval: int
    seed: int
    modes: np.ndarray = field(repr=False)
    hq: np.ndarray = field(repr=False)
    members: np.ndarray = field(repr=False)

    @property
    def modes_mean(self) -> float:
        return float(self.modes.mean())

    @property
    def modes_std(self) -> float:
        return float(self.modes.std(ddof=0))

    @property
    def hq_mean(self) -> float:
        return float(self.hq.mean())

    @property
    def hq_std(self) -> float:
        return float(self.hq.std(ddof=0))

    def row(self) -> Dict[str, Any]:
        return {
            'T': self.T,
            'iterations': self.iterations,
            'n_eval': self.n_eval,
            'modes_mean': self.modes_mean,
            'modes_std': self.modes_std,
            'hq_mean': self.hq_mean,
            'hq_std': self.hq_std,
        }

    def iteration_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'T': self.T,
            'iteration': np.arange(self.iterations),
            'modes_recovered': self.modes,
            'hq_fraction': self.hq,
            'members': [' '.join(str(m) for m in row) for row in self.members],
        })


def _bootstrap_iteration(pool: SamplePool, T: int, quotas: np.ndarray, class_ids: List[int],
                         member_indices: List[int], rng: np.random.Generator,
                         fixed: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    if fixed:
        chosen = np.arange(T)
    else:
        chosen = np.sort(rng.choice(len(member_indices), size=T, replace=False))
    parts = []
    slot = 0
    for position in chosen:
        for k in class_ids:
            cache = pool.cache(member_indices[position], k)
            picks = rng.choice(cache.points.shape[0], size=int(quotas[slot]), replace=False)
            parts.append(cache.points[picks])
            slot += 1
    return np.concatenate(parts, axis=0), np.asarray([member_indices[p] for p in chosen])


def bootstrap_metrics(pool: SamplePool, T: int, spec: GridSpec, n_eval: int = 2500,
                      iterations: int = 1000, seed: int = 0,
                      fixed_members: bool = False) -> BootstrapSummary:
    """
    Estimate mode metrics of T-member ensembles from a cached pool.

    Each iteration draws T distinct members uniformly and n_eval/(T*K) points
    per (member, class) cache without replacement, using largest-remainder
    counts so every iteration evaluates exactly n_eval points. Iteration i
    uses its own stream ('bootstrap', T, i), so the result does not depend on
    evaluation order.

    With ``fixed_members`` the first T pool members form the ensemble in every
    iteration (sequentially built ensembles); only the points are resampled.

    Args:
        pool: Per-member sample caches
        T: Ensemble size
        spec: Grid specification
        n_eval: Points per bootstrap evaluation
        iterations: Bootstrap iterations
        seed: Stream seed
        fixed_members: Use members 0..T-1 instead of a random subset

    Returns:
        BootstrapSummary with per-iteration values
    """
    if T < 1 or iterations < 1 or n_eval < 1:
        raise ConfigError("bootstrap needs T, iterations and n_eval >= 1")
    member_indices = pool.member_indices
    class_ids = pool.class_ids
    if len(member_indices) < T:
        raise InsufficientDataError(f"pool has {len(member_indices)} members, T={T} requested")
    slots = T * len(class_ids)
    if n_eval < slots:
        raise ConfigError(f"n_eval={n_eval} is smaller than the {slots} member caches per draw")
    quotas = allocate_quotas(np.ones(slots), n_eval)
    used = [c for c in pool.caches if not fixed_members or c.member_index in member_indices[:T]]
    smallest = min(len(c.points) for c in used)
    if smallest < quotas.max():
        raise InsufficientDataError(f"a member cache holds {smallest} points, {int(quotas.max())} needed")

    modes = np.empty(iterations, dtype=np.int64)
    hq = np.empty(iterations, dtype=np.float64)
    members = np.empty((iterations, T), dtype=np.int64)
    for i in range(iterations):
        points, chosen = _bootstrap_iteration(pool, T, quotas, class_ids, member_indices,
                                              make_rng(seed, 'bootstrap', T, i), fixed_members)
        report = mode_report(points, spec)
        modes[i] = report.modes_recovered
        hq[i] = report.hq_fraction
        members[i] = chosen

    summary = BootstrapSummary(T, iterations, n_eval, seed, modes, hq, members)
    logger.info(f"Bootstrap T={T}: modes {summary.modes_mean:.2f}±{summary.modes_std:.2f}, "
                f"HQ {100 * summary.hq_mean:.1f}±{100 * summary.hq_std:.1f}%")
    return summary


def bootstrap_table(pool: SamplePool, t_values: Sequence[int], spec: GridSpec, n_eval: int = 2500,
                    iterations: int = 1000, seed: int = 0,
                    fixed_members: bool = False) -> Tuple[pd.DataFrame, List[BootstrapSummary]]:
    """Bootstrap every T and collect one summary row per T."""
    summaries = [bootstrap_metrics(pool, T, spec, n_eval, iterations, seed, fixed_members) for T in t_values]
    return pd.DataFrame([s.row() for s in summaries]), summaries


# -- Frechet distance ---------------------------------------------------------------

def fit_gaussian(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and (unbiased) covariance of a 2D point set."""
    points = check_finite(as_tensor(points, 'points', ndim=2), 'points')
    check_width(points, 2, 'points')
    if points.shape[0] < 2:
        raise InsufficientDataError("a Gaussian fit needs at least 2 points")
    return points.mean(axis=0), np.cov(points, rowvar=False)


def _regularize(cov: np.ndarray) -> np.ndarray:
    if np.linalg.det(cov) <= 0.0:
        return cov + SINGULAR_JITTER * np.eye(2)
    return cov


def frechet_from_moments(mu1: np.ndarray, cov1: np.ndarray, mu2: np.ndarray, cov2: np.ndarray) -> float:
    """
    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)) for 2x2 covariances.

    For M = S1 S2 with non-negative eigenvalues, tr sqrt(M) equals
    sqrt(tr M + 2 sqrt(det M)), so no eigendecomposition is needed.
    tr M and det M are formed symmetrically in (S1, S2).
    """
    cov1, cov2 = _regularize(cov1), _regularize(cov2)
    diff = mu1 - mu2
    trace_product = float(np.sum(cov1 * cov2))
    det_product = max(float(np.linalg.det(cov1) * np.linalg.det(cov2)), 0.0)
    trace_sqrt = np.sqrt(max(trace_product + 2.0 * np.sqrt(det_product), 0.0))
    value = float(diff @ diff) + float(np.trace(cov1) + np.trace(cov2)) - 2.0 * trace_sqrt
    return max(value, 0.0)


def frechet_2d(real_points: np.ndarray, synth_points: np.ndarray) -> float:
    """
    Frechet distance between Gaussians fitted to two 2D point sets.

    Args:
        real_points: [N x 2], N >= 2
        synth_points: [M x 2], M >= 2

    Returns:
        Non-negative distance
    """
    mu1, cov1 = fit_gaussian(real_points)
    mu2, cov2 = fit_gaussian(synth_points)
    return frechet_from_moments(mu1, cov1, mu2, cov2)


# -- memorization audit ---------------------------------------------------------------

@dataclass(frozen=True)
class AuditPair:
    synth_index: int
    real_index: int
    distance: float


def pair_distances(synth: np.ndarray, real: np.ndarray) -> np.ndarray:
    """Mean squared coordinate difference of every (synth, real) pair."""
    diff = synth[:, None, :] - real[None, :, :]
    return (diff * diff).sum(axis=2) / synth.shape[1]


def nn_audit(real_points: np.ndarray, synth_points: np.ndarray, top_m: int = 10,
             chunk_size: Optional[int] = None) -> List[AuditPair]:
    """
    Exhaustive nearest-pair search between real and synthetic points.

    Distances are mean squared coordinate differences, computed from exact
    differences (no dot-product expansion). Pairs are sorted by
    (distance, synth index, real index).

    Args:
        real_points: [N x 2], N >= 1
        synth_points: [M x 2], M >= 1
        top_m: Number of closest pairs to return
        chunk_size: Synthetic rows per block (default keeps blocks near 4M pairs)

    Returns:
        List of AuditPair, ascending by distance
    """
    real = check_finite(as_tensor(real_points, 'real_points', ndim=2), 'real_points')
    synth = check_finite(as_tensor(synth_points, 'synth_points', ndim=2), 'synth_points')
    if real.shape[0] == 0 or synth.shape[0] == 0:
        raise InsufficientDataError("nn_audit needs non-empty point sets")
    if real.shape[1] != synth.shape[1]:
        raise ConfigError("real and synthetic points differ in dimension")
    if top_m < 1:
        raise ConfigError(f"top_m must be >= 1, got {top_m}")
    if chunk_size is None:
        chunk_size = max(1, 4_000_000 // real.shape[0])

    best_d = np.empty(0)
    best_s = np.empty(0, dtype=np.int64)
    best_r = np.empty(0, dtype=np.int64)
    for start in range(0, synth.shape[0], chunk_size):
        block = pair_distances(synth[start:start + chunk_size], real).ravel()
        keep = min(top_m, block.size)
        threshold = np.partition(block, keep - 1)[keep - 1]
        flat = np.flatnonzero(block <= threshold)
        rows, cols = np.divmod(flat, real.shape[0])
        best_d = np.concatenate([best_d, block[flat]])
        best_s = np.concatenate([best_s, rows + start])
        best_r = np.concatenate([best_r, cols])
        order = np.lexsort((best_r, best_s, best_d))[:top_m]
        best_d, best_s, best_r = best_d[order], best_s[order], best_r[order]

    return [AuditPair(int(s), int(r), float(d)) for d, s, r in zip(best_d, best_s, best_r)]


def audit_frame(pairs: Sequence[AuditPair]) -> pd.DataFrame:
    return pd.DataFrame({
        'synth_index': [p.synth_index for p in pairs],
        'real_index': [p.real_index for p in pairs],
        'distance': [p.distance for p in pairs],
    })


# -- discriminator heatmaps ---------------------------------------------------------------

@dataclass
class Heatmap:
    """
    Discriminator scores on a regular lattice of cell centers.

    ``scores[r, c]`` is the score at (xs[c], ys[r]); the CSV export lists
    cells row-major (r outer, c inner).
    """
    xs: np.ndarray
    ys: np.ndarray
    scores: np.ndarray
    bounds: Tuple[float, float, float, float]
    meta: Dict[str, Any] = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        gx, gy = np.meshgrid(self.xs, self.ys, indexing='xy')
        return pd.DataFrame({'row': np.repeat(np.arange(len(self.ys)), len(self.xs)),
                             'col': np.tile(np.arange(len(self.xs)), len(self.ys)),
                             'x': gx.ravel(), 'y': gy.ravel(), 'score': self.scores.ravel()})

    def save_csv(self, path: Union[str, Path]) -> Path:
        """CSV of the cells preceded by '# key=value' metadata lines."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = {'bounds': ' '.join(repr(float(b)) for b in self.bounds),
                  'resolution': f"{len(self.xs)}x{len(self.ys)}", 'order': 'row-major', **self.meta}
        with open(path, 'w', encoding='utf-8', newline='') as f:
            for key in sorted(header):
                f.write(f"# {key}={header[key]}\n")
            self.frame().to_csv(f, index=False, float_format='%.17g', lineterminator='\n')
        return path


def lattice(bounds: Sequence[float], resolution: Union[int, Tuple[int, int]]) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-center coordinates of an nx x ny lattice over (xmin, xmax, ymin, ymax)."""
    nx, ny = (resolution, resolution) if isinstance(resolution, int) else resolution
    if nx < 1 or ny < 1:
        raise ConfigError(f"resolution must be positive, got {resolution}")
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    if not (xmax > xmin and ymax > ymin):
        raise ConfigError(f"empty bounds {bounds}")
    xs = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    ys = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    return xs, ys


def score_heatmap(member: GanMember, bounds: Sequence[float],
                  resolution: Union[int, Tuple[int, int]] = 100) -> Heatmap:
    """
    Evaluate a member's discriminator over a regular lattice.

    Args:
        member: Trained member
        bounds: (xmin, xmax, ymin, ymax)
        resolution: Cells per axis, or (nx, ny)

    Returns:
        Heatmap of raw scores, shape [ny x nx]
    """
    xs, ys = lattice(bounds, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing='xy')
    scores = discriminator_scores(member, np.stack([gx.ravel(), gy.ravel()], axis=1))
    return Heatmap(xs, ys, scores.reshape(len(ys), len(xs)), tuple(float(b) for b in bounds),
                   {'member_seed': member.seed})


def mode_disk_scores(member: GanMember, spec: GridSpec, points_per_mode: int = 200,
                     seed: int = 0) -> np.ndarray:
    """Mean discriminator score over uniform points in each mode's 3-sigma disk."""
    rng = make_rng(seed, 'disk-scores')
    radius = HQ_SIGMAS * spec.sigma * np.sqrt(rng.random((spec.mode_count, points_per_mode)))
    angle = 2.0 * np.pi * rng.random((spec.mode_count, points_per_mode))
    offsets = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=2)
    points = (mode_centers(spec)[:, None, :] + offsets).reshape(-1, 2)
    scores = discriminator_scores(member, points).reshape(spec.mode_count, points_per_mode)
    return scores.mean(axis=1)


def missed_mode_contrast(member: GanMember, samples: np.ndarray, spec: GridSpec,
                         seed: int = 0) -> Optional[Dict[str, float]]:
    """
    Average disk score over missed vs covered modes of the member's samples.

    Returns None when every mode is covered or none is.
    """
    report = mode_report(samples, spec)
    disk = mode_disk_scores(member, spec, seed=seed)
    covered = report.covered
    if covered.all() or not covered.any():
        return None
    return {'missed_mean': float(disk[~covered].mean()), 'covered_mean': float(disk[covered].mean()),
            'missed_modes': int((~covered).sum())}
