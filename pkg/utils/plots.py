"""
GAN Ensemble Lab - Figures
PNG renderings of the report data; every figure has a CSV source next to it.
"""
import logging
from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from data.grid import GridSpec, mode_centers  # noqa: E402
from utils.metrics import Heatmap  # noqa: E402

logger = logging.getLogger(__name__)

# no software/date metadata, so reruns write identical files
PNG_METADATA = {'Software': None}


def _save(fig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_samples(real: np.ndarray, panels: Dict[str, tuple], spec: GridSpec,
                 path: Union[str, Path]) -> Path:
    """
    Ground truth next to one scatter per ensemble, coloured by member.

    Args:
        real: [N x 2] real points
        panels: Title -> (points [M x 2], member index per point)
        spec: Grid specification (for the axis limits and centers)
        path: PNG destination
    """
    fig, axes = plt.subplots(1, len(panels) + 1, figsize=(3 * (len(panels) + 1), 3), squeeze=False)
    xmin, xmax, ymin, ymax = spec.bounds(1.0)
    centers = mode_centers(spec)
    axes[0, 0].scatter(real[:, 0], real[:, 1], s=1, color='black')
    axes[0, 0].set_title('Real data')
    for ax, (title, (points, origin)) in zip(axes[0, 1:], panels.items()):
        ax.scatter(points[:, 0], points[:, 1], s=1, c=origin, cmap='tab10')
        ax.set_title(title)
    for ax in axes[0]:
        ax.scatter(centers[:, 0], centers[:, 1], s=8, marker='x', color='red', linewidths=0.5)
        ax.set_xlim(xmin, xmax)
        ax.set_ylim(ymin, ymax)
        ax.set_aspect('equal')
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    return _save(fig, path)


def plot_heatmap(heatmap: Heatmap, samples: np.ndarray, path: Union[str, Path]) -> Path:
    """Discriminator score colormap with the member's samples on top."""
    fig, ax = plt.subplots(figsize=(4, 4))
    xmin, xmax, ymin, ymax = heatmap.bounds
    image = ax.imshow(heatmap.scores, origin='lower', extent=(xmin, xmax, ymin, ymax), cmap='viridis')
    ax.scatter(samples[:, 0], samples[:, 1], s=1, color='white', alpha=0.5)
    fig.colorbar(image, ax=ax, fraction=0.046)
    ax.set_title(f"Member seed {heatmap.meta.get('member_seed', '?')}", fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_curves(curves: pd.DataFrame, path: Union[str, Path], t_values: Sequence[int]) -> Path:
    """
    Test accuracy over training steps, one line per T (seed 0 of each).

    ``curves`` has columns method, T, seed, step, accuracy.
    """
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for (method, T), group in curves[curves['seed'] == curves['seed'].min()].groupby(['method', 'T']):
        if method != 'real' and T not in t_values:
            continue
        label = 'Real data' if method == 'real' else f"{method} T={T}"
        ax.plot(group['step'], group['accuracy'], label=label, linewidth=1)
    ax.set_xlabel('Training step')
    ax.set_ylabel('Test accuracy')
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_modes(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Recovered modes (mean ± std over bootstrap iterations) against T."""
    fig, ax = plt.subplots(figsize=(4, 3))
    for method, group in table.groupby('method'):
        ax.errorbar(group['T'], group['modes_mean'], yerr=group['modes_std'], label=method, capsize=3)
    ax.set_xlabel('T')
    ax.set_ylabel('Recovered modes')
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
