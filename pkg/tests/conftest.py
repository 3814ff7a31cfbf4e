"""Shared fixtures: tiny architectures, a gradient checker and a tiny experiment file."""
import os

os.environ['GANENS_ENV'] = 'testing'

from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import pytest  # noqa: E402
import yaml  # noqa: E402

from data.grid import GridSpec, assign_labels, sample_real  # noqa: E402
from models.gan import GanConfig, WeightedDataset, train_gan, with_seed  # noqa: E402
from models.model_manager import ModelManager  # noqa: E402

PROJECT_ROOT = Path(__file__).resolve().parents[1]


def numeric_gradient(loss, array: np.ndarray, index, eps: float = 1e-5) -> float:
    """Central difference of loss() w.r.t. array[index], restoring the entry."""
    original = array[index]
    array[index] = original + eps
    upper = loss()
    array[index] = original - eps
    lower = loss()
    array[index] = original
    return (upper - lower) / (2.0 * eps)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-4)


def sample_indices(array: np.ndarray, count: int, rng: np.random.Generator):
    flat = rng.choice(array.size, size=min(count, array.size), replace=False)
    return [np.unravel_index(i, array.shape) for i in flat]


@pytest.fixture
def grid():
    return GridSpec()


@pytest.fixture
def tiny_gan_config():
    return GanConfig(gen_widths=(16, 16), disc_widths=(8,), maxout_pool=2, epochs=2,
                     batch_size=20, log_every=0)


@pytest.fixture
def real_points(grid):
    return sample_real(grid, 400, seed=7)


@pytest.fixture
def labeled_real(grid, real_points):
    return assign_labels(real_points, grid, 'modes', seed=7)


@pytest.fixture(scope='session')
def tiny_members():
    """Three tiny trained members, shared across tests."""
    spec = GridSpec()
    points = sample_real(spec, 200, seed=3)
    config = GanConfig(gen_widths=(16, 16), disc_widths=(8,), maxout_pool=2, epochs=1,
                       batch_size=20, log_every=0)
    return [train_gan(WeightedDataset.uniform(points), with_seed(config, seed)) for seed in (11, 12, 13)]


@pytest.fixture(autouse=True)
def _fresh_member_cache():
    ModelManager.unload_all()
    yield
    ModelManager.unload_all()


TINY_EXPERIMENT = {
    'profile': 'ci',
    'method': 'independent',
    't_values': [1, 2],
    'label_scheme': 'checkerboard',
    'train_scheme': 'none',
    'master_seed': 5,
    'grid': {'train_points': 400, 'test_points': 200},
    'gan': {'gen_widths': [16, 16], 'disc_widths': [8], 'maxout_pool': 2, 'epochs': 1,
            'batch_size': 20, 'log_every': 0},
    'pool': {'size': 3, 'samples_per_member': 600},
    'boost': {'beta_schedule': 'uniform'},
    'bootstrap': {'n_eval': 200, 'iterations': 5},
    'downstream': {'hidden_widths': [8], 'epochs': 1, 'batch_size': 50, 'eval_every': 2, 'seeds': 2,
                   'labels': 'nearest_mode'},
    'audit': {'top_m': 3, 'n_points': 100},
    'heatmap': {'resolution': 4, 'members': 1},
}


def write_experiment(directory: Path, output_dir: Path, **changes) -> Path:
    document = {**TINY_EXPERIMENT, 'output_dir': str(output_dir), **changes}
    path = Path(directory) / 'experiment.yaml'
    path.write_text(yaml.safe_dump(document, sort_keys=True), encoding='utf-8')
    return path


@pytest.fixture
def tiny_experiment(tmp_path):
    """Path of a tiny experiment file writing into tmp_path/run."""
    return write_experiment(tmp_path, tmp_path / 'run')
