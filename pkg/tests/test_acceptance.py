"""
Long-running experiment checks.

    pytest -m slow     ci profile (10K points, 40 epochs, 10-member pool)
    pytest -m paper    full profile (hours)
"""
import numpy as np
import pandas as pd
import pytest

from commands.evaluate import cmd_eval
from commands.pool import cmd_train_pool
from config import load_experiment
from conftest import PROJECT_ROOT
from data.grid import LabeledDataset, mode_centers, nearest_mode, sample_real
from models.ensemble import train_boosted
from models.gan import GanConfig, WeightedDataset, generate, train_gan
from utils.helpers import read_json
from utils.metrics import mode_report


def modes_table(config):
    table = pd.read_csv(config.output_dir / 'reports' / 'modes.csv')
    return table[table['method'] == 'independent'].set_index('T')


def run_profile(tmp_path_factory, name, steps):
    out = tmp_path_factory.mktemp(name) / 'run'
    config = load_experiment(PROJECT_ROOT / 'configs' / f"{name}.yaml", overrides={'output_dir': str(out)})
    cmd_train_pool(config)
    cmd_eval(config, steps)
    return config


@pytest.fixture(scope='module')
def ci_run(tmp_path_factory):
    return run_profile(tmp_path_factory, 'ci', ['modes'])


@pytest.fixture(scope='module')
def ci_bagged_run(tmp_path_factory):
    return run_profile(tmp_path_factory, 'ci_bagged', ['downstream'])


@pytest.mark.slow
class TestCiProfile:
    """Scaled-down trends of the 2D-grid experiment."""

    def test_coverage_grows_with_ensemble_size(self, ci_run):
        table = modes_table(ci_run)
        means = table['modes_mean'].tolist()
        assert all(b > a for a, b in zip(means, means[1:]))
        assert table.loc[5, 'modes_mean'] - table.loc[1, 'modes_mean'] >= 2
        assert table.loc[1, 'modes_mean'] < 25

    def test_diversity_helps_downstream_classification(self, ci_bagged_run):
        """Class-wise members label their own samples; more members per class classify better."""
        assert ci_bagged_run.class_wise and ci_bagged_run.downstream.labels == 'members'
        effect = read_json(ci_bagged_run.output_dir / 'reports' / 'diversity.json')['independent']
        assert effect['baseline_T'] == 1 and effect['compared_T'] == 5
        assert effect['significant']
        assert effect['tail_std_baseline'] > effect['tail_std_compared']

    def test_single_mode_weights_collapse_the_generator(self, grid):
        points = sample_real(grid, 2000, seed=1)
        modes, _ = nearest_mode(points, grid)
        weights = (modes == 12).astype(np.float64)
        member = train_gan(WeightedDataset(points, weights / weights.sum()), GanConfig(epochs=20, seed=2))
        samples = generate(member, 1000, seed=3)
        distance = np.linalg.norm(samples - mode_centers(grid)[12], axis=1)
        assert np.mean(distance <= 10 * grid.sigma) >= 0.95

    def test_boosting_moves_weight_off_covered_modes(self, grid):
        points = sample_real(grid, 5000, seed=4)
        data = LabeledDataset(points, np.zeros(len(points), dtype=np.int64), 1, grid, 4, 'none')
        states = []
        mixture = train_boosted(data, 2, GanConfig(epochs=10), master_seed=0,
                                on_iteration=lambda state, member: states.append(state.weight_history[1].copy()))
        covered = mode_report(generate(mixture.members[0], 2500, seed=5), grid).covered
        modes, distances = nearest_mode(points, grid)
        near_covered = covered[modes] & (distances <= 3 * grid.sigma)
        uniform_mass = near_covered.mean()
        assert states[0][near_covered].sum() < uniform_mass


@pytest.mark.paper
class TestPaperProfile:
    """Bootstrap table of the full schedule, within one std of the reference values."""

    def test_covered_modes_table(self, tmp_path):
        config = load_experiment(PROJECT_ROOT / 'configs' / 'paper.yaml',
                                 overrides={'output_dir': str(tmp_path / 'run')})
        cmd_train_pool(config)
        cmd_eval(config, ['modes'])
        table = modes_table(config)
        assert 16.2 <= table.loc[1, 'modes_mean'] <= 21.4
        assert 0.66 <= table.loc[1, 'hq_mean'] <= 0.85
        assert table.loc[5, 'modes_mean'] >= 24.9
        assert 0.68 <= table.loc[5, 'hq_mean'] <= 0.83
