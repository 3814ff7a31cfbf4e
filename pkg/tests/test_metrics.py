"""Tests for mode coverage, the bootstrap protocol, Frechet distance, the audit and heatmaps."""
import numpy as np
import pytest
from scipy import linalg

from data.grid import GridSpec, mode_centers, sample_real
from models.ensemble import SampleCache, SamplePool
from utils.errors import ConfigError, InsufficientDataError, NonFiniteError
from utils.metrics import (bootstrap_metrics, bootstrap_table, fit_gaussian, frechet_2d, frechet_from_moments,
                           lattice, missed_mode_contrast, mode_report, nn_audit, score_heatmap)


def disjoint_pool(spec: GridSpec, members: int = 5, per_mode: int = 600) -> SamplePool:
    """Cache m holds points sitting exactly on modes 5m..5m+4."""
    centers = mode_centers(spec)
    caches = []
    for m in range(members):
        points = np.repeat(centers[5 * m:5 * m + 5], per_mode, axis=0)
        caches.append(SampleCache(m, m, points))
    return SamplePool(caches)


def brute_force_modes(points, spec):
    centers = mode_centers(spec)
    distances = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    nearest = distances.argmin(axis=1)
    good = distances.min(axis=1) <= 3 * spec.sigma
    return len(set(nearest[good].tolist())), good.mean()


class TestModeReport:
    """Mode recovery and the high-quality fraction."""

    def test_real_data_matches_brute_force(self, grid):
        points = sample_real(grid, 10_000, seed=1)
        report = mode_report(points, grid)
        modes, hq = brute_force_modes(points, grid)
        assert report.modes_recovered == modes == 25
        assert report.hq_fraction == pytest.approx(hq, abs=1e-12)
        assert report.hq_counts.sum() == round(hq * 10_000)

    def test_boundary_is_inclusive(self, grid):
        assert mode_report(np.array([[4.0, 4.15]]), grid).modes_recovered == 1
        assert mode_report(np.array([[4.0, 4.16]]), grid).modes_recovered == 0

    def test_point_certifies_only_its_nearest_mode(self, grid):
        report = mode_report(np.array([[4.0, 4.0], [4.0, 4.0], [5.0, 5.0]]), grid)
        assert report.modes_recovered == 1
        assert report.hq_fraction == pytest.approx(2 / 3)
        assert report.hq_counts[0] == 2

    def test_order_of_points_does_not_matter(self, grid):
        rng = np.random.default_rng(5)
        points = np.concatenate([sample_real(grid, 2000, seed=2), rng.uniform(2.0, 14.0, (500, 2))])
        report = mode_report(points, grid)
        shuffled = mode_report(points[rng.permutation(len(points))], grid)
        assert shuffled.modes_recovered == report.modes_recovered
        assert shuffled.hq_fraction == report.hq_fraction
        np.testing.assert_array_equal(shuffled.hq_counts, report.hq_counts)

    def test_adding_points_never_loses_modes(self, grid):
        points = np.random.default_rng(6).uniform(2.0, 14.0, (4000, 2))
        previous = mode_report(points[:1], grid)
        for n in (10, 100, 500, 2000, 4000):
            report = mode_report(points[:n], grid)
            assert report.modes_recovered >= previous.modes_recovered
            assert np.all(report.hq_counts >= previous.hq_counts)
            previous = report

    def test_empty_input(self, grid):
        report = mode_report(np.empty((0, 2)), grid)
        assert report.modes_recovered == 0
        assert report.hq_fraction == 0.0

    def test_rejects_non_finite(self, grid):
        with pytest.raises(NonFiniteError):
            mode_report(np.array([[np.nan, 4.0]]), grid)


class TestBootstrap:
    """The bootstrap estimation protocol."""

    @pytest.mark.parametrize('T', [1, 2, 3, 4, 5])
    def test_disjoint_members_add_their_modes(self, grid, T):
        summary = bootstrap_metrics(disjoint_pool(grid), T, grid, n_eval=2500, iterations=5, seed=3)
        assert summary.modes_mean == 5 * T
        assert summary.modes_std == 0.0
        assert summary.hq_mean == 1.0

    def test_fixed_members_use_the_prefix(self, grid):
        summary = bootstrap_metrics(disjoint_pool(grid), 2, grid, n_eval=100, iterations=4, fixed_members=True)
        assert summary.members.tolist() == [[0, 1]] * 4

    def test_random_members_are_distinct(self, grid):
        summary = bootstrap_metrics(disjoint_pool(grid), 3, grid, n_eval=300, iterations=20, seed=1)
        for row in summary.members:
            assert len(set(row.tolist())) == 3

    def test_order_independent_and_reproducible(self, grid):
        pool = disjoint_pool(grid)
        alone = bootstrap_metrics(pool, 3, grid, n_eval=300, iterations=6, seed=9)
        table, summaries = bootstrap_table(pool, [1, 2, 3], grid, n_eval=300, iterations=6, seed=9)
        np.testing.assert_array_equal(alone.members, summaries[2].members)
        np.testing.assert_array_equal(alone.hq, summaries[2].hq)
        assert table['T'].tolist() == [1, 2, 3]

    def test_iteration_frame(self, grid):
        summary = bootstrap_metrics(disjoint_pool(grid), 1, grid, n_eval=50, iterations=3)
        frame = summary.iteration_frame()
        assert list(frame.columns) == ['T', 'iteration', 'modes_recovered', 'hq_fraction', 'members']
        assert len(frame) == 3

    def test_T_larger_than_pool(self, grid):
        with pytest.raises(InsufficientDataError, match="pool has 5"):
            bootstrap_metrics(disjoint_pool(grid), 6, grid, n_eval=100, iterations=1)

    def test_budget_smaller_than_ensemble(self, grid):
        with pytest.raises(ConfigError):
            bootstrap_metrics(disjoint_pool(grid), 3, grid, n_eval=2, iterations=1)

    def test_cache_too_small(self, grid):
        with pytest.raises(InsufficientDataError, match="cache"):
            bootstrap_metrics(disjoint_pool(grid, per_mode=10), 1, grid, n_eval=100, iterations=1)


class TestFrechet:
    """Closed-form 2x2 Frechet distance."""

    @staticmethod
    def oracle(mu1, cov1, mu2, cov2):
        root = linalg.sqrtm(cov1 @ cov2).real
        return float(np.sum((mu1 - mu2) ** 2) + np.trace(cov1 + cov2 - 2.0 * root))

    def test_matches_matrix_square_root(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            a, b = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
            cov1, cov2 = a @ a.T + 0.1 * np.eye(2), b @ b.T + 0.1 * np.eye(2)
            mu1, mu2 = rng.standard_normal(2), rng.standard_normal(2)
            expected = self.oracle(mu1, cov1, mu2, cov2)
            assert frechet_from_moments(mu1, cov1, mu2, cov2) == pytest.approx(expected, abs=1e-8, rel=1e-8)

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((300, 2)), 2.0 + rng.standard_normal((200, 2))
        assert frechet_2d(x, y) == pytest.approx(frechet_2d(y, x), rel=1e-12)

    def test_identical_sets(self, real_points):
        assert frechet_2d(real_points, real_points) == pytest.approx(0.0, abs=1e-10)

    def test_shifted_unit_gaussians(self):
        assert frechet_from_moments(np.zeros(2), np.eye(2), np.array([3.0, 0.0]), np.eye(2)) == pytest.approx(9.0)
        rng = np.random.default_rng(7)
        x, y = rng.standard_normal((200_000, 2)), rng.standard_normal((200_000, 2)) + [3.0, 0.0]
        assert frechet_2d(x, y) == pytest.approx(9.0, abs=0.1)

    def test_degenerate_covariance(self):
        line = np.stack([np.arange(10.0), np.zeros(10)], axis=1)
        assert np.isfinite(frechet_2d(line, line + 1.0))
        assert frechet_2d(line, line + 1.0) == pytest.approx(2.0, abs=1e-6)

    def test_needs_two_points(self):
        with pytest.raises(InsufficientDataError):
            fit_gaussian(np.ones((1, 2)))


class TestNearestNeighborAudit:
    """Exhaustive memorization audit."""

    def test_copies_are_found_on_the_diagonal(self):
        real = np.random.default_rng(2).standard_normal((50, 2))
        pairs = nn_audit(real, real, top_m=50)
        assert [(p.synth_index, p.real_index) for p in pairs] == [(i, i) for i in range(50)]
        assert all(p.distance == 0.0 for p in pairs)

    def test_distance_is_the_mean_squared_difference(self):
        pairs = nn_audit(np.array([[4.0, 4.0]]), np.array([[5.0, 5.0]]), top_m=1)
        assert len(pairs) == 1
        assert (pairs[0].synth_index, pairs[0].real_index, pairs[0].distance) == (0, 0, 1.0)

    def test_matches_exhaustive_loop(self):
        rng = np.random.default_rng(3)
        real, synth = rng.uniform(0, 10, (1000, 2)), rng.uniform(0, 10, (1000, 2))
        expected = []
        for s in range(len(synth)):
            distances = ((synth[s] - real) ** 2).sum(axis=1) / 2.0
            expected.extend((float(d), s, r) for r, d in enumerate(distances))
        expected.sort()
        pairs = nn_audit(real, synth, top_m=10, chunk_size=37)
        assert [(p.synth_index, p.real_index) for p in pairs] == [(s, r) for _, s, r in expected[:10]]
        np.testing.assert_allclose([p.distance for p in pairs], [d for d, _, _ in expected[:10]], rtol=1e-15)

    def test_chunking_does_not_change_the_result(self):
        rng = np.random.default_rng(4)
        real, synth = rng.standard_normal((200, 2)), rng.standard_normal((300, 2))
        assert nn_audit(real, synth, top_m=7, chunk_size=1) == nn_audit(real, synth, top_m=7)

    def test_invalid_inputs(self):
        with pytest.raises(InsufficientDataError):
            nn_audit(np.empty((0, 2)), np.ones((3, 2)))
        with pytest.raises(ConfigError):
            nn_audit(np.ones((3, 2)), np.ones((3, 2)), top_m=0)


class TestHeatmaps:
    """Discriminator heatmaps on a lattice of cell centers."""

    def test_single_cell_is_the_center(self):
        xs, ys = lattice((0.0, 1.0, 2.0, 4.0), 1)
        assert xs.tolist() == [0.5] and ys.tolist() == [3.0]

    def test_invalid_lattice(self):
        with pytest.raises(ConfigError):
            lattice((0.0, 1.0, 0.0, 1.0), 0)
        with pytest.raises(ConfigError):
            lattice((1.0, 1.0, 0.0, 1.0), 4)

    def test_scores_and_csv(self, tmp_path, tiny_members):
        heatmap = score_heatmap(tiny_members[0], (0.0, 3.0, 0.0, 2.0), (3, 2))
        assert heatmap.scores.shape == (2, 3)
        path = heatmap.save_csv(tmp_path / 'heat.csv')
        lines = path.read_text(encoding='utf-8').splitlines()
        assert '# order=row-major' in lines
        assert '# resolution=3x2' in lines
        header = [line for line in lines if not line.startswith('#')][0]
        assert header == 'row,col,x,y,score'
        assert len(lines) == 4 + 1 + 6

    def test_missed_mode_contrast(self, grid, tiny_members):
        samples = np.repeat(mode_centers(grid)[:1], 10, axis=0)
        contrast = missed_mode_contrast(tiny_members[0], samples, grid, seed=1)
        assert contrast['missed_modes'] == 24
        assert np.isfinite(contrast['missed_mean']) and np.isfinite(contrast['covered_mean'])

    def test_contrast_undefined_when_everything_is_covered(self, grid, tiny_members):
        assert missed_mode_contrast(tiny_members[0], mode_centers(grid), grid) is None
