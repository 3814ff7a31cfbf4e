"""Tests for ensembles: independent training, boosting, quotas and mixture sampling."""
import numpy as np
import pytest
from scipy import stats

from data.grid import LabeledDataset, sample_real
from models.ensemble import (EnsembleMixture, MixtureComponent, SampleCache, adagan_weights, allocate_quotas,
                             bootstrap_pool, cache_filename, density_ratio, next_beta, sample_mixture,
                             split_by_class, train_boosted, train_independent)
from models.gan import generate
from utils.errors import ConfigError, DegenerateWeightsError, InsufficientDataError


def unlabeled(grid, n=100, seed=2):
    points = sample_real(grid, n, seed)
    return LabeledDataset(points, np.zeros(n, dtype=np.int64), 1, grid, seed, 'none')


def uniform_mixture(members):
    components = [MixtureComponent(m, 1.0 / len(members), 0, t) for t, m in enumerate(members)]
    return EnsembleMixture(components, len(members))


class TestAllocateQuotas:
    def test_largest_remainder(self):
        assert allocate_quotas(np.ones(3), 2500).tolist() == [834, 833, 833]

    def test_ties_go_to_lowest_index(self):
        assert allocate_quotas(np.array([0.5, 0.5]), 3).tolist() == [2, 1]

    def test_always_sums_to_total(self):
        rng = np.random.default_rng(0)
        for n in (1, 7, 99, 2500):
            assert allocate_quotas(rng.random(6), n).sum() == n


class TestAdaganWeights:
    """Projected reweighting and the β schedule."""

    def test_known_solution(self):
        weights, lam = adagan_weights(np.array([0.5, 1.0, 2.0, 4.0]), beta=0.5)
        assert lam == pytest.approx(2.5)
        np.testing.assert_allclose(weights, [0.5, 0.375, 0.125, 0.0], atol=1e-15)

    def test_equal_ratios_give_exact_uniform(self):
        weights, lam = adagan_weights(np.full(8, 3.0), beta=0.25)
        assert lam is None
        np.testing.assert_array_equal(weights, np.full(8, 1.0 / 8))

    def test_weights_form_a_distribution(self):
        ratios = density_ratio(np.random.default_rng(1).standard_normal(500))
        weights, _ = adagan_weights(ratios, beta=1.0 / 3)
        assert weights.min() >= 0.0
        assert weights.sum() == pytest.approx(1.0, abs=1e-12)
        # points the discriminator finds more "real" (smaller ratio) never weigh less
        order = np.argsort(ratios)
        assert np.all(np.diff(weights[order]) <= 1e-15)

    def test_density_ratio(self):
        np.testing.assert_array_equal(density_ratio(np.zeros((3, 1))), np.ones(3))
        assert np.isfinite(density_ratio(np.array([-1e4]))).all()

    def test_beta_schedule(self):
        assert [next_beta(t) for t in (1, 2, 3, 4)] == [1.0, 0.5, 1.0 / 3, 0.25]
        assert next_beta(3, 'constant', 0.3) == 0.3
        assert next_beta(1, 'constant', 0.3) == 1.0
        assert next_beta(2, [1.0, 0.2]) == 0.2

    def test_invalid_beta(self):
        with pytest.raises(ConfigError):
            next_beta(2, 'constant', 1.5)
        with pytest.raises(ConfigError):
            next_beta(2, 'cosine')


class TestTraining:
    """Independent and boosted ensembles."""

    def test_independent_member_count_and_weights(self, grid, tiny_gan_config):
        mixture = train_independent(unlabeled(grid), 2, tiny_gan_config, master_seed=1)
        assert len(mixture.components) == 2
        assert [c.weight for c in mixture.components] == [0.5, 0.5]
        assert mixture.components[0].member.seed != mixture.components[1].member.seed

    def test_same_master_seed_same_pool(self, grid, tiny_gan_config):
        data = unlabeled(grid)
        first = train_independent(data, 3, tiny_gan_config, master_seed=4)
        second = train_independent(data, 3, tiny_gan_config, master_seed=4)
        vectors = [m.generator.parameter_vector() for m in first.members]
        for vector, member in zip(vectors, second.members):
            np.testing.assert_array_equal(vector, member.generator.parameter_vector())
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                assert not np.array_equal(vectors[i], vectors[j])

    def test_uniform_scores_keep_uniform_weights(self, grid, tiny_gan_config):
        data = unlabeled(grid)
        trajectory = []

        def record(state, member):
            trajectory.append(state.weights.weights.copy())

        train_boosted(data, 3, tiny_gan_config, master_seed=1,
                      score_hook=lambda member, points: np.zeros((len(points), 1)), on_iteration=record)
        assert len(trajectory) == 3
        for weights in trajectory:
            np.testing.assert_array_equal(weights, np.full(len(data), 1.0 / len(data)))

    def test_single_iteration_boosting_equals_independent(self, grid, tiny_gan_config):
        data = unlabeled(grid)
        boosted = train_boosted(data, 1, tiny_gan_config, master_seed=3)
        independent = train_independent(data, 1, tiny_gan_config, master_seed=3)
        assert boosted.method == 'boosted' and independent.method == 'independent'
        np.testing.assert_array_equal(boosted.members[0].generator.parameter_vector(),
                                      independent.members[0].generator.parameter_vector())

    def test_boosting_records_running_weights(self, grid, tiny_gan_config):
        states = []
        mixture = train_boosted(unlabeled(grid), 3, tiny_gan_config, master_seed=1,
                                on_iteration=lambda state, member: states.append(state))
        assert states[-1].betas == [1.0, 0.5, 1.0 / 3]
        np.testing.assert_allclose(states[-1].mixture_weights, [1.0 / 3] * 3)
        assert [c.weight for c in mixture.components] == [1.0 / 3] * 3

    def test_degenerate_weights_abort(self, grid, tiny_gan_config):
        def concentrate(member, points):
            scores = np.full((len(points), 1), -50.0)
            scores[:5] = 50.0
            return scores

        with pytest.raises(DegenerateWeightsError) as info:
            train_boosted(unlabeled(grid), 2, tiny_gan_config, master_seed=1, score_hook=concentrate)
        assert info.value.iteration == 2
        assert info.value.support == 5

    def test_class_smaller_than_batch(self, grid, tiny_gan_config):
        data = LabeledDataset(sample_real(grid, 30, 0), np.array([0] * 25 + [1] * 5), 2, grid)
        with pytest.raises(InsufficientDataError, match="class 1"):
            split_by_class(data, tiny_gan_config)


class TestMixture:
    """Mixture bookkeeping and sampling."""

    def test_weights_must_sum_to_one(self, tiny_members):
        components = [MixtureComponent(tiny_members[0], 0.5), MixtureComponent(tiny_members[1], 0.4, 0, 1)]
        with pytest.raises(ConfigError, match="sum to"):
            EnsembleMixture(components, 2)

    def test_prefix(self, tiny_members):
        prefix = uniform_mixture(tiny_members).prefix(2)
        assert prefix.T == 2
        assert [c.weight for c in prefix.components] == [0.5, 0.5]
        assert [c.iteration for c in prefix.components] == [0, 1]

    def test_exact_quota_sampling(self, tiny_members, grid):
        dataset = sample_mixture(uniform_mixture(tiny_members), 100, seed=5, spec=grid)
        assert len(dataset) == 100
        assert np.bincount(dataset.origin).tolist() == [34, 33, 33]
        assert dataset.labels.tolist() == [0] * 100

    def test_sampling_is_reproducible(self, tiny_members):
        mixture = uniform_mixture(tiny_members)
        np.testing.assert_array_equal(sample_mixture(mixture, 60, seed=5).points,
                                      sample_mixture(mixture, 60, seed=5).points)

    def test_proportional_sampling(self, tiny_members):
        dataset = sample_mixture(uniform_mixture(tiny_members), 90, seed=2, allocation='proportional')
        assert len(dataset) == 90

    def test_mixture_is_the_weighted_union_of_members(self, tiny_members):
        mixture = sample_mixture(uniform_mixture(tiny_members), 30_000, seed=4, allocation='proportional').points
        union = np.concatenate([generate(member, 10_000, seed=100 + t) for t, member in enumerate(tiny_members)])
        for axis in (0, 1):
            assert stats.ks_2samp(mixture[:, axis], union[:, axis]).pvalue > 1e-3

    def test_bagged_labels(self, tiny_members):
        components = [MixtureComponent(tiny_members[0], 1.0, 0, 0), MixtureComponent(tiny_members[1], 1.0, 1, 0)]
        dataset = sample_mixture(EnsembleMixture(components, 1, K=2), 11, seed=0)
        assert dataset.class_count == 2
        assert np.bincount(dataset.labels).tolist() == [6, 5]

    def test_budget_smaller_than_member_count(self, tiny_members):
        with pytest.raises(ConfigError, match="smaller than"):
            sample_mixture(uniform_mixture(tiny_members), 2, seed=0)

    def test_non_positive_budget(self, tiny_members):
        with pytest.raises(ConfigError):
            sample_mixture(uniform_mixture(tiny_members), 0, seed=0)


class TestSamplePool:
    def test_caches_are_reproducible(self, tmp_path, tiny_members):
        pool = bootstrap_pool(tiny_members, 50, directory=tmp_path)
        again = bootstrap_pool(tiny_members, 50)
        for first, second in zip(pool.caches, again.caches):
            np.testing.assert_array_equal(first.points, second.points)
        loaded = SampleCache.load(tmp_path / cache_filename(1, 0))
        np.testing.assert_array_equal(loaded.points, pool.cache(1).points)
        assert pool.member_indices == [0, 1, 2]
        assert pool.total_points == 150
