"""Tests for the layer vocabulary, the MLP registry and analytic gradients."""
import numpy as np
import pytest

from conftest import numeric_gradient, relative_error, sample_indices
from models.gan import GanConfig, build_discriminator, build_generator
from models.layers import BatchNormLayer, DenseLayer, MaxoutLayer, ReLULayer
from models.losses import gan_losses, generator_loss_grad
from models.mlp import MlpModel
from utils.errors import BackwardBeforeForwardError, ShapeError

COORDINATES = 120
TOLERANCE = 1e-4


def check_model_gradients(model: MlpModel, batch: np.ndarray, rng: np.random.Generator):
    """Compare backward() against central differences of sum(out * projection)."""
    projection = rng.standard_normal((batch.shape[0], model.output_width))

    def loss():
        return float(np.sum(model.forward(batch) * projection))

    model.zero_grad()
    model.forward(batch)
    grad_input = model.backward(projection)
    analytic = {name: grad.copy() for name, grad in model.gradients().items()}

    names = list(model.parameters())
    per_name = COORDINATES
    checked = 0
    for name in names:
        value = model.parameters()[name]
        for index in sample_indices(value, per_name, rng):
            numeric = numeric_gradient(loss, value, index)
            assert relative_error(analytic[name][index], numeric) <= TOLERANCE, name
            checked += 1
    for index in sample_indices(batch, 20, rng):
        numeric = numeric_gradient(loss, batch, index)
        assert relative_error(grad_input[index], numeric) <= TOLERANCE
    return checked


class TestGradients:
    """Analytic backward passes against finite differences."""

    def test_dense(self):
        rng = np.random.default_rng(0)
        model = MlpModel([DenseLayer(5, 12, rng), DenseLayer(12, 4, rng)])
        assert check_model_gradients(model, rng.standard_normal((6, 5)), rng) >= 100

    def test_batchnorm_training_mode(self):
        rng = np.random.default_rng(1)
        layers = [DenseLayer(4, 10, rng), BatchNormLayer(10), ReLULayer(10), DenseLayer(10, 3, rng)]
        model = MlpModel(layers).train()
        assert check_model_gradients(model, rng.standard_normal((8, 4)), rng) >= 100

    def test_batchnorm_inference_mode(self):
        rng = np.random.default_rng(2)
        bn = BatchNormLayer(4)
        bn.buffers['running_mean'] = rng.standard_normal(4)
        bn.buffers['running_var'] = rng.uniform(0.5, 2.0, 4)
        model = MlpModel([DenseLayer(3, 4, rng), bn, DenseLayer(4, 1, rng)]).eval()
        check_model_gradients(model, rng.standard_normal((5, 3)), rng)

    def test_maxout(self):
        rng = np.random.default_rng(3)
        model = MlpModel([DenseLayer(3, 30, rng), MaxoutLayer(30, 3), DenseLayer(10, 2, rng)])
        assert check_model_gradients(model, rng.standard_normal((7, 3)), rng) >= 100

    def test_generator_through_discriminator(self):
        """The generator loss gradient flows through the discriminator into the generator."""
        rng = np.random.default_rng(4)
        config = GanConfig(gen_widths=(10, 10), disc_widths=(4,), maxout_pool=2, seed=9)
        generator, discriminator = build_generator(config).train(), build_discriminator(config).train()
        z = rng.standard_normal((8, config.latent_dim))
        d_real = np.zeros((8, 1))

        def loss():
            return gan_losses(d_real, discriminator.forward(generator.forward(z)))[0]

        generator.zero_grad()
        d_fake = discriminator.forward(generator.forward(z))
        generator.backward(discriminator.backward(generator_loss_grad(d_fake)))
        analytic = {name: grad.copy() for name, grad in generator.gradients().items()}

        checked = 0
        for name, value in generator.parameters().items():
            for index in sample_indices(value, 20, rng):
                numeric = numeric_gradient(loss, value, index)
                assert relative_error(analytic[name][index], numeric) <= TOLERANCE, name
                checked += 1
        assert checked >= 100


class TestLayers:
    """Shapes, state and failure modes."""

    def test_backward_before_forward(self):
        model = MlpModel([DenseLayer(2, 2, np.random.default_rng(0))])
        with pytest.raises(BackwardBeforeForwardError):
            model.backward(np.ones((1, 2)))

    def test_incompatible_widths(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ShapeError, match="incompatible"):
            MlpModel([DenseLayer(2, 3, rng), DenseLayer(4, 1, rng)])

    def test_maxout_width_must_divide(self):
        with pytest.raises(ShapeError, match="divisible"):
            MaxoutLayer(10, 3)

    def test_batchnorm_needs_two_rows_in_training(self):
        with pytest.raises(ShapeError):
            BatchNormLayer(3).forward(np.ones((1, 3)), training=True)

    def test_batchnorm_running_statistics(self):
        bn = BatchNormLayer(2, momentum=0.9)
        batch = np.array([[1.0, 2.0], [3.0, 6.0]])
        bn.forward(batch, training=True)
        np.testing.assert_allclose(bn.buffers['running_mean'], 0.1 * np.array([2.0, 4.0]))
        np.testing.assert_allclose(bn.buffers['running_var'], 0.9 + 0.1 * np.array([1.0, 4.0]))

    def test_predict_leaves_state_untouched(self):
        config = GanConfig(gen_widths=(4,), disc_widths=(2,), maxout_pool=2)
        generator = build_generator(config)
        before = {k: v.copy() for k, v in generator.buffers().items()}
        generator.predict(np.random.default_rng(0).standard_normal((10, 2)))
        for name, value in generator.buffers().items():
            np.testing.assert_array_equal(value, before[name])

    def test_recalibrated_statistics_match_the_batch(self):
        generator = build_generator(GanConfig(gen_widths=(12, 12), seed=2))
        batch = np.random.default_rng(1).standard_normal((500, 2))
        before = {k: v.copy() for k, v in generator.buffers().items()}
        expected = generator.batch_forward(batch)
        for name, value in generator.buffers().items():
            np.testing.assert_array_equal(value, before[name])

        np.testing.assert_array_equal(generator.recalibrate_batchnorm(batch), expected)
        np.testing.assert_allclose(generator.predict(batch), expected, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(generator.buffers()['1.running_mean'],
                                   (batch @ generator.parameters()['0.weight']).mean(axis=0), rtol=1e-12, atol=1e-12)

    def test_zero_loss_gradient_gives_zero_parameter_gradients(self):
        config = GanConfig(gen_widths=(6, 6), disc_widths=(3,), maxout_pool=2, seed=1)
        z = np.random.default_rng(0).standard_normal((8, 2))
        for model in (build_generator(config).train(), build_discriminator(config)):
            model.forward(z)
            model.backward(np.zeros((8, model.output_width)))
            for name, grad in model.gradients().items():
                assert not grad.any(), name

    def test_dense_weight_gradient_of_a_sum(self):
        layer = DenseLayer(3, 2, np.random.default_rng(0))
        model = MlpModel([layer])
        x = np.array([[1.0, -2.0, 0.5]])
        model.forward(x)
        model.backward(np.ones((1, 2)))
        np.testing.assert_array_equal(layer.grads['weight'], np.outer(x[0], np.ones(2)))
        np.testing.assert_array_equal(layer.grads['bias'], [1.0, 1.0])

    def test_maxout_routes_gradient_to_maximum(self):
        layer = MaxoutLayer(4, 2)
        out = layer.forward(np.array([[1.0, 3.0, -2.0, -5.0]]))
        np.testing.assert_array_equal(out, [[3.0, -2.0]])
        np.testing.assert_array_equal(layer.backward(np.array([[1.0, 1.0]])), [[0.0, 1.0, 1.0, 0.0]])


class TestArchitectures:
    """Default member architectures."""

    def test_generator_parameter_count(self):
        generator = build_generator(GanConfig())
        expected = (2 * 400 + 400) + 3 * (400 * 400 + 400) + 4 * 800 + (400 * 2 + 2)
        assert generator.parameter_count() == expected == 486_402

    def test_discriminator_parameter_count(self):
        discriminator = build_discriminator(GanConfig())
        assert discriminator.parameter_count() == (2 * 1000 + 1000) + 2 * (200 * 1000 + 1000) + 201

    def test_discriminator_has_no_batchnorm(self):
        assert not build_discriminator(GanConfig()).has_batchnorm
        assert build_generator(GanConfig()).has_batchnorm

    def test_same_seed_same_initialization(self):
        config = GanConfig(gen_widths=(8,), disc_widths=(4,), maxout_pool=2, seed=3)
        np.testing.assert_array_equal(build_generator(config).parameter_vector(),
                                      build_generator(config).parameter_vector())

    def test_parameter_registry_names(self):
        names = list(build_generator(GanConfig(gen_widths=(4,))).parameters())
        assert names == ['0.weight', '0.bias', '1.gamma', '1.beta', '3.weight', '3.bias']
