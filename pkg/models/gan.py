"""
GAN Ensemble Lab - GAN Member
Generator/discriminator architectures of the 2D-grid experiment and the
alternating training loop with softplus losses.

Generator: [dense -> batchnorm -> ReLU] x 4 (400 units) -> dense to 2.
Discriminator: [dense to width*pool -> maxout(pool)] x 3 (200 units, pool 5)
-> dense to 1 raw score. No batchnorm in the discriminator.
"""
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from models.checkpoint import load_checkpoint, restore_models, save_checkpoint
from models.layers import BatchNormLayer, DenseLayer, MaxoutLayer, ReLULayer
from models.losses import discriminator_loss_grads, gan_losses, generator_loss_grad
from models.mlp import MlpModel
from models.optim import AdamState, adam_step
from models.tensor import as_tensor, check_finite, is_finite
from utils.errors import ConfigError, InsufficientDataError, MissingArtifactError, NonFiniteError, ShapeError
from utils.helpers import read_json, write_json
from utils.rng import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GanConfig:
    """Architecture, schedule and optimizer settings of one GAN member."""
    latent_dim: int = 2
    gen_widths: Tuple[int, ...] = (400, 400, 400, 400)
    disc_widths: Tuple[int, ...] = (200, 200, 200)
    maxout_pool: int = 5
    epochs: int = 400
    batch_size: int = 100
    learning_rate: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    d_steps_per_g_step: int = 1
    seed: int = 0
    zero_init_output: bool = False
    log_every: int = 10
    bn_calibration_points: int = 20000

    def __post_init__(self):
        object.__setattr__(self, 'gen_widths', tuple(int(w) for w in self.gen_widths))
        object.__setattr__(self, 'disc_widths', tuple(int(w) for w in self.disc_widths))
        checks = {
            'latent_dim': self.latent_dim >= 1,
            'gen_widths': all(w > 0 for w in self.gen_widths),
            'disc_widths': all(w > 0 for w in self.disc_widths),
            'maxout_pool': self.maxout_pool >= 1,
            'epochs': self.epochs >= 1,
            'batch_size': self.batch_size >= 2,
            'learning_rate': self.learning_rate > 0,
            'd_steps_per_g_step': self.d_steps_per_g_step >= 1,
            'seed': self.seed >= 0,
            'bn_calibration_points': self.bn_calibration_points == 0 or self.bn_calibration_points >= 2,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ConfigError(f"Invalid GAN config field(s): {', '.join(bad)}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['gen_widths'] = list(self.gen_widths)
        data['disc_widths'] = list(self.disc_widths)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GanConfig':
        return cls(**data)


@dataclass
class WeightedDataset:
    """Training points with a sampling distribution over them."""
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = check_finite(as_tensor(self.points, 'points', ndim=2), 'points')
        self.weights = as_tensor(self.weights, 'weights', ndim=1)
        if self.weights.shape[0] != self.points.shape[0]:
            raise ShapeError("one weight per point required")
        if np.any(self.weights < 0):
            raise ShapeError("weights must be non-negative")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ShapeError(f"weights must sum to 1, got {self.weights.sum():.12f}")

    @classmethod
    def uniform(cls, points: np.ndarray) -> 'WeightedDataset':
        points = as_tensor(points, 'points', ndim=2)
        return cls(points, np.full(points.shape[0], 1.0 / max(points.shape[0], 1)))

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.weights))


@dataclass
class GanMember:
    """One trained generator/discriminator pair with its training metadata."""
    generator: MlpModel
    discriminator: MlpModel
    config: GanConfig
    seed: int
    training_log: List[Dict[str, float]] = field(default_factory=list)
    g_optimizer: Optional[AdamState] = None
    d_optimizer: Optional[AdamState] = None
    steps: int = 0

    def save(self, path: Union[str, Path]) -> Path:
        """Checkpoint (``.npz``) plus a JSON sidecar with config, seed and loss log."""
        path = Path(path)
        optimizers = {}
        if self.g_optimizer is not None:
            optimizers['generator'] = self.g_optimizer
        if self.d_optimizer is not None:
            optimizers['discriminator'] = self.d_optimizer
        save_checkpoint(path, {'generator': self.generator, 'discriminator': self.discriminator},
                        optimizers, seed=self.seed, step=self.steps)
        write_json(member_sidecar(path), {
            'config': self.config.to_dict(),
            'seed': self.seed,
            'steps': self.steps,
            'training_log': self.training_log,
        })
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'GanMember':
        path = Path(path)
        meta_path = member_sidecar(path)
        if not meta_path.exists():
            raise MissingArtifactError(f"Member metadata missing: {meta_path}")
        meta = read_json(meta_path)
        config = GanConfig.from_dict(meta['config'])
        generator, discriminator = build_generator(config), build_discriminator(config)
        checkpoint = load_checkpoint(path)
        restore_models(checkpoint, {'generator': generator, 'discriminator': discriminator})
        return cls(generator, discriminator, config, int(meta['seed']), meta['training_log'],
                   checkpoint.optimizers.get('generator'), checkpoint.optimizers.get('discriminator'),
                   int(meta['steps']))


def member_sidecar(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + '.json')


def build_generator(config: GanConfig) -> MlpModel:
    """
    Generator: [dense -> BN -> ReLU] per hidden width, then dense to 2 outputs.

    Glorot-uniform weights from the ('init-generator') stream of ``config.seed``.
    """
    rng = make_rng(config.seed, 'init-generator')
    layers = []
    width = config.latent_dim
    for hidden in config.gen_widths:
        layers.append(DenseLayer(width, hidden, rng))
        layers.append(BatchNormLayer(hidden, config.bn_epsilon, config.bn_momentum))
        layers.append(ReLULayer(hidden))
        width = hidden
    layers.append(DenseLayer(width, 2, rng, init='zeros' if config.zero_init_output else 'glorot'))
    return MlpModel(layers, name='generator')


def build_discriminator(config: GanConfig) -> MlpModel:
    """Discriminator: [dense to width*pool -> maxout] per hidden width, then dense to 1."""
    rng = make_rng(config.seed, 'init-discriminator')
    layers = []
    width = 2
    for hidden in config.disc_widths:
        expanded = hidden * config.maxout_pool
        layers.append(DenseLayer(width, expanded, rng))
        layers.append(MaxoutLayer(expanded, config.maxout_pool))
        width = hidden
    layers.append(DenseLayer(width, 1, rng))
    return MlpModel(layers, name='discriminator')


def weighted_indices(weights: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` indices with replacement, P(i) = weights[i]."""
    cumulative = np.cumsum(weights)
    draws = rng.random(count) * cumulative[-1]
    indices = np.searchsorted(cumulative, draws, side='right')
    return np.minimum(indices, len(weights) - 1)


def calibration_batch(config: GanConfig) -> np.ndarray:
    """Latent draws whose statistics become the generator's running statistics after training."""
    rng = make_rng(config.seed, 'bn-calibration')
    return rng.standard_normal((config.bn_calibration_points, config.latent_dim))


def _diagnostic_state(epoch: int, step: int, generator: MlpModel, discriminator: MlpModel,
                      losses: Dict[str, float]) -> Dict[str, Any]:
    def norms(model: MlpModel) -> Dict[str, float]:
        return {name: float(np.linalg.norm(value)) for name, value in model.parameters().items()}

    return {
        'epoch': epoch,
        'step': step,
        'losses': losses,
        'generator_param_norms': norms(generator),
        'discriminator_param_norms': norms(discriminator),
        'generator_finite': is_finite(generator.parameter_vector()),
        'discriminator_finite': is_finite(discriminator.parameter_vector()),
    }


def train_gan(data: WeightedDataset, config: GanConfig,
              progress: Optional[Callable[[int, Dict[str, float]], None]] = None) -> GanMember:
    """
    Train one GAN member with alternating updates.

    Per minibatch: ``d_steps_per_g_step`` discriminator updates on L_d, then
    one generator update on L_g. Real minibatches are drawn with replacement
    according to ``data.weights``; an epoch is N // batch_size minibatches.
    The dataset is never modified. After the last epoch the generator's
    batchnorm running statistics are recomputed on ``bn_calibration_points``
    latent draws (0 keeps the momentum averages).

    Args:
        data: Weighted training points
        config: GAN configuration (its seed drives every random draw)
        progress: Optional callback(epoch, epoch_losses)

    Returns:
        Trained GanMember with one loss-log entry per epoch
    """
    n = len(data)
    if n < config.batch_size:
        raise InsufficientDataError(f"{n} training points is fewer than batch size {config.batch_size}")
    if data.support == 0:
        raise InsufficientDataError("all sampling weights are zero")

    generator = build_generator(config).train()
    discriminator = build_discriminator(config).train()
    hyper = dict(learning_rate=config.learning_rate, beta1=config.beta1,
                 beta2=config.beta2, epsilon=config.adam_epsilon)
    g_opt, d_opt = AdamState(**hyper), AdamState(**hyper)
    rng = make_rng(config.seed, 'train')
    batch = config.batch_size
    steps_per_epoch = n // batch
    log: List[Dict[str, float]] = []
    step = 0
    started = time.time()

    for epoch in range(config.epochs):
        sum_d = sum_g = 0.0
        for _ in range(steps_per_epoch):
            for _ in range(config.d_steps_per_g_step):
                real = data.points[weighted_indices(data.weights, batch, rng)]
                fake = generator.forward(rng.standard_normal((batch, config.latent_dim)))
                scores = discriminator.forward(np.concatenate([real, fake], axis=0))
                d_real, d_fake = scores[:batch], scores[batch:]
                _, loss_d = gan_losses(d_real, d_fake)
                grad_real, grad_fake = discriminator_loss_grads(d_real, d_fake)
                discriminator.backward(np.concatenate([grad_real, grad_fake], axis=0))
                adam_step(d_opt, discriminator.parameters(), discriminator.gradients())

            fake = generator.forward(rng.standard_normal((batch, config.latent_dim)))
            d_fake = discriminator.forward(fake)
            # real term under the updated discriminator
            loss_g, _ = gan_losses(discriminator.predict(real, chunk_size=None), d_fake)
            grad_fake_points = discriminator.backward(generator_loss_grad(d_fake))
            generator.backward(grad_fake_points)
            adam_step(g_opt, generator.parameters(), generator.gradients())

            step += 1
            if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
                state = _diagnostic_state(epoch, step, generator, discriminator,
                                          {'loss_d': loss_d, 'loss_g': loss_g})
                logger.error(f"Non-finite GAN loss at epoch {epoch}, step {step} (seed {config.seed})")
                raise NonFiniteError(f"non-finite loss at epoch {epoch}, step {step}", state)
            sum_d += loss_d
            sum_g += loss_g

        entry = {'epoch': epoch, 'loss_d': sum_d / steps_per_epoch, 'loss_g': sum_g / steps_per_epoch}
        log.append(entry)
        if progress is not None:
            progress(epoch, entry)
        if config.log_every and (epoch + 1) % config.log_every == 0:
            logger.info(f"seed {config.seed} epoch {epoch + 1}/{config.epochs}: "
                        f"loss_d={entry['loss_d']:.4f} loss_g={entry['loss_g']:.4f} "
                        f"({time.time() - started:.1f}s)")

    for model in (generator, discriminator):
        try:
            check_finite(model.parameter_vector(), f"{model.name} parameters")
        except NonFiniteError as e:
            e.state.update(_diagnostic_state(config.epochs - 1, step, generator, discriminator, log[-1]))
            raise
    if config.bn_calibration_points and generator.has_batchnorm:
        generator.recalibrate_batchnorm(calibration_batch(config))
        logger.debug(f"seed {config.seed}: batchnorm statistics recalibrated on "
                     f"{config.bn_calibration_points} latent draws")
    generator.eval()
    discriminator.eval()
    return GanMember(generator, discriminator, config, config.seed, log, g_opt, d_opt, step)


def generate(member: GanMember, n: int, seed: int) -> np.ndarray:
    """
    Sample n points: z ~ N(0, I_latent) through the generator in inference mode.

    Args:
        member: Trained (or untrained) member
        n: Number of samples (0 allowed)
        seed: Stream seed

    Returns:
        [n x 2] array
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if n == 0:
        return np.zeros((0, 2))
    rng = make_rng(seed, 'generate')
    z = rng.standard_normal((n, member.config.latent_dim))
    return member.generator.predict(z)


def discriminator_scores(member: GanMember, points: np.ndarray) -> np.ndarray:
    """Raw discriminator scores [n x 1] in evaluation mode."""
    points = as_tensor(points, 'points', ndim=2)
    return member.discriminator.predict(points)


def with_seed(config: GanConfig, seed: int) -> GanConfig:
    return replace(config, seed=seed)
