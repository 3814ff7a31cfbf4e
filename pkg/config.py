"""
GAN Ensemble Lab - Configuration Settings
"""
import copy
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from dotenv import load_dotenv
from jsonschema import Draft202012Validator

from data.grid import LABEL_SCHEME_NAMES, GridSpec
from models.classifier import ClassifierConfig
from models.gan import GanConfig
from utils.errors import ConfigError
from utils.helpers import config_hash
from utils.profiles import Profile, get_profile_config

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

# Base directory of the project
BASE_DIR = Path(__file__).resolve().parent

VERSION = '1.0.0'


def _default_workers() -> int:
    import psutil
    return max(1, (psutil.cpu_count(logical=False) or 1))


class Config:
    """Base configuration class."""

    # Output
    OUTPUT_DIR = Path(os.environ.get('GANENS_OUTPUT_DIR', 'runs/default'))

    # Experiment defaults
    DEFAULT_PROFILE = os.environ.get('GANENS_PROFILE', 'ci')
    MASTER_SEED = int(os.environ.get('GANENS_MASTER_SEED', 0))
    WORKERS = int(os.environ.get('GANENS_WORKERS', 0))

    # Logging
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('LOG_FILE', '')

    @classmethod
    def workers(cls) -> int:
        return cls.WORKERS if cls.WORKERS > 0 else _default_workers()


class DevelopmentConfig(Config):
    """Development configuration."""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration."""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    WORKERS = 1
    LOG_LEVEL = 'WARNING'


# Profile configuration
PROFILES = {
    'ci': {
        'name': 'CI',
        'description': 'Reduced schedule: 10K points, 40 epochs, 10-member pool.',
    },
    'paper': {
        'name': 'Paper',
        'description': 'Full schedule: 100K points, 400 epochs, 25-member pool.',
    },
}

# Ensemble construction methods
METHODS = {
    'independent': {
        'name': 'Independent ensemble',
        'description': 'T members per class trained in isolation, mixed at 1/T.',
    },
    'boosted': {
        'name': 'Boosted ensemble',
        'description': 'Members trained sequentially on data reweighted by the previous discriminator.',
    },
}

# Label schemes for bagging and downstream tasks
LABEL_SCHEMES = {
    'checkerboard': {'name': 'Checkerboard', 'description': 'Class (i + j) mod 2 of the mode index.'},
    'halves': {'name': 'Halves',
               'description': 'Class 0 for the left columns of the grid (x index i < side / 2), 1 for the right.'},
    'modes': {'name': 'Modes', 'description': 'One class per grid mode (fine-grained bagging).'},
    'none': {'name': 'None', 'description': 'A single class; unlabeled ensembles.'},
}

# Where downstream training labels come from
DOWNSTREAM_LABELS = {
    'members': {
        'name': 'Member classes',
        'description': 'Each point keeps the class of the class-wise member that generated it (needs train_scheme).',
    },
    'nearest_mode': {
        'name': 'Nearest mode',
        'description': 'Points are labeled by the grid mode they fall closest to, whatever member drew them.',
    },
}

_NUMBER = {'type': 'number'}
_POSITIVE_INT = {'type': 'integer', 'minimum': 1}
_WIDTHS = {'type': 'array', 'items': _POSITIVE_INT, 'minItems': 1}


def _section(properties: Dict[str, Any]) -> Dict[str, Any]:
    return {'type': 'object', 'additionalProperties': False, 'properties': properties}


EXPERIMENT_SCHEMA = {
    '$schema': 'https://json-schema.org/draft/2020-12/schema',
    'type': 'object',
    'additionalProperties': False,
    'properties': {
        'profile': {'enum': list(PROFILES)},
        'method': {'enum': list(METHODS)},
        't_values': {'type': 'array', 'items': _POSITIVE_INT, 'minItems': 1},
        'label_scheme': {'enum': [s for s in LABEL_SCHEME_NAMES if s not in ('modes', 'none')]},
        'train_scheme': {'enum': list(LABEL_SCHEME_NAMES)},
        'master_seed': {'type': 'integer', 'minimum': 0},
        'output_dir': {'type': 'string'},
        'grid': _section({
            'grid_side': _POSITIVE_INT, 'spacing': _NUMBER, 'origin': _NUMBER, 'sigma': _NUMBER,
            'train_points': _POSITIVE_INT, 'test_points': _POSITIVE_INT,
        }),
        'gan': _section({
            'latent_dim': _POSITIVE_INT, 'gen_widths': _WIDTHS, 'disc_widths': _WIDTHS,
            'maxout_pool': _POSITIVE_INT, 'epochs': _POSITIVE_INT, 'batch_size': _POSITIVE_INT,
            'learning_rate': _NUMBER, 'beta1': _NUMBER, 'beta2': _NUMBER, 'adam_epsilon': _NUMBER,
            'bn_epsilon': _NUMBER, 'bn_momentum': _NUMBER, 'd_steps_per_g_step': _POSITIVE_INT,
            'zero_init_output': {'type': 'boolean'}, 'log_every': {'type': 'integer', 'minimum': 0},
            'bn_calibration_points': {'type': 'integer', 'minimum': 0},
        }),
        'pool': _section({
            'size': {'type': 'integer'}, 'samples_per_member': _POSITIVE_INT,
            'allocation': {'enum': ['exact_quota', 'proportional']},
        }),
        'boost': _section({
            'beta_schedule': {'enum': ['uniform', 'constant']}, 'beta_constant': _NUMBER,
        }),
        'bootstrap': _section({'n_eval': _POSITIVE_INT, 'iterations': _POSITIVE_INT}),
        'downstream': _section({
            'hidden_widths': _WIDTHS, 'epochs': _POSITIVE_INT, 'batch_size': _POSITIVE_INT,
            'learning_rate': _NUMBER, 'eval_every': _POSITIVE_INT, 'seeds': _POSITIVE_INT,
            'tail_fraction': _NUMBER, 'retrain_mixtures': {'type': 'boolean'},
            'real_baseline': {'type': 'boolean'}, 'labels': {'enum': list(DOWNSTREAM_LABELS)},
        }),
        'audit': _section({'top_m': _POSITIVE_INT, 'n_points': _POSITIVE_INT}),
        'heatmap': _section({'resolution': _POSITIVE_INT, 'margin': _NUMBER, 'members': _POSITIVE_INT}),
    },
}


@dataclass(frozen=True)
class PoolSettings:
    size: int
    samples_per_member: int
    allocation: str = 'exact_quota'


@dataclass(frozen=True)
class BoostSettings:
    beta_schedule: str = 'uniform'
    beta_constant: float = 0.5


@dataclass(frozen=True)
class BootstrapSettings:
    n_eval: int = 2500
    iterations: int = 1000


@dataclass(frozen=True)
class DownstreamSettings:
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    seeds: int = 10
    tail_fraction: float = 0.5
    retrain_mixtures: bool = False
    real_baseline: bool = True
    labels: str = 'members'


@dataclass(frozen=True)
class AuditSettings:
    top_m: int = 10
    n_points: int = 2500


@dataclass(frozen=True)
class HeatmapSettings:
    resolution: int = 100
    margin: float = 1.0
    members: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment: every field has a concrete value."""
    grid: GridSpec
    gan: GanConfig
    profile: str
    method: str
    t_values: Tuple[int, ...]
    label_scheme: str
    train_scheme: str
    pool: PoolSettings
    boost: BoostSettings
    bootstrap: BootstrapSettings
    downstream: DownstreamSettings
    audit: AuditSettings
    heatmap: HeatmapSettings
    train_points: int
    test_points: int
    master_seed: int
    output_dir: Path
    workers: int = 1

    @property
    def max_T(self) -> int:
        return max(self.t_values)

    @property
    def class_wise(self) -> bool:
        """Pool members are trained per class, so their samples carry class labels."""
        return self.train_scheme != 'none'

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration as plain data (output_dir and workers excluded)."""
        return {
            'grid': self.grid.to_dict(),
            'gan': self.gan.to_dict(),
            'profile': self.profile,
            'method': self.method,
            't_values': list(self.t_values),
            'label_scheme': self.label_scheme,
            'train_scheme': self.train_scheme,
            'pool': vars(self.pool).copy(),
            'boost': vars(self.boost).copy(),
            'bootstrap': vars(self.bootstrap).copy(),
            'downstream': {**{k: v for k, v in vars(self.downstream).items() if k != 'classifier'},
                           'classifier': self.downstream.classifier.to_dict()},
            'audit': vars(self.audit).copy(),
            'heatmap': vars(self.heatmap).copy(),
            'train_points': self.train_points,
            'test_points': self.test_points,
            'master_seed': self.master_seed,
        }

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def pool_hash(self) -> str:
        """Hash of the fields that determine the trained pool."""
        data = self.to_dict()
        return config_hash({key: data[key] for key in
                            ('grid', 'gan', 'train_scheme', 'train_points', 'master_seed', 'label_scheme')}
                           | {'pool': {'size': self.pool.size, 'samples_per_member': self.pool.samples_per_member}})

    def boost_hash(self) -> str:
        data = self.to_dict()
        return config_hash({key: data[key] for key in
                            ('grid', 'gan', 'train_scheme', 'train_points', 'master_seed', 'label_scheme', 'boost')}
                           | {'T': self.max_T})


def validate_document(document: Dict[str, Any], source: str = '<config>') -> None:
    """Schema check with every violation listed; unknown keys are rejected."""
    validator = Draft202012Validator(EXPERIMENT_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.path))
    if errors:
        lines = []
        for e in errors[:50]:
            location = '.'.join(str(x) for x in e.path) or '<root>'
            lines.append(f"- {location}: {e.message}")
        raise ConfigError(f"{source}: schema validation failed:\n" + '\n'.join(lines))


def load_document(path: Optional[Path]) -> Dict[str, Any]:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        document = yaml.safe_load(path.read_text(encoding='utf-8'))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from None
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return document


def resolve_experiment(document: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None,
                       source: str = '<config>') -> ExperimentConfig:
    """
    Resolve an experiment document into an ExperimentConfig.

    Precedence: ``overrides`` (command-line flags) over the document over the
    environment (``Config``) over profile defaults.

    Args:
        document: Parsed experiment mapping
        overrides: Top-level keys from the command line (None values ignored)
        source: Name used in error messages

    Returns:
        ExperimentConfig
    """
    document = copy.deepcopy(document)
    validate_document(document, source)
    for key, value in (overrides or {}).items():
        if value is not None:
            document[key] = value
    validate_document(document, source)

    env = get_config()
    profile = Profile.from_string(document.get('profile', env.DEFAULT_PROFILE)).value
    defaults = get_profile_config(profile)

    grid_doc = dict(document.get('grid', {}))
    train_points = grid_doc.pop('train_points', defaults['train_points'])
    test_points = grid_doc.pop('test_points', defaults['test_points'])
    grid = GridSpec(**grid_doc)

    gan_doc = dict(document.get('gan', {}))
    gan_doc.setdefault('epochs', defaults['epochs'])
    try:
        gan = GanConfig(**gan_doc)
    except TypeError as e:
        raise ConfigError(f"{source}: gan: {e}") from None

    pool_doc = document.get('pool', {})
    pool = PoolSettings(size=pool_doc.get('size', defaults['pool_size']),
                        samples_per_member=pool_doc.get('samples_per_member', defaults['samples_per_member']),
                        allocation=pool_doc.get('allocation', 'exact_quota'))
    if pool.size < 1:
        raise ConfigError(f"pool.size must be >= 1, got {pool.size}")

    boost = BoostSettings(**document.get('boost', {}))
    if boost.beta_schedule == 'constant' and not 0.0 < boost.beta_constant < 1.0:
        raise ConfigError(f"boost.beta_constant must lie in (0, 1), got {boost.beta_constant}")

    bootstrap_doc = document.get('bootstrap', {})
    bootstrap = BootstrapSettings(n_eval=bootstrap_doc.get('n_eval', 2500),
                                  iterations=bootstrap_doc.get('iterations', defaults['bootstrap_iterations']))

    down_doc = dict(document.get('downstream', {}))
    classifier_fields = {key: down_doc.pop(key) for key in
                         ('hidden_widths', 'batch_size', 'learning_rate', 'eval_every') if key in down_doc}
    classifier_fields['epochs'] = down_doc.pop('epochs', defaults['classifier_epochs'])
    downstream = DownstreamSettings(classifier=ClassifierConfig(**classifier_fields),
                                    seeds=down_doc.pop('seeds', defaults['classifier_seeds']), **down_doc)
    if not 0.0 < downstream.tail_fraction <= 1.0:
        raise ConfigError(f"downstream.tail_fraction must lie in (0, 1], got {downstream.tail_fraction}")

    label_scheme = document.get('label_scheme', 'checkerboard')
    train_scheme = document.get('train_scheme', 'none')
    if train_scheme not in ('none', 'modes', label_scheme):
        raise ConfigError(f"train_scheme '{train_scheme}' must be 'none', 'modes' or the label scheme "
                          f"'{label_scheme}'")

    t_values = tuple(sorted(set(document.get('t_values', [1, 2, 3, 4, 5]))))

    config = ExperimentConfig(
        grid=grid, gan=gan, profile=profile, method=document.get('method', 'independent'),
        t_values=t_values, label_scheme=label_scheme, train_scheme=train_scheme,
        pool=pool, boost=boost, bootstrap=bootstrap, downstream=downstream,
        audit=AuditSettings(**document.get('audit', {})),
        heatmap=HeatmapSettings(**document.get('heatmap', {})),
        train_points=train_points, test_points=test_points,
        master_seed=document.get('master_seed', env.MASTER_SEED),
        output_dir=Path(document.get('output_dir', env.OUTPUT_DIR)),
        workers=env.workers(),
    )
    logger.debug(f"Resolved experiment {config.hash()[:12]} (profile {profile}, method {config.method})")
    return config


def load_experiment(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None,
                    workers: Optional[int] = None) -> ExperimentConfig:
    """Load, validate and resolve an experiment file."""
    config = resolve_experiment(load_document(path), overrides, source=str(path or '<defaults>'))
    if workers is not None:
        if workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {workers}")
        config = replace(config, workers=workers)
    return config


def get_config():
    """Get the appropriate configuration based on environment."""
    env = os.environ.get('GANENS_ENV', 'development')
    configs = {
        'development': DevelopmentConfig,
        'production': ProductionConfig,
        'testing': TestingConfig
    }
    return configs.get(env, DevelopmentConfig)
