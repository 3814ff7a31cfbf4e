"""
GAN Ensemble Lab - Utilities Package
Contains errors, seed streams, run profiles, metrics and common helpers.
"""
from utils.errors import (
    EnsembleGanError,
    ConfigError,
    NonFiniteError,
    MissingArtifactError,
)
from utils.profiles import Profile, get_profile_config
from utils.rng import derive_seed, make_rng

__all__ = [
    'EnsembleGanError',
    'ConfigError',
    'NonFiniteError',
    'MissingArtifactError',
    'Profile',
    'get_profile_config',
    'derive_seed',
    'make_rng',
]
