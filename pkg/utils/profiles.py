"""
GAN Ensemble Lab - Run Profiles
Handles the reduced CI schedule and the full training schedule of the 2D-grid
experiment.
"""
from enum import Enum
from typing import Any, Dict

from utils.errors import ConfigError


class Profile(Enum):
    """Training schedule profile."""
    CI = 'ci'
    PAPER = 'paper'

    @classmethod
    def from_string(cls, profile_str: str) -> 'Profile':
        """Convert string to Profile enum."""
        try:
            return cls(str(profile_str).lower())
        except ValueError:
            choices = ', '.join(p.value for p in cls)
            raise ConfigError(f"Unknown profile '{profile_str}' (choose from {choices})") from None


def get_profile_config(profile: str) -> Dict[str, Any]:
    """
    Get the schedule defaults for a profile.

    Values fill any field the experiment file leaves unset.

    Args:
        profile: Profile name ('ci' or 'paper')

    Returns:
        Dictionary of schedule defaults
    """
    configs = {
        Profile.CI: {
            'train_points': 10_000,
            'test_points': 2_500,
            'epochs': 40,
            'pool_size': 10,
            'samples_per_member': 12_500,
            'bootstrap_iterations': 1000,
            'classifier_epochs': 10,
            'classifier_seeds': 10,
            'description': 'Reduced schedule for fast, required acceptance runs.'
        },
        Profile.PAPER: {
            'train_points': 100_000,
            'test_points': 10_000,
            'epochs': 400,
            'pool_size': 25,
            'samples_per_member': 125_000,
            'bootstrap_iterations': 1000,
            'classifier_epochs': 10,
            'classifier_seeds': 10,
            'description': 'Full schedule: 100K points, 400 epochs, 25-member pool.'
        }
    }
    return dict(configs[Profile.from_string(profile)])
