"""
GAN Ensemble Lab - Commands Package
Click command groups for pool training, boosting, sampling and evaluation.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import click

from config import ExperimentConfig, load_experiment


@dataclass
class RunContext:
    """Global flags shared by every subcommand."""
    config_path: Optional[Path] = None
    overrides: Dict[str, Any] = field(default_factory=dict)
    workers: Optional[int] = None
    resume: bool = False
    _config: Optional[ExperimentConfig] = None

    @property
    def config(self) -> ExperimentConfig:
        if self._config is None:
            self._config = load_experiment(self.config_path, self.overrides, self.workers)
        return self._config


pass_run = click.make_pass_decorator(RunContext, ensure=True)
