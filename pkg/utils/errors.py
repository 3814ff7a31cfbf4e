"""
GAN Ensemble Lab - Errors
Exception hierarchy shared by the engine, the experiment pipeline and the CLI.
"""
from typing import Any, Dict, Optional


class EnsembleGanError(Exception):
    """Base class for every error raised by the lab."""

    exit_code = 1


class ConfigError(EnsembleGanError):
    """Invalid configuration or command-line usage."""

    exit_code = 2


class ShapeError(EnsembleGanError, ValueError):
    """Array shape does not match what a layer or operation expects."""


class BackwardBeforeForwardError(EnsembleGanError, RuntimeError):
    """backward() called on a model without cached forward intermediates."""


class InsufficientDataError(EnsembleGanError, ValueError):
    """Too few points to form a single minibatch."""

    exit_code = 2


class NonFiniteError(EnsembleGanError, FloatingPointError):
    """
    NaN or Inf detected.

    Carries a diagnostic ``state`` dictionary (epoch, step, losses, parameter
    norms, ...) that the CLI dumps next to the run outputs.
    """

    exit_code = 3

    def __init__(self, message: str, state: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.state = state or {}


class DegenerateWeightsError(EnsembleGanError):
    """Boosting weights collapsed onto fewer points than one minibatch."""

    exit_code = 3

    def __init__(self, message: str, iteration: int, class_id: int, support: int):
        super().__init__(message)
        self.iteration = iteration
        self.class_id = class_id
        self.support = support


class MissingArtifactError(EnsembleGanError, FileNotFoundError):
    """A file referenced by a manifest is absent or does not match its hash."""

    exit_code = 4
