"""
GAN Ensemble Lab - Checkpoints
Self-describing, bit-exact persistence of models and optimizer state.

Layout: an uncompressed numpy ``.npz`` archive (a zip of ``.npy`` members,
each carrying dtype, shape and a row-major little-endian float64 payload).
Member names:

    format_version                      int64 scalar (currently 1)
    seed                                int64 scalar
    step                                int64 scalar
    <model>/param/<index>.<name>        float64 parameter array
    <model>/buffer/<index>.<name>       float64 batchnorm running statistic
    <optimizer>/adam/hyper              float64 [learning_rate, beta1, beta2, epsilon]
    <optimizer>/adam/step_count         int64 scalar
    <optimizer>/adam/m/<index>.<name>   float64 first moment
    <optimizer>/adam/v/<index>.<name>   float64 second moment

``<model>`` and ``<optimizer>`` are caller-chosen tags such as ``generator``.
Loading never executes pickled objects (``allow_pickle=False``).
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from models.mlp import MlpModel
from models.optim import AdamState
from utils.errors import MissingArtifactError, ShapeError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    """Decoded checkpoint content."""
    seed: int
    step: int
    models: Dict[str, Dict[str, Dict[str, np.ndarray]]] = field(default_factory=dict)
    optimizers: Dict[str, AdamState] = field(default_factory=dict)


def save_checkpoint(path: Union[str, Path], models: Dict[str, MlpModel],
                    optimizers: Optional[Dict[str, AdamState]] = None,
                    seed: int = 0, step: int = 0) -> Path:
    """
    Write models and optimizer states to ``path``.

    Args:
        path: Destination ``.npz`` file
        models: Tag -> model
        optimizers: Tag -> Adam state
        seed: RNG seed the run was started from
        step: Training step count

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays: Dict[str, np.ndarray] = {
        'format_version': np.array(FORMAT_VERSION, dtype=np.int64),
        'seed': np.array(seed, dtype=np.int64),
        'step': np.array(step, dtype=np.int64),
    }
    for tag, model in models.items():
        for name, value in model.parameters().items():
            arrays[f"{tag}/param/{name}"] = value
        for name, value in model.buffers().items():
            arrays[f"{tag}/buffer/{name}"] = value
    for tag, state in (optimizers or {}).items():
        arrays[f"{tag}/adam/hyper"] = np.array(
            [state.learning_rate, state.beta1, state.beta2, state.epsilon], dtype=np.float64)
        arrays[f"{tag}/adam/step_count"] = np.array(state.step_count, dtype=np.int64)
        for name, value in state.first_moment.items():
            arrays[f"{tag}/adam/m/{name}"] = value
        for name, value in state.second_moment.items():
            arrays[f"{tag}/adam/v/{name}"] = value

    with open(path, 'wb') as f:
        np.savez(f, **arrays)
    logger.debug(f"Saved checkpoint {path} ({len(arrays)} arrays)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint written by ``save_checkpoint``."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"Checkpoint not found: {path}")

    with np.load(path, allow_pickle=False) as archive:
        version = int(archive['format_version'])
        if version != FORMAT_VERSION:
            raise ShapeError(f"{path}: unsupported checkpoint version {version}")
        checkpoint = Checkpoint(seed=int(archive['seed']), step=int(archive['step']))
        hyper: Dict[str, np.ndarray] = {}
        for key in archive.files:
            parts = key.split('/')
            if len(parts) == 1:
                continue
            tag, section = parts[0], parts[1]
            if section in ('param', 'buffer'):
                group = 'params' if section == 'param' else 'buffers'
                state = checkpoint.models.setdefault(tag, {'params': {}, 'buffers': {}})
                state[group]['/'.join(parts[2:])] = archive[key].copy()
            elif section == 'adam':
                opt = checkpoint.optimizers.setdefault(tag, AdamState())
                field_name = parts[2]
                if field_name == 'hyper':
                    hyper[tag] = archive[key]
                elif field_name == 'step_count':
                    opt.step_count = int(archive[key])
                elif field_name == 'm':
                    opt.first_moment['/'.join(parts[3:])] = archive[key].copy()
                elif field_name == 'v':
                    opt.second_moment['/'.join(parts[3:])] = archive[key].copy()
        for tag, values in hyper.items():
            opt = checkpoint.optimizers[tag]
            opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon = (float(v) for v in values)
    return checkpoint


def restore_models(checkpoint: Checkpoint, models: Dict[str, MlpModel]) -> None:
    """Copy checkpointed state into freshly built models of the same architecture."""
    for tag, model in models.items():
        if tag not in checkpoint.models:
            raise ShapeError(f"checkpoint has no model tagged '{tag}'")
        model.load_state_dict(checkpoint.models[tag])
