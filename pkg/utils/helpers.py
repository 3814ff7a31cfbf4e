"""
GAN Ensemble Lab - Helper Utilities
Common utility functions used across the application.
"""
import json
import hashlib
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np


def format_timestamp(dt: datetime = None) -> str:
    """Format a datetime object for manifests (UTC, ISO-8601)."""
    if dt is None:
        dt = datetime.now(timezone.utc)
    return dt.strftime('%Y-%m-%dT%H:%M:%SZ')


def hash_text(text: str) -> str:
    """Generate a SHA-256 hash of text."""
    return hashlib.sha256(text.encode()).hexdigest()


def hash_file(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    """SHA-256 of a file's content, streamed in chunks."""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _to_builtin(value: Any) -> Any:
    """Convert numpy scalars/arrays and paths into JSON-friendly values."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (tuple, set)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def canonical_json(payload: Any) -> str:
    """Stable JSON rendering: sorted keys, no whitespace variance."""
    return json.dumps(payload, sort_keys=True, separators=(',', ':'), default=_to_builtin)


def config_hash(payload: Dict[str, Any]) -> str:
    """Hash of a resolved configuration mapping."""
    return hash_text(canonical_json(payload))


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """
    Write a JSON document deterministically.

    Args:
        path: Destination file
        payload: JSON-serializable object (numpy values allowed)

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2, default=_to_builtin)
    path.write_text(text + '\n', encoding='utf-8')
    return path


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON document."""
    return json.loads(Path(path).read_text(encoding='utf-8'))


def calculate_progress(completed: int, total: int) -> Dict[str, Any]:
    """
    Calculate progress percentage and status.

    Args:
        completed: Number of completed items
        total: Total number of items

    Returns:
        Progress information dictionary
    """
    if total == 0:
        percentage = 0
    else:
        percentage = round((completed / total) * 100, 1)

    return {
        'completed': completed,
        'total': total,
        'percentage': percentage,
        'status': 'complete' if completed == total else 'in_progress' if completed > 0 else 'not_started'
    }
