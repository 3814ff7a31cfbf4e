"""
GAN Ensemble Lab - Dataset Store
CSV persistence (x, y, label[, member]) with a JSON metadata sidecar.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from data.grid import GridSpec, LabeledDataset
from utils.errors import MissingArtifactError, ShapeError
from utils.helpers import read_json, write_json

logger = logging.getLogger(__name__)

# repr-precision floats make the CSV round trip bit-exact
FLOAT_FORMAT = '%.17g'


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + '.meta.json')


def save_dataset(dataset: LabeledDataset, path: Union[str, Path],
                 provenance: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write a dataset as CSV plus a metadata sidecar.

    Args:
        dataset: Dataset to persist
        path: CSV destination
        provenance: Extra metadata (e.g. the mixture manifest it came from)

    Returns:
        Path of the CSV file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({'x': dataset.points[:, 0], 'y': dataset.points[:, 1], 'label': dataset.labels})
    if dataset.origin is not None:
        frame['member'] = dataset.origin
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

    write_json(sidecar_path(path), {
        'spec': dataset.spec.to_dict(),
        'seed': dataset.seed,
        'scheme': dataset.scheme,
        'class_count': dataset.class_count,
        'rows': len(dataset),
        'provenance': provenance or {},
    })
    logger.info(f"Wrote {len(dataset)} points to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> LabeledDataset:
    """
    Read a dataset written by ``save_dataset`` and validate its invariants.

    Args:
        path: CSV file

    Returns:
        LabeledDataset
    """
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.exists() or not meta_path.exists():
        raise MissingArtifactError(f"Dataset or metadata missing: {path}")
    meta = read_json(meta_path)
    frame = pd.read_csv(path, float_precision='round_trip')
    for column in ('x', 'y', 'label'):
        if column not in frame.columns:
            raise ShapeError(f"{path}: missing column '{column}'")
    if len(frame) != meta['rows']:
        raise ShapeError(f"{path}: {len(frame)} rows, metadata says {meta['rows']}")
    origin = frame['member'].to_numpy(dtype=np.int64) if 'member' in frame.columns else None
    return LabeledDataset(
        points=frame[['x', 'y']].to_numpy(dtype=np.float64),
        labels=frame['label'].to_numpy(dtype=np.int64),
        class_count=int(meta['class_count']),
        spec=GridSpec(**meta['spec']),
        seed=meta.get('seed'),
        scheme=meta.get('scheme', 'checkerboard'),
        origin=origin,
    )


def load_provenance(path: Union[str, Path]) -> Dict[str, Any]:
    return read_json(sidecar_path(path)).get('provenance', {})
