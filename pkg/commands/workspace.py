"""
GAN Ensemble Lab - Run Workspace
Output-directory layout and the shared steps every command starts from.

    <out>/manifest.json
    <out>/data/{train,test}.csv            real data (+ .meta.json sidecars)
    <out>/pool/members/c<k>_m<m>.npz       pool member checkpoints (+ .json)
    <out>/pool/samples/samples_c<k>_m<m>.npz
    <out>/boost/members/c<k>_t<t>.npz      boosted member checkpoints (+ .json)
    <out>/boost/weights/c<k>_t<t>.npy      data weights after iteration t
    <out>/boost/samples/samples_c<k>_m<t>.npz  boosted member sample caches
    <out>/boost/state_c<k>.json
    <out>/mixtures/<method>_T<T>.json      mixture manifests
    <out>/samples/<method>_T<T>.csv        synthesized datasets
    <out>/reports/...                      CSV / JSON reports and figures
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple

from config import VERSION, ExperimentConfig
from data.grid import LabeledDataset, assign_labels, sample_real
from data.manifest import RunManifest
from data.store import load_dataset, save_dataset, sidecar_path
from utils.rng import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def train_data(self) -> Path:
        return self.root / 'data' / 'train.csv'

    @property
    def test_data(self) -> Path:
        return self.root / 'data' / 'test.csv'

    def pool_member(self, index: int, class_id: int) -> Path:
        return self.root / 'pool' / 'members' / f"c{class_id:02d}_m{index:03d}.npz"

    @property
    def pool_samples(self) -> Path:
        return self.root / 'pool' / 'samples'

    def boost_member(self, iteration: int, class_id: int) -> Path:
        return self.root / 'boost' / 'members' / f"c{class_id:02d}_t{iteration:03d}.npz"

    def boost_weights(self, iteration: int, class_id: int) -> Path:
        return self.root / 'boost' / 'weights' / f"c{class_id:02d}_t{iteration:03d}.npy"

    @property
    def boost_samples(self) -> Path:
        return self.root / 'boost' / 'samples'

    def boost_state(self, class_id: int) -> Path:
        return self.root / 'boost' / f"state_c{class_id:02d}.json"

    def mixture(self, method: str, T: int) -> Path:
        return self.root / 'mixtures' / f"{method}_T{T}.json"

    def samples(self, method: str, T: int) -> Path:
        return self.root / 'samples' / f"{method}_T{T}.csv"

    @property
    def reports(self) -> Path:
        return self.root / 'reports'

    @property
    def figures(self) -> Path:
        return self.root / 'reports' / 'figures'


def open_manifest(config: ExperimentConfig) -> RunManifest:
    config.output_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.open(config.output_dir, config.hash(), VERSION, config.master_seed)
    manifest.config_hash = config.hash()
    manifest.tool_version = VERSION
    return manifest


def prepare_data(config: ExperimentConfig, manifest: RunManifest) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Real train/test sets labeled with mode ids, written once per run directory.

    Returns:
        (train, test) with scheme 'modes'
    """
    layout = RunLayout(config.output_dir)
    if manifest.has(layout.train_data) and manifest.has(layout.test_data):
        manifest.verify([manifest.relative(layout.train_data), manifest.relative(layout.test_data)])
        return load_dataset(layout.train_data), load_dataset(layout.test_data)

    train_seed = derive_seed(config.master_seed, 'train-data')
    test_seed = derive_seed(config.master_seed, 'test-data')
    train = assign_labels(sample_real(config.grid, config.train_points, train_seed), config.grid, 'modes', train_seed)
    test = assign_labels(sample_real(config.grid, config.test_points, test_seed), config.grid, 'modes', test_seed)
    for dataset, path in ((train, layout.train_data), (test, layout.test_data)):
        save_dataset(dataset, path)
        manifest.register(path, sidecar_path(path))
    logger.info(f"Drew {len(train)} training and {len(test)} test points")
    return train, test


def training_view(train: LabeledDataset, scheme: str) -> LabeledDataset:
    """The training set as seen by the GAN members (classes of ``scheme``)."""
    return train if scheme == 'modes' else train.relabel(scheme)
