"""
GAN Ensemble Lab - Manifests
The run manifest records every artifact an output directory holds, with its
content hash; mixture manifests describe an assembled ensemble.
"""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from utils.errors import ConfigError, MissingArtifactError
from utils.helpers import format_timestamp, hash_file, read_json, write_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'

# bookkeeping files that are not artifacts themselves
UNTRACKED = {MANIFEST_NAME, 'nan_dump.json'}


@dataclass
class RunManifest:
    """
    Provenance of an output directory.

    ``artifacts`` maps paths relative to ``root`` to SHA-256 content hashes;
    ``stages`` holds per-command state such as the pool hash or completed
    members.
    """
    root: Path
    config_hash: str = ''
    tool_version: str = ''
    master_seed: int = 0
    created_at: str = ''
    updated_at: str = ''
    stages: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def open(cls, root: Union[str, Path], config_hash: str = '', tool_version: str = '',
             master_seed: int = 0) -> 'RunManifest':
        """Load the manifest of ``root``, or start a new one."""
        root = Path(root)
        path = root / MANIFEST_NAME
        if path.exists():
            data = read_json(path)
            return cls(root=root, **{key: data[key] for key in
                                     ('config_hash', 'tool_version', 'master_seed', 'created_at',
                                      'updated_at', 'stages', 'artifacts')})
        now = format_timestamp()
        return cls(root, config_hash, tool_version, master_seed, now, now)

    @classmethod
    def load(cls, root: Union[str, Path]) -> 'RunManifest':
        root = Path(root)
        if not (root / MANIFEST_NAME).exists():
            raise MissingArtifactError(f"No run manifest in {root}")
        return cls.open(root)

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def relative(self, path: Union[str, Path]) -> str:
        """Key of an artifact: its path relative to root, in posix form."""
        path = Path(path)
        for candidate, base in ((path, self.root), (path.resolve(), self.root.resolve())):
            try:
                return candidate.relative_to(base).as_posix()
            except ValueError:
                continue
        if path.is_absolute():
            raise MissingArtifactError(f"{path} lies outside the run directory {self.root}")
        return path.as_posix()

    def register(self, *paths: Union[str, Path]) -> None:
        """Record (or refresh) the content hash of written artifacts."""
        for path in paths:
            key = self.relative(path)
            full = self.root / key
            if not full.exists():
                raise MissingArtifactError(f"Cannot register missing artifact {full}")
            self.artifacts[key] = hash_file(full)

    def has(self, path: Union[str, Path]) -> bool:
        key = self.relative(path)
        return key in self.artifacts and (self.root / key).exists()

    def stage(self, name: str) -> Dict[str, Any]:
        return self.stages.setdefault(name, {})

    def verify(self, paths: Optional[List[str]] = None) -> None:
        """Check that artifacts exist and match their recorded hashes."""
        for key in (paths if paths is not None else sorted(self.artifacts)):
            full = self.root / key
            if key not in self.artifacts:
                raise MissingArtifactError(f"{key} is not recorded in the manifest")
            if not full.exists():
                raise MissingArtifactError(f"Artifact missing: {full}")
            if hash_file(full) != self.artifacts[key]:
                raise MissingArtifactError(f"Artifact changed since it was recorded: {full}")

    def orphans(self) -> List[str]:
        """Files under root that the manifest does not list."""
        found = []
        for path in sorted(self.root.rglob('*')):
            if path.is_file():
                key = path.relative_to(self.root).as_posix()
                if key not in self.artifacts and key not in UNTRACKED:
                    found.append(key)
        return found

    def save(self) -> Path:
        self.updated_at = format_timestamp()
        payload = {key: value for key, value in asdict(self).items() if key != 'root'}
        return write_json(self.path, payload)


@dataclass
class MixtureEntry:
    path: str
    weight: float
    class_id: int
    iteration: int
    seed: int


@dataclass
class MixtureManifest:
    """Member checkpoints (relative to the run root), weights, class ids, T, K and seed."""
    method: str
    T: int
    K: int
    master_seed: int
    members: List[MixtureEntry] = field(default_factory=list)
    running_weights: Dict[str, List[float]] = field(default_factory=dict)

    def save(self, path: Union[str, Path]) -> Path:
        return write_json(path, asdict(self))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'MixtureManifest':
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"Mixture manifest not found: {path}")
        data = read_json(path)
        try:
            members = [MixtureEntry(**entry) for entry in data.pop('members')]
            return cls(members=members, **data)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"{path}: malformed mixture manifest ({e})") from None
