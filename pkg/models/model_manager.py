"""
GAN Ensemble Lab - Model Manager
Handles lazy loading and caching of trained member checkpoints.
"""
import logging
from pathlib import Path
from typing import Union

from models.ensemble import EnsembleMixture, MixtureComponent
from models.gan import GanMember
from utils.errors import MissingArtifactError

logger = logging.getLogger(__name__)

# Member cache, keyed by resolved checkpoint path
_members = {}


class ModelManager:
    """
    Centralized member management with lazy loading and caching.

    Members are only loaded when first requested, then cached for reuse, so
    the evaluation commands can assemble many mixtures from one pool without
    re-reading checkpoints.
    """

    @classmethod
    def get_member(cls, path: Union[str, Path]) -> GanMember:
        """
        Get a trained member from its checkpoint.

        Args:
            path: Member checkpoint (``.npz`` with a ``.json`` sidecar)

        Returns:
            GanMember in evaluation mode
        """
        key = str(Path(path).resolve())
        if key not in _members:
            if not Path(path).exists():
                raise MissingArtifactError(f"Member checkpoint not found: {path}")
            logger.debug(f"Loading member {path}")
            member = GanMember.load(path)
            member.generator.eval()
            member.discriminator.eval()
            _members[key] = member
        return _members[key]

    @classmethod
    def get_mixture(cls, root: Union[str, Path], manifest) -> EnsembleMixture:
        """Load every member a MixtureManifest names (paths relative to ``root``)."""
        components = [MixtureComponent(cls.get_member(Path(root) / entry.path), entry.weight,
                                       entry.class_id, entry.iteration)
                      for entry in manifest.members]
        return EnsembleMixture(components, manifest.T, manifest.K, manifest.method, manifest.master_seed)

    @classmethod
    def unload_all(cls) -> None:
        """Unload all members from cache."""
        _members.clear()
        logger.debug("All members unloaded")
