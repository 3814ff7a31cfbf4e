"""
GAN Ensemble Lab - Random Streams
Seed-stream derivation so that results never depend on scheduling order.

Every random draw in the lab comes from a numpy ``Generator`` backed by the
counter-based Philox bit generator. Streams are addressed by
``(master_seed, purpose, *indices)``: the purpose string is reduced to a
CRC-32 code and the tuple feeds a ``SeedSequence``. Two calls with the same
address always yield the same stream, whichever worker or thread runs them.
"""
import zlib
from typing import Tuple

import numpy as np


def _entropy(seed: int, purpose: str, indices: Tuple[int, ...]) -> list:
    if seed < 0:
        raise ValueError(f"Seeds must be non-negative, got {seed}")
    code = zlib.crc32(purpose.encode('utf-8'))
    return [int(seed), code] + [int(i) for i in indices]


def derive_seed(seed: int, purpose: str, *indices: int) -> int:
    """
    Derive a child seed: seed(master, purpose, index...).

    Args:
        seed: Parent seed
        purpose: Stream name, e.g. 'member' or 'bootstrap'
        *indices: Integer coordinates (member index, class id, iteration...)

    Returns:
        A 63-bit non-negative integer seed
    """
    state = np.random.SeedSequence(_entropy(seed, purpose, indices)).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


def make_rng(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Build a Philox-backed generator for the given stream address."""
    sequence = np.random.SeedSequence(_entropy(seed, purpose, indices))
    return np.random.Generator(np.random.Philox(sequence))
