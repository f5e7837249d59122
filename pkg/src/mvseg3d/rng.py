"""Named deterministic random streams.

One master seed fans out into independent named streams (data, mask, view,
init, ...) so experiments can share some randomness while varying one factor.
Stream identity depends only on (master_seed, name), never on creation order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Return the PCG64 generator for a named stream of a master seed."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(_name_key(name),))
    return np.random.Generator(np.random.PCG64(seq))


def substream_seed(master_seed: int, name: str) -> int:
    """A derived 63-bit seed, for APIs that take a plain integer seed."""
    return int(stream(master_seed, name).integers(0, 2**63 - 1))


def get_state(gen: np.random.Generator) -> dict:
    """JSON-serializable snapshot of a generator's position."""
    return gen.bit_generator.state


def set_state(gen: np.random.Generator, state: dict) -> None:
    gen.bit_generator.state = state
