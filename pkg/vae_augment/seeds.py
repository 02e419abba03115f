from __future__ import annotations

import hashlib
import json
from typing import Union

import numpy as np

SeedPart = Union[int, str]

SEED_BITS = 63


def derive_seed(master_seed: int, *tags: SeedPart) -> int:
    """Hash a master seed and a path of stage tags into an independent seed.

    The same (master, tags) pair always yields the same seed, and adding a new
    tag path never changes the seeds handed out for existing ones.
    """
    payload = json.dumps([int(master_seed), *[str(tag) for tag in tags]], separators=(",", ":"))
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> (64 - SEED_BITS)


def make_rng(master_seed: int, *tags: SeedPart) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, *tags))
