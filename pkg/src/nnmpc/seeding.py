"""Deterministic seed fan-out.

One global seed reproduces a whole experiment: every component derives its
own seed as (global_seed + crc32(component_tag)) mod 2**32, so independent
stages never consume from a shared RNG stream.
"""

import zlib

import numpy as np

_MOD = 2**32


def derive_seed(seed: int, tag: str) -> int:
    return (int(seed) + zlib.crc32(tag.encode("utf-8"))) % _MOD


def rng_for(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, tag))
