"""Deterministic seeding and config hashing."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def stable_key(*parts) -> int:
    """128-bit integer key derived from the parts; stable across runs."""
    tag = ":".join(str(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(tag).digest()[:16], "little")


def stable_rng(*parts) -> np.random.Generator:
    """Counter-based generator keyed by the parts (order matters)."""
    return np.random.Generator(np.random.Philox(key=stable_key(*parts)))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Short hex digest of a JSON-serializable config."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]
