"""Deterministic seed derivation.

Every randomized component takes its own seed derived from a single master
seed, so adding a component (or reordering calls) never shifts the random
stream of another. Derivation hashes "<master>:<component>" with SHA-256 and
keeps the low 64 bits.
"""

from __future__ import annotations

import hashlib
import os

ENV_SEED_VAR = "REPRBENCH_SEED"
DEFAULT_MASTER_SEED = 0


def derive_seed(master_seed: int, component: str) -> int:
    """Stable per-component seed in [0, 2**64)."""
    if not component:
        raise ValueError("component name must be non-empty")
    digest = hashlib.sha256(f"{master_seed}:{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def resolve_master_seed(explicit: int | None = None) -> int:
    """Explicit seed wins, then the REPRBENCH_SEED env var, then 0."""
    if explicit is not None:
        return int(explicit)
    env = os.environ.get(ENV_SEED_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValueError(f"{ENV_SEED_VAR} must be an integer, got {env!r}") from exc
    return DEFAULT_MASTER_SEED
