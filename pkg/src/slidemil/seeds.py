"""Deterministic derivation of independent RNG streams from one master seed."""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, tag: str) -> int:
    """Map (seed, purpose tag) to a reproducible 64-bit stream seed."""
    digest = hashlib.sha256(f"{int(seed)}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
