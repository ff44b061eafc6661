"""Stable derivation of child RNG seeds.

Child seeds are SHA-256 hashes of their label parts, so every stage of a
run (per-iteration temperatures, per-proposal searches, per-tree
bootstraps) draws from an independent stream that depends only on the
master seed and the stage's position, never on how much randomness
earlier stages consumed. This is what makes interrupted runs resumable
bit-for-bit.
"""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Map label parts to a 64-bit seed, stably across runs and platforms."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
