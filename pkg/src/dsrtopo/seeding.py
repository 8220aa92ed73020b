"""Deterministic derivation of component seeds from a master seed.

Every stochastic component draws its seed as ``derive_seed(master, tag)``
with a stable string tag, so whole experiment trees are reproducible from a
single integer.
"""

import hashlib


def derive_seed(master: int, tag: str) -> int:
    """Stable 63-bit seed for a named component under a master seed."""
    digest = hashlib.sha256(f"dsrtopo:{master}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
