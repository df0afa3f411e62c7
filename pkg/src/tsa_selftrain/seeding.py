"""Deterministic seed derivation.

Every stage that needs randomness derives its own seed from a single root
seed plus a stage label, so one root seed reproduces an entire run and
stages stay independent of each other's draw order.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *labels: object) -> int:
    """Derive a stable sub-seed from a root seed and a label path.

    Uses sha256 rather than hash() so the result is stable across
    processes and platforms.
    """
    key = ":".join([str(int(root))] + [str(part) for part in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)
