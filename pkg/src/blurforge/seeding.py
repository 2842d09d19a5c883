"""Deterministic seed derivation and counter-based random streams.

Every random draw in the package flows through a Philox generator keyed by
a stable 64-bit hash, so outputs are identical across runs, platforms, and
worker counts. Nothing here touches numpy's global RNG state.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*parts: int | float | str) -> int:
    """Stable 64-bit seed from a mixed tuple of ints, floats, and strings.

    BLAKE2b over a type-tagged encoding; unlike builtin hash() the result
    does not depend on PYTHONHASHSEED or the platform.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (bool, int, np.integer)):
            h.update(b"i")
            h.update(int(part).to_bytes(16, "little", signed=True))
        elif isinstance(part, (float, np.floating)):
            h.update(b"f")
            h.update(np.float64(part).tobytes())
        elif isinstance(part, str):
            h.update(b"s")
            h.update(part.encode("utf-8"))
        else:
            raise TypeError(f"cannot derive seed from {type(part).__name__}")
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def stream(*parts: int | float | str) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by derive_seed(*parts)."""
    return np.random.Generator(np.random.Philox(key=derive_seed(*parts) & _MASK64))
