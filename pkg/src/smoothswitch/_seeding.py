import hashlib
import struct

import numpy as np

_MASK64 = (1 << 64) - 1


def hash64(*parts: int) -> int:
    """Deterministic 64-bit hash of a tuple of integers.

    Used as the seed-splitting rule everywhere a child stream is derived
    from a parent seed, e.g. ``hash64(master_seed, round_index)`` or
    ``hash64(rng_seed, worker_id, stream_tag)``.
    """
    payload = b"".join(struct.pack(">Q", int(p) & _MASK64) for p in parts)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "big")


def make_rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng(hash64(*parts))
