"""Named random substreams derived from one master seed."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("dataset", "init", "kmeans", "protocol", "labels")


def derive_seed(master: int, stream: str, *keys: int) -> int:
    """Deterministic 32-bit seed for ``stream`` under ``master`` and integer ``keys``."""
    entropy = [int(master) & 0xFFFFFFFF, zlib.crc32(stream.encode())]
    entropy += [int(k) & 0xFFFFFFFF for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
