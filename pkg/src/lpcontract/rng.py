"""Counter-based random streams.

Every stream is Philox4x64-10 keyed by ``seed`` in the low 64 bits and a
stream index in the high 64 bits, with the counter starting at zero. Any
implementation of that generator reproduces the raw 64-bit words; the
derived normal/uniform variates follow numpy's Generator transforms.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    seed = int(seed)
    stream = int(stream)
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative")
    key = (seed & _MASK64) | ((stream & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def spawn(seed: int, n: int, offset: int = 0) -> list[np.random.Generator]:
    """Independent per-work-unit streams ``offset .. offset + n - 1``."""
    return [make_rng(seed, offset + i) for i in range(n)]
