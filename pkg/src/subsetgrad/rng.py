"""Counter-based random streams keyed by ``(seed, stream)``.

Philox lets any (seed, iteration) pair be reached directly, so results do not
depend on the order in which parallel workers consume randomness.
"""
import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF


def generator(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) & _MASK, int(stream) & _MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniform_open(seed: int, stream: int, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1)."""
    u = generator(seed, stream).random(shape)
    # random() samples [0, 1); nudge the (rare) exact zero into the open interval
    u[u == 0.0] = np.nextafter(0.0, 1.0)
    return u
