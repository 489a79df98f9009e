"""Philox4x32-10 counter-based generator.

Every random word used by the simulator is addressed by
(master seed, stream, trial, channel, draw): the 64-bit seed is the key and
the remaining indices form the 128-bit counter.  Draws are therefore
independent of execution order, chunking and thread count.
"""

import numba
import numpy as np

MASK32 = np.uint64(0xFFFFFFFF)
SHIFT32 = np.uint64(32)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
TWO32 = 1 << 32
MAX_DRAWS = 1 << 16
MAX_CHANNELS = 1 << 16


@numba.njit(inline="always", nogil=True, cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = ((p1 >> SHIFT32) ^ c1 ^ k0) & MASK32
        n2 = ((p0 >> SHIFT32) ^ c3 ^ k1) & MASK32
        c0 = n0
        c1 = p1 & MASK32
        c2 = n2
        c3 = p0 & MASK32
        k0 = (k0 + _W0) & MASK32
        k1 = (k1 + _W1) & MASK32
    return c0, c1, c2, c3


@numba.njit(inline="always", nogil=True, cache=True)
def draw_words(k0, k1, stream, trial, channel, draw):
    """Four 32-bit words for one (stream, trial, channel, draw) address."""
    t = np.uint64(trial)
    return philox4x32(
        t & MASK32,
        t >> SHIFT32,
        (np.uint64(channel) << np.uint64(16)) | np.uint64(draw),
        np.uint64(stream) & MASK32,
        k0,
        k1,
    )


def philox(counter, key):
    """Plain-Python entry point: 4 counter words and 2 key words in, 4 words out."""
    c = [np.uint64(int(v) & 0xFFFFFFFF) for v in counter]
    k = [np.uint64(int(v) & 0xFFFFFFFF) for v in key]
    return tuple(int(v) for v in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


def split_seed(seed: int) -> tuple[np.uint64, np.uint64]:
    if not 0 <= seed < 1 << 64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {seed}")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def threshold(p: float) -> np.uint64:
    """Integer cut so that ``word < threshold(p)`` happens with probability p (2**-32 grid)."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    return np.uint64(min(TWO32, int(p * TWO32)))


def uniform(word) -> float:
    return (int(word) + 0.5) / TWO32
