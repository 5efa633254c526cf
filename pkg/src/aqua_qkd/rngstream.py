"""Counter-based random streams for reproducible parallel Monte Carlo.

Implements the Philox4x32-10 block cipher (Salmon et al., Random123) as a
pure-numpy vectorized function.  Each (seed, stream, counter) triple maps to
one uniform double, so any photon history can regenerate its own random
sequence independently of execution order or worker count.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)

# 2^-64 scaling; +1 keeps the output in the half-open interval (0, 1].
_INV64 = 1.0 / 18446744073709551616.0


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Run 10 Philox4x32 rounds on vectorized counter/key words.

    All arguments are uint32 arrays (or scalars) broadcast together.
    Returns the four output words as uint32 arrays.
    """
    c0 = np.asarray(c0, dtype=np.uint32)
    c1 = np.asarray(c1, dtype=np.uint32)
    c2 = np.asarray(c2, dtype=np.uint32)
    c3 = np.asarray(c3, dtype=np.uint32)
    k0 = np.asarray(k0, dtype=np.uint32)
    k1 = np.asarray(k1, dtype=np.uint32)
    with np.errstate(over="ignore"):  # uint32 wraparound is the round function
        for _ in range(10):
            p0 = c0.astype(np.uint64) * _M0
            p1 = c2.astype(np.uint64) * _M1
            hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
            lo0 = (p0 & _MASK32).astype(np.uint32)
            hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
            lo1 = (p1 & _MASK32).astype(np.uint32)
            c0 = hi1 ^ c1 ^ k0
            c1 = lo1
            c2 = hi0 ^ c3 ^ k1
            c3 = lo0
            k0 = k0 + _W0
            k1 = k1 + _W1
    return c0, c1, c2, c3


def _key_words(seed: int):
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    return np.uint32(s & _MASK32), np.uint32(s >> np.uint64(32))


def uniform(seed: int, stream, counter):
    """Uniform double in (0, 1] for each (stream, counter) pair.

    ``stream`` and ``counter`` are broadcastable uint64 arrays; the value is
    a pure function of (seed, stream, counter).
    """
    stream = np.asarray(stream, dtype=np.uint64)
    counter = np.asarray(counter, dtype=np.uint64)
    k0, k1 = _key_words(seed)
    w0, w1, _, _ = philox4x32(
        counter & _MASK32,
        counter >> np.uint64(32),
        stream & _MASK32,
        stream >> np.uint64(32),
        k0,
        k1,
    )
    bits = (w0.astype(np.uint64) << np.uint64(32)) | w1.astype(np.uint64)
    return (bits.astype(np.float64) + 1.0) * _INV64


def normal_pair(seed: int, stream, counter):
    """Two independent standard normals per stream via Box-Muller.

    Consumes counters ``counter`` and ``counter + 1``.
    """
    counter = np.asarray(counter, dtype=np.uint64)
    u1 = uniform(seed, stream, counter)
    u2 = uniform(seed, stream, counter + np.uint64(1))
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)
