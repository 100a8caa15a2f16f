"""Stable 64-bit seed derivation.

Seeds for independent streams (trial matrices, operators, ...) are derived
with a splitmix64 chain over the base seed and integer/string coordinates, so
the mapping never depends on Python's randomized ``hash``.
"""
import zlib

_MASK = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _coord(c):
    if isinstance(c, str):
        return zlib.crc32(c.encode("utf-8"))
    return int(c) & _MASK


def derive_seed(base, *coords):
    """Mix ``base`` with ``coords`` into a 63-bit non-negative seed."""
    h = splitmix64(int(base) & _MASK)
    for c in coords:
        h = splitmix64(h ^ _coord(c))
    return h >> 1
