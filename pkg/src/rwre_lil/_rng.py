"""Counter-based hashing used for every random draw in the package.

All randomness is a pure function of (key, counter): a site's kernel depends
only on (env_seed, coordinates) and a walk's k-th uniform only on
(replica_seed, k). Nothing carries state between calls, so replicas can run
on any number of workers and still reproduce bit-for-bit.

The mixer is the SplitMix64 finalizer. Python-int versions live next to the
numba versions; tests check that the two agree.
"""

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# role tags keep environment, walk and bootstrap streams apart
TAG_ENV = 0x454E5649524F4E4D
TAG_WALK = 0x57414C4B53544550
TAG_BOOT = 0x424F4F5453545250

_U_GAMMA = np.uint64(GAMMA)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0


def mix64_py(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key_py(seed: int, tag: int) -> int:
    return mix64_py((seed & MASK64) ^ tag)


def draw_py(key: int, counter: int) -> int:
    """Raw 64-bit output number `counter` of the stream `key`."""
    return mix64_py(key + (counter + 1) * GAMMA)


def to_unit_py(h: int) -> float:
    return (h >> 11) * _INV53


def site_key_py(env_key: int, site) -> int:
    h = env_key
    for c in site:
        h = mix64_py(h + (int(c) & MASK64) * _M1 + GAMMA)
    return h


def derive_seed(master_seed: int, tag: int, index: int) -> int:
    """64-bit child seed for (master_seed, role tag, index).

    child = mix64(mix64(master ^ tag) + (index + 1) * GAMMA), i.e. output
    `index` of a SplitMix64 stream keyed by the tagged master seed.
    """
    return draw_py(stream_key_py(master_seed, tag), index)


@nb.njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def draw(key, counter):
    return mix64(key + (np.uint64(counter) + _ONE) * _U_GAMMA)


@nb.njit(cache=True)
def to_unit(h):
    return np.float64(h >> _S11) * _INV53


@nb.njit(cache=True)
def site_key(env_key, pos):
    h = env_key
    for i in range(pos.shape[0]):
        h = mix64(h + np.uint64(pos[i]) * _U_M1 + _U_GAMMA)
    return h
