"""Counter-based random streams.

A stream is a 64-bit key; draw ``k`` of the stream is ``mix64(key + (k + 1) * GAMMA)``
mapped to ``(0, 1)``. Keys are derived by hashing:

    master      = mix64(seed)
    domain key  = derive(master, domain)
    path key    = derive(domain key, path index)
    nested key  = derive(derive(inner domain key, outer index), inner index)

with ``derive(k, n) = mix64(k ^ mix64((n + 1) * GAMMA))`` and ``mix64`` the
SplitMix64 finaliser. Because every path owns its key, results do not depend on
how paths are split across workers.
"""
import numpy as np
from numba import njit

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

DOMAIN_PATHS = 0
DOMAIN_INNER = 1
DOMAIN_REFERENCE = 2


@njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def derive(key, index):
    return mix64(np.uint64(key) ^ mix64((np.uint64(index) + _ONE) * GAMMA))


@njit(cache=True)
def uniform(key, counter):
    x = mix64(np.uint64(key) + (np.uint64(counter) + _ONE) * GAMMA)
    return (float(x >> _S11) + 0.5) * _INV53


def master_key(seed: int) -> np.uint64:
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.uint64(mix64(np.uint64(int(seed))))


# numba hands uint64 results back as Python ints; re-wrap before the next call
# so values above 2**63 are not typed as int64
def path_key(seed: int, index: int, domain: int = DOMAIN_PATHS) -> np.uint64:
    return np.uint64(derive(domain_key(seed, domain), np.uint64(index)))


def domain_key(seed: int, domain: int) -> np.uint64:
    return np.uint64(derive(master_key(seed), np.uint64(domain)))
