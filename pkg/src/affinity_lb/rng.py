"""Counter-based random streams.

Every random number in a run is ``mix(key + counter * GAMMA)`` for a
64-bit ``key`` derived from the user seed and a path of labels, so
streams can be split deterministically (``derive_key``) and both kernel
backends draw bit-identical sequences.  A stream lives in a
``uint64[2]`` array ``[key, counter]`` so jitted kernels can advance it
in place.
"""

import hashlib

import numpy as np

from ._accel import USE_NUMBA, jit

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0 ** -53


def _mix_int(z):
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_key(seed, *path):
    """64-bit stream key for ``seed`` and a path of labels (str or int)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return _mix_int(int.from_bytes(h.digest(), "little"))


def new_stream(key):
    return np.array([key & MASK64, 0], dtype=np.uint64)


if USE_NUMBA:
    _G = np.uint64(_GAMMA)
    _U1 = np.uint64(_M1)
    _U2 = np.uint64(_M2)
    _S30 = np.uint64(30)
    _S27 = np.uint64(27)
    _S31 = np.uint64(31)
    _S11 = np.uint64(11)
    _ONE = np.uint64(1)

    @jit
    def next_uniform(st):
        """Uniform double in [0, 1) with 53 random bits; advances ``st``."""
        st[1] += _ONE
        z = st[0] + st[1] * _G
        z = (z ^ (z >> _S30)) * _U1
        z = (z ^ (z >> _S27)) * _U2
        z = z ^ (z >> _S31)
        return (z >> _S11) * _INV53

else:

    def next_uniform(st):
        """Uniform double in [0, 1) with 53 random bits; advances ``st``."""
        c = (int(st[1]) + 1) & MASK64
        st[1] = c
        z = _mix_int((int(st[0]) + c * _GAMMA) & MASK64)
        return (z >> 11) * _INV53


@jit
def next_index(st, n):
    """Uniform integer in ``[0, n)``."""
    k = int(next_uniform(st) * n)
    if k >= n:
        k = n - 1
    return k


class CounterRNG:
    """Python handle on a counter-based stream.

    Wraps the ``uint64[2]`` state array so the same stream can be passed
    to jitted kernels (``rng.state``) and used from Python.
    """

    def __init__(self, seed=0, *path, key=None):
        self.key = derive_key(seed, *path) if key is None else int(key) & MASK64
        self.state = new_stream(self.key)

    def uniform(self):
        return float(next_uniform(self.state))

    def integers(self, n):
        if n < 1:
            raise ValueError("n must be positive")
        return int(next_index(self.state, n))

    def spawn(self, *path):
        """Independent child stream keyed off this stream's key."""
        return CounterRNG(key=derive_key(self.key, *path))

    def numpy(self):
        """numpy ``Generator`` (Philox, itself counter-based) keyed off this stream.

        Used for vectorised Python-side draws such as random initial states.
        """
        return np.random.Generator(np.random.Philox(key=self.key))
