"""Counter-based splitmix64 random streams.

Every stochastic component draws from an :class:`RngStream` identified by a
``(seed, stream_id)`` pair.  Output ``c`` of a stream is
``mix64(key + (c + 1) * GOLDEN)``, so any draw can be recomputed from its
counter alone; this is what lets per-tree, per-layer and per-(AP, RP) streams
stay independent of execution order.

Scalar draws use plain Python integers and vector draws use ``uint64`` numpy
arrays.  Both paths are bit-identical for uniforms and integers.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)


def mix64(z):
    """splitmix64 finalizer for a Python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _U_M1
    z = (z ^ (z >> np.uint64(27))) * _U_M2
    return z ^ (z >> np.uint64(31))


def derive_key(key, index):
    """Key of child stream ``index`` under ``key``."""
    return mix64(key ^ mix64((index + 1) * GOLDEN))


def derive_keys(key, indices):
    """Vectorized :func:`derive_key` over an integer array of indices."""
    idx = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        child = mix64_array((idx + np.uint64(1)) * _U_GOLDEN)
        return mix64_array(np.uint64(key) ^ child)


def keyed_uniform(keys, counters):
    """Uniform [0, 1) draws for broadcast arrays of stream keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        bits = mix64_array(keys + (counters + np.uint64(1)) * _U_GOLDEN)
    return (bits >> np.uint64(11)).astype(np.float64) * _INV_2_53


def keyed_normal(keys, counters):
    """Standard normals via Box-Muller; normal ``c`` consumes counters 2c, 2c+1."""
    counters = np.asarray(counters, dtype=np.uint64)
    u1 = 1.0 - keyed_uniform(keys, counters * np.uint64(2))
    u2 = keyed_uniform(keys, counters * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class RngStream:
    """A seekable random stream.

    ``RngStream(seed, stream_id)`` with equal arguments always yields the same
    sequence.  ``child(i)`` derives a nested independent stream.
    """

    __slots__ = ("seed", "stream_id", "key", "counter")

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        self.key = derive_key(mix64(self.seed), self.stream_id)
        self.counter = 0

    @classmethod
    def _from_key(cls, key, seed, stream_id):
        obj = cls.__new__(cls)
        obj.seed = seed
        obj.stream_id = stream_id
        obj.key = key
        obj.counter = 0
        return obj

    def child(self, index):
        return RngStream._from_key(derive_key(self.key, int(index)), self.seed, self.stream_id)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    # scalar draws

    def next_u64(self):
        self.counter += 1
        return mix64(self.key + self.counter * GOLDEN)

    def uniform(self, low=0.0, high=1.0):
        u = (self.next_u64() >> 11) * _INV_2_53
        return low + (high - low) * u

    def integer(self, high):
        """Uniform integer in ``[0, high)``."""
        if high <= 0:
            raise ValueError("high must be positive")
        return min(int(self.uniform() * high), high - 1)

    def bernoulli(self, p):
        return self.uniform() < p

    def poisson(self, lam):
        if lam < 0:
            raise ValueError("lam must be non-negative")
        if lam == 0:
            return 0
        u = self.uniform()
        p = math.exp(-lam)
        cdf = p
        k = 0
        while u > cdf and p > 0.0:
            k += 1
            p *= lam / k
            cdf += p
        return k

    def geometric(self, mean):
        """Geometric variate on {1, 2, ...} with the given mean (>= 1)."""
        if mean < 1:
            raise ValueError("mean must be >= 1")
        p = 1.0 / mean
        if p >= 1.0:
            self.uniform()
            return 1
        u = self.uniform()
        return 1 + int(math.log1p(-u) / math.log1p(-p))

    # vector draws

    def _counters(self, n):
        start = self.counter
        self.counter += n
        return np.arange(start, start + n, dtype=np.uint64)

    def uniforms(self, n, low=0.0, high=1.0):
        u = keyed_uniform(self.key, self._counters(n))
        return low + (high - low) * u

    def normals(self, n, loc=0.0, scale=1.0):
        # normals occupy their own counter range: 2 raw outputs each
        start = self.counter
        self.counter += 2 * n
        idx = np.arange(n, dtype=np.uint64)
        u1 = 1.0 - keyed_uniform(self.key, np.uint64(start) + np.uint64(2) * idx)
        u2 = keyed_uniform(self.key, np.uint64(start + 1) + np.uint64(2) * idx)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return loc + scale * z

    def integers(self, n, high):
        u = self.uniforms(n)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def permutation(self, n):
        return np.argsort(self.uniforms(n), kind="stable")

    def sample_without_replacement(self, n, k):
        if k > n:
            raise ValueError("cannot draw more items than available")
        return self.permutation(n)[:k]
