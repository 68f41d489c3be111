"""Toeplitz hashing over GF(2).

A seed of ``m + n - 1`` bits defines the ``n x m`` matrix

    T[i, j] = d[j - i]          for j >= i   (first row)
    T[i, j] = d[m - 1 + i - j]  for i > j    (rest of the first column)

so a seed of one followed by zeros is the identity when ``n == m``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .bitkey import BitKey


@dataclass(frozen=True)
class ToeplitzSeed:
    bits: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if self.n < 1 or self.m < 1:
            raise ValueError("matrix dimensions must be >= 1")
        if self.n > self.m:
            raise ValueError(f"cannot expand: n={self.n} > m={self.m}")
        if b.size != self.m + self.n - 1:
            raise ValueError(f"seed needs {self.m + self.n - 1} bits for a {self.n}x{self.m} matrix, got {b.size}")
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def random(cls, n: int, m: int, rng) -> "ToeplitzSeed":
        return cls(rng.integers(0, 2, size=m + n - 1, dtype=np.uint8), n, m)

    def correlation_vector(self) -> np.ndarray:
        """Vector ``c`` with ``T[i, j] = c[j - i + n - 1]``."""
        d = self.bits
        return np.ascontiguousarray(np.concatenate([d[self.m :][::-1], d[: self.m]]))

    def matrix(self) -> np.ndarray:
        c = self.correlation_vector()
        i = np.arange(self.n)[:, None]
        j = np.arange(self.m)[None, :]
        return c[j - i + self.n - 1]


def toeplitz_hash(bits: np.ndarray, seed: ToeplitzSeed, backend=None) -> np.ndarray:
    x = np.ascontiguousarray(bits, dtype=np.uint8)
    if x.size != seed.m:
        raise ValueError(f"seed is for {seed.m}-bit inputs, got {x.size} bits")
    return kernels.get_backend(backend).toeplitz_mul(seed.correlation_vector(), x, seed.n)


def privacy_amplify(key: BitKey, out_len: int, seed: ToeplitzSeed) -> BitKey:
    """Compress ``key`` to ``out_len`` bits with the Toeplitz matrix of ``seed``."""
    if out_len > key.length:
        raise ValueError("output cannot be longer than the input key")
    if seed.n != out_len or seed.m != key.length:
        raise ValueError(
            f"seed describes a {seed.n}x{seed.m} matrix, need {out_len}x{key.length}"
        )
    return BitKey(toeplitz_hash(key.bits, seed))


def collision_probe(n: int, trials: int, rng, m: int | None = None, identical: bool = False) -> float:
    """Empirical collision rate of random Toeplitz hashes on distinct inputs.

    Each trial draws a fresh seed and two distinct ``m``-bit inputs; a
    collision is ``T a1 == T a2``, i.e. ``T (a1 ^ a2) == 0``.  With
    ``identical=True`` both inputs are the same (always a collision).
    """
    if not 1 <= n <= 20:
        raise ValueError("collision probe supports 1 <= n <= 20")
    m = m or max(2 * n, 16)
    hits = 0
    batch = max(1, min(trials, 4_000_000 // (n * m)))
    i_idx = np.arange(n)[:, None]
    j_idx = np.arange(m)[None, :]
    gather = j_idx - i_idx + n - 1
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        a1 = rng.integers(0, 2, size=(b, m), dtype=np.uint8)
        if identical:
            delta = np.zeros_like(a1)
        else:
            a2 = rng.integers(0, 2, size=(b, m), dtype=np.uint8)
            same = np.all(a1 == a2, axis=1)
            while same.any():
                a2[same] = rng.integers(0, 2, size=(int(same.sum()), m), dtype=np.uint8)
                same = np.all(a1 == a2, axis=1)
            delta = a1 ^ a2
        # a uniform seed is a uniform correlation vector
        c = rng.integers(0, 2, size=(b, m + n - 1), dtype=np.uint8)
        t = c[:, gather]
        y = np.einsum("bij,bj->bi", t.astype(np.int32), delta.astype(np.int32)) & 1
        hits += int(np.count_nonzero(~y.any(axis=1)))
        done += b
    return hits / trials
