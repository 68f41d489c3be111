"""Syndrome-based LDPC reconciliation.

Alice discloses the syndrome of her block; Bob runs sum-product decoding
on his own bits, initialized only with the block-averaged error rate, to
find the word with Alice's syndrome.  A 64-bit Toeplitz hash comparison
then confirms the result; blocks that fail are flagged for discarding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .. import kernels
from ..secrecy import binary_entropy
from .bitkey import BitKey
from .toeplitz import ToeplitzSeed, toeplitz_hash

MAX_ITER = 50
HASH_BITS = 64


class RateInsufficient(ValueError):
    """The code discloses too little to correct the estimated error rate."""


def ec_leakage(f: float, p_err: float) -> float:
    """Bits disclosed per key bit by error correction with efficiency ``f``."""
    if f < 1:
        raise ValueError("efficiency f must be >= 1")
    if not 0 <= p_err <= 1:
        raise ValueError("p_err must lie in [0, 1]")
    return f * binary_entropy(p_err)


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Parity-check code with constant column weight.

    Row weights differ by at most one, so for rate 0.2 and column weight 3
    the checks have weight 3 or 4.
    """

    length: int
    n_checks: int
    column_weight: int
    seed: int
    check_ptr: np.ndarray = field(repr=False)
    edge_var: np.ndarray = field(repr=False)
    var_ptr: np.ndarray = field(repr=False)
    var_edges: np.ndarray = field(repr=False)

    @classmethod
    def regular(cls, length: int, rate: float, column_weight: int = 3, seed: int = 0) -> "LdpcCode":
        if not 0 < rate < 1:
            raise ValueError("code rate must lie in (0, 1)")
        m = int(round(length * (1.0 - rate)))
        if m < column_weight or m >= length:
            raise ValueError(f"cannot build a {length}-bit code with {m} checks and column weight {column_weight}")
        rng = np.random.default_rng(seed)
        n_edges = column_weight * length
        deg = np.full(m, n_edges // m)
        deg[: n_edges % m] += 1
        sockets = np.repeat(np.arange(m), deg)
        rng.shuffle(sockets)
        cols = sockets.reshape(length, column_weight)
        cols = _untangle(cols, rng)
        rows = cols.ravel()
        var = np.repeat(np.arange(length), column_weight)
        order = np.lexsort((var, rows))
        rows, var = rows[order], var[order]
        check_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=m), out=check_ptr[1:])
        var_edges = np.argsort(var, kind="stable").astype(np.int64)
        var_ptr = np.arange(0, n_edges + 1, column_weight, dtype=np.int64)
        return cls(length, m, column_weight, seed, check_ptr, var.astype(np.int64), var_ptr, var_edges)

    @property
    def rate(self) -> float:
        return 1.0 - self.n_checks / self.length

    @property
    def row_weights(self) -> np.ndarray:
        return np.diff(self.check_ptr)

    @property
    def column_weights(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.length)

    @property
    def correctable_threshold(self) -> float:
        """Error rate at which h2(p) equals the disclosed fraction."""
        frac = self.n_checks / self.length
        if frac >= 1:
            return 0.5
        return float(optimize.brentq(lambda p: binary_entropy(p) - frac, 1e-15, 0.5))

    def parity_matrix(self) -> np.ndarray:
        h = np.zeros((self.n_checks, self.length), dtype=np.uint8)
        rows = np.repeat(np.arange(self.n_checks), self.row_weights)
        h[rows, self.edge_var] = 1
        return h

    def syndrome(self, bits) -> np.ndarray:
        b = np.asarray(bits, dtype=np.int64)
        return (np.add.reduceat(b[self.edge_var], self.check_ptr[:-1]) & 1).astype(np.uint8)


def _untangle(cols: np.ndarray, rng) -> np.ndarray:
    """Swap sockets until no column hits the same check twice."""
    cols = cols.copy()
    n, w = cols.shape
    for _ in range(1000):
        srt = np.sort(cols, axis=1)
        bad = np.flatnonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))
        if bad.size == 0:
            return cols
        for j in bad:
            row = cols[j]
            for k in range(w):
                if np.count_nonzero(row == row[k]) > 1:
                    for _attempt in range(100):
                        j2, k2 = int(rng.integers(n)), int(rng.integers(w))
                        a, b = cols[j, k], cols[j2, k2]
                        if j2 != j and b not in cols[j] and a not in cols[j2]:
                            cols[j, k], cols[j2, k2] = b, a
                            break
                    break
    raise RuntimeError("could not build a parity-check matrix without repeated entries")


def split_blocks(bits, block_len: int):
    """Full ``block_len`` blocks of ``bits``; the remainder is dropped."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size // block_len
    return [bits[i * block_len : (i + 1) * block_len] for i in range(n)]


def verify_keys(alice: BitKey, candidate: BitKey, seed: ToeplitzSeed) -> bool:
    """Compare short Toeplitz hashes of two blocks."""
    return bool(np.array_equal(toeplitz_hash(alice.bits, seed), toeplitz_hash(candidate.bits, seed)))


@dataclass(frozen=True)
class ReconcileResult:
    corrected: BitKey
    disclosed_bits: int
    success: bool
    iterations: int
    converged: bool


def reconcile(
    alice: BitKey,
    bob: BitKey,
    code: LdpcCode,
    p_err_estimate: float,
    rng=None,
    max_iter: int = MAX_ITER,
    hash_bits: int = HASH_BITS,
    backend: str | None = None,
) -> ReconcileResult:
    """Correct ``bob`` towards ``alice`` using Alice's syndrome.

    ``rng`` supplies the public seed of the verification hash.  The hash
    bits count towards ``disclosed_bits`` whenever the hash is exchanged.
    """
    if alice.length != bob.length:
        raise ValueError("keys must have equal length")
    if alice.length != code.length:
        raise ValueError(f"blocks must be padded to the code length {code.length}, got {alice.length}")
    if not 0 <= p_err_estimate < 0.5:
        raise RateInsufficient(f"error rate {p_err_estimate} leaves no information to reconcile")
    if p_err_estimate >= code.correctable_threshold:
        raise RateInsufficient(
            f"error rate {p_err_estimate:.4f} exceeds what a rate-{code.rate:.3f} code can correct "
            f"(threshold {code.correctable_threshold:.4f})"
        )
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    p = min(max(p_err_estimate, 1e-12), 0.5 - 1e-12)
    syn = code.syndrome(alice.bits)
    llr = (1.0 - 2.0 * bob.bits.astype(np.float64)) * math.log((1.0 - p) / p)
    kern = kernels.get_backend(backend)
    hard, converged, iters = kern.bp_decode(
        code.check_ptr, code.edge_var, code.var_ptr, code.var_edges, syn, np.ascontiguousarray(llr), max_iter
    )
    corrected = BitKey(hard)
    disclosed = code.n_checks
    success = False
    if converged:
        h = min(hash_bits, code.length)
        seed = ToeplitzSeed.random(h, code.length, rng)
        disclosed += h
        success = verify_keys(alice, corrected, seed)
    return ReconcileResult(corrected, int(disclosed), bool(success), int(iters), bool(converged))
